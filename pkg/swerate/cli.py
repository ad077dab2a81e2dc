"""Command-line dispatch: check-green, skeleton, invert, rate, converge, mc, selftest.

Exit codes: 0 success, 1 domain error, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from . import Utils
from .StudyLogger import StudyLogger, read_table
from .exceptions import ProblemConfigError, SweRateError
from .green import check_green_bounds, pdgn0_error
from .grid import SpaceTimeGrid, eigenrelation_error, ibp_check, orthonormality_error
from .inverse import invert_upsilon_n
from .mc import (
    MC_COLUMNS,
    SLOPE_COLUMNS,
    ThresholdEvent,
    default_mc_steps,
    estimate_rare,
    gaussian_ks_check,
    slope_report,
)
from .problem import DEFAULT_SIGMA_FLOOR, PRESET_SOURCES, load_problem, preset, validate_problem
from .rate import (
    RATE_COLUMNS,
    STUDY_COLUMNS,
    OptimizerOptions,
    convergence_study,
    gamma_liminf_probe,
    gradient_check,
    linear_oracle,
    rate_discrete,
)
from .skeleton import (
    BallSampler,
    Control,
    boundedness_suite,
    holder_ratio_max,
    holder_suite,
    lipschitz_suite,
    load_control,
    path_from_rows,
    path_rows,
    save_control,
    sup_error_curve,
    upsilon_n,
    upsilon_n_mild,
    upsilon_reference,
)
from .workers import default_workers

logger = logging.getLogger(__name__)

CONFIG_SCHEMA: Dict[str, Dict[str, Callable[[str], object]]] = {
    "grid": {"stability_fraction": float, "steps_per_node": int},
    "validation": {"range": float, "samples": int, "sigma_floor": float},
    "optimizer": {
        "penalties": Utils.parse_float_list,
        "gtol_factor": float,
        "maxiter": int,
        "multistart": int,
    },
    "mc": {"block_size": int, "samples": int},
    "study": {"n_ref": int, "eps_scale": float, "slack": float},
}

DEFAULT_SETTINGS: Dict[str, Dict[str, object]] = {
    "grid": {"stability_fraction": 0.5, "steps_per_node": 4},
    "validation": {"range": 5.0, "samples": 1001, "sigma_floor": DEFAULT_SIGMA_FLOOR},
    "optimizer": {"penalties": [1e2, 1e3, 1e4], "gtol_factor": 1e-8, "maxiter": 500, "multistart": 0},
    "mc": {"block_size": 1024, "samples": 10000},
    "study": {"n_ref": 64, "eps_scale": 1.0, "slack": 1e-3},
}

SELFTEST_NS = (2, 4, 8, 16, 32)
IDENTITY_TOL = 1e-10


def load_settings(path: Optional[Path]) -> Dict[str, Dict[str, object]]:
    """Defaults overlaid with a config.ini; unknown sections or keys are rejected."""
    settings = {section: dict(values) for section, values in DEFAULT_SETTINGS.items()}
    if path is None:
        return settings
    parser = configparser.ConfigParser(inline_comment_prefixes=('#',), interpolation=None)
    try:
        with open(path, encoding='utf-8') as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ProblemConfigError(f"cannot read config {path}: {exc}") from exc
    for section in parser.sections():
        if section not in CONFIG_SCHEMA:
            raise ProblemConfigError(f"{path}: unknown section [{section}]")
        for key, raw in parser[section].items():
            if key not in CONFIG_SCHEMA[section]:
                raise ProblemConfigError(f"{path}: unknown key {key!r} in [{section}]")
            try:
                settings[section][key] = CONFIG_SCHEMA[section][key](raw)
            except ValueError as exc:
                raise ProblemConfigError(f"{path}: bad value for {section}.{key}: {exc}") from exc
    return settings


@dataclass
class RunConfig:
    command: str
    problem_source: str
    spec: object
    settings: Dict[str, Dict[str, object]]
    options: Dict[str, object] = field(default_factory=dict)
    out: Optional[Path] = None
    seed: int = 0
    workers: int = 1

    def optimizer_options(self) -> OptimizerOptions:
        opt = self.settings["optimizer"]
        multistart = self.options.get("multistart")
        return OptimizerOptions(
            penalties=tuple(opt["penalties"]),
            gtol_factor=float(opt["gtol_factor"]),
            maxiter=int(opt["maxiter"]),
            multistart=int(opt["multistart"] if multistart is None else multistart),
            seed=self.seed,
            sigma_floor=float(self.settings["validation"]["sigma_floor"]),
        )

    def skeleton_grid(self, n: int, m: Optional[int] = None) -> SpaceTimeGrid:
        if m:
            return SpaceTimeGrid(n, m, self.spec.T)
        return SpaceTimeGrid.default(n, self.spec.T, float(self.settings["grid"]["stability_fraction"]))

    def logger_for(self, default_name: str) -> tuple:
        out = self.out or Path("results") / default_name
        params = {"problem": self.problem_source, "seed": self.seed}
        params.update({k: v for k, v in self.options.items() if v is not None})
        return StudyLogger(out.parent, self.command, params), out.name


# --------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--preset", choices=sorted(PRESET_SOURCES), help="built-in problem (default LINEAR)")
    src.add_argument("--problem", type=Path, help="flat key = value problem file")
    p.add_argument("--config", type=Path, help="config.ini with run defaults")
    p.add_argument("--out", type=Path, help="output file; manifest.json goes next to it")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, help="worker processes (default $SWERATE_WORKERS or 1)")
    p.add_argument("--verbose", action="store_true", help="debug logging")


def _float_list(text: str) -> List[float]:
    try:
        values = Utils.parse_float_list(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _int_list(text: str) -> List[int]:
    try:
        values = Utils.parse_int_list(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swerate", description="One-point rate functions of a stochastic wave equation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check-green", help="sampled Green function bound constants")
    _add_common(p)
    p.add_argument("--ns", type=_int_list, default=[4, 8, 16, 32])
    p.add_argument("--jmax", type=int)
    p.add_argument("--samples", type=int, default=1000)

    p = sub.add_parser("skeleton", help="solve the skeleton equation for one control")
    _add_common(p)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--m", type=int)
    control = p.add_mutually_exclusive_group()
    control.add_argument("--control", type=Path, help="control file (header 'n m T', m rows of n values)")
    control.add_argument("--amplitude", type=float, help="constant control value")
    control.add_argument("--radius", type=float, help="random control of norm below this radius")
    p.add_argument("--solver", choices=("strang", "mild", "reference"), default="strang")
    p.add_argument("--nref", type=int, help="resolution for --solver reference and --suites")
    p.add_argument("--suites", action="store_true", help="also run boundedness, Hoelder, Lipschitz and error suites")
    p.add_argument("--ns", type=_int_list, default=[4, 8, 16, 32])

    p = sub.add_parser("invert", help="recover the control of a discrete path")
    _add_common(p)
    p.add_argument("--path", type=Path, help="path table with columns t, x, f, f_t")
    p.add_argument("--roundtrip", type=int, metavar="K", help="invert K random skeleton solutions instead")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--m", type=int)

    p = sub.add_parser("rate", help="I^n(y) by constrained action minimization")
    _add_common(p)
    target = p.add_mutually_exclusive_group(required=True)
    target.add_argument("--y", type=float, help="target value")
    target.add_argument("--dy", type=float, help="target as offset from the deterministic value")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--m", type=int)
    p.add_argument("--multistart", type=int)
    p.add_argument("--gradient-check", action="store_true")

    p = sub.add_parser("converge", help="I^n(y) against a fine reference over several n")
    _add_common(p)
    target = p.add_mutually_exclusive_group(required=True)
    target.add_argument("--ys", type=_float_list)
    target.add_argument("--dys", type=_float_list, help="offsets from the deterministic value at n_ref")
    p.add_argument("--ns", type=_int_list, default=[4, 8, 16, 32])
    p.add_argument("--nref", type=int)
    p.add_argument("--multistart", type=int)
    p.add_argument("--probe", action="store_true", help="add the liminf probe for each y")

    p = sub.add_parser("mc", help="crude Monte Carlo estimates of -eps log P")
    _add_common(p)
    target = p.add_mutually_exclusive_group(required=True)
    target.add_argument("--y", type=float)
    target.add_argument("--dy", type=float)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--mmc", type=int, help="Monte Carlo time steps (default 4nT)")
    p.add_argument("--eps", type=_float_list, required=True, help="comma separated, decreasing")
    p.add_argument("--side", choices=("ge", "le"))
    p.add_argument("--samples", type=int)
    p.add_argument("--ks", action="store_true", help="Gaussian Kolmogorov-Smirnov check (LINEAR class)")
    p.add_argument("--rate", action="store_true", help="compare with the optimizer I^n(y) on the MC grid")

    p = sub.add_parser("selftest", help="exact identities and small round trips")
    _add_common(p)
    return parser


def build_run_config(args: argparse.Namespace) -> RunConfig:
    settings = load_settings(args.config)
    if args.problem:
        spec = load_problem(args.problem)
        source = str(args.problem)
    else:
        spec = preset(args.preset or "LINEAR")
        source = spec.name
    reserved = {"command", "preset", "problem", "config", "out", "seed", "workers", "verbose"}
    options = {k: v for k, v in vars(args).items() if k not in reserved}
    workers = args.workers if args.workers is not None else default_workers()
    if workers < 1:
        raise ProblemConfigError("--workers must be at least 1")
    if args.command == "invert" and not (args.path or args.roundtrip):
        raise ProblemConfigError("invert needs --path or --roundtrip")
    return RunConfig(args.command, source, spec, settings, options, args.out, args.seed, workers)


# --------------------------------------------------------------------------
# commands


def _validate(run: RunConfig) -> None:
    val = run.settings["validation"]
    report = validate_problem(run.spec, float(val["range"]), int(val["samples"]), float(val["sigma_floor"]))
    if not report.boundary_ok:
        raise ProblemConfigError("; ".join(report.failures))
    if not report.sigma_floor_ok:
        logger.warning("min|sigma| = %.3g on the sampled range; inversions may fail", report.min_abs_sigma)


def cmd_check_green(run: RunConfig) -> int:
    opts = run.options
    study, name = run.logger_for("green_bounds.csv")
    report = check_green_bounds(opts["ns"], opts["jmax"], opts["samples"], run.spec.T, run.seed)
    rows = [{"bound_name": r.bound_name, "n": r.n, "estimate": r.estimate, "samples": r.samples} for r in report.rows]
    study.write(name, rows, ["bound_name", "n", "estimate", "samples"])
    study.close()
    if not report.finite:
        logger.error("non-finite bound estimate")
        return 1
    return 0


def _control_for(run: RunConfig, grid: SpaceTimeGrid) -> Control:
    opts = run.options
    if opts.get("control"):
        return load_control(opts["control"])
    if opts.get("radius") is not None:
        return BallSampler(opts["radius"], run.seed).sample(grid)
    return Control.constant(grid, opts.get("amplitude") or 0.0)


def cmd_skeleton(run: RunConfig) -> int:
    opts = run.options
    _validate(run)
    grid = run.skeleton_grid(opts["n"], opts["m"])
    h = _control_for(run, grid)
    solver = opts["solver"]
    if solver == "mild":
        path = upsilon_n_mild(run.spec, h)
    elif solver == "reference":
        path = upsilon_reference(run.spec, h, opts["nref"] or 8 * h.grid.n).restrict(h.grid)
    else:
        path = upsilon_n(run.spec, h)
    logger.info("%s solution: f(T, x0) = %.12g, sup|f| = %.6g", solver, path.terminal(run.spec.x0), path.sup_norm())
    study, name = run.logger_for("skeleton.csv")
    study.write(name, [dict(zip(("t", "x", "f", "f_t"), row)) for row in path_rows(path)], ["t", "x", "f", "f_t"])
    if opts["suites"]:
        ns = opts["ns"]
        n_ref = opts["nref"] or 4 * max(ns)
        rows = []
        for report in (
            boundedness_suite(run.spec, ns=ns, count=10, seed=run.seed),
            holder_suite(run.spec, ns=ns, count=3, seed=run.seed),
            lipschitz_suite(run.spec, n_ref=max(ns), seed=run.seed),
        ):
            rows += [{"suite": report.name, "n": n, "value": v, "samples": report.samples} for n, v in report.by_n.items()]
        curve = sup_error_curve(run.spec, BallSampler(1.0, run.seed).sample(SpaceTimeGrid.default(min(ns), run.spec.T)),
                                ns, n_ref)
        rows += [{"suite": "sup_error", "n": n, "value": e, "samples": 1} for n, e in zip(curve.ns, curve.errors)]
        rows.append({"suite": "sup_error_order", "n": n_ref, "value": curve.order, "samples": 1})
        study.write("suites.csv", rows, ["suite", "n", "value", "samples"])
    study.close()
    return 0


def cmd_invert(run: RunConfig) -> int:
    opts = run.options
    floor = float(run.settings["validation"]["sigma_floor"])
    study, name = run.logger_for("invert.csv")
    if opts["roundtrip"]:
        grid = run.skeleton_grid(opts["n"], opts["m"])
        sampler = BallSampler(1.0, run.seed)
        rows = []
        for idx in range(opts["roundtrip"]):
            h = sampler.sample(grid, idx)
            back = invert_upsilon_n(run.spec, upsilon_n(run.spec, h), floor)
            rows.append({"index": idx, "norm": h.norm, "l2_error": (back - h).norm})
        logger.info("round trip: max L2 error %.3e", max(r["l2_error"] for r in rows))
        study.write(name, rows, ["index", "norm", "l2_error"])
    else:
        rows = [[float(r[c]) for c in ("t", "x", "f", "f_t")] for r in read_table(opts["path"])]
        h = invert_upsilon_n(run.spec, path_from_rows(rows), floor)
        logger.info("recovered control: action %.12g", h.action())
        out = study.out_dir / Path(name).with_suffix(".control").name
        study.out_dir.mkdir(parents=True, exist_ok=True)
        save_control(h, out)
        study.manifest.record_output(out)
    study.close()
    return 0


def cmd_rate(run: RunConfig) -> int:
    opts = run.options
    _validate(run)
    grid = run.skeleton_grid(opts["n"], opts["m"])
    y = opts["y"]
    if y is None:
        y = upsilon_n(run.spec, Control.zeros(grid)).terminal(run.spec.x0) + opts["dy"]
    started = time.perf_counter()
    result = rate_discrete(run.spec, grid, y, run.optimizer_options())
    result.holder_seminorm = holder_ratio_max(result.f_star)
    study, name = run.logger_for("rate.csv")
    study.cell_done({"y": y, "n": grid.n, "m": grid.m}, started)
    study.write(name, [result.row()], RATE_COLUMNS)
    if run.spec.is_linear_class():
        oracle = linear_oracle(run.spec, y, n=grid.n)
        logger.info("I^n(y) = %.10g, linear closed form %.10g (relative gap %.2e)",
                    result.value, oracle.value, Utils.relative_gap(result.value, oracle.value))
    else:
        logger.info("I^n(y) = %.10g (%s)", result.value, result.feasibility_method)
    if opts["gradient_check"]:
        check = gradient_check(run.spec, result.h_star, seed=run.seed)
        logger.info("adjoint vs central differences: %.3e", check.max_relative_error)
        rows = [{"i": i, "k": k, "adjoint": g, "central": fd} for i, k, g, fd in check.entries]
        study.write("gradient.csv", rows, ["i", "k", "adjoint", "central"])
    study.close()
    return 0


def cmd_converge(run: RunConfig) -> int:
    opts = run.options
    _validate(run)
    n_ref = opts["nref"] or int(run.settings["study"]["n_ref"])
    ys = opts["ys"]
    if ys is None:
        steps = int(run.settings["grid"]["steps_per_node"])
        ref_grid = SpaceTimeGrid(n_ref, int(math.ceil(steps * n_ref * run.spec.T - 1e-9)), run.spec.T)
        mu = upsilon_n(run.spec, Control.zeros(ref_grid)).terminal(run.spec.x0)
        ys = [mu + d for d in opts["dys"]]
    study, name = run.logger_for("converge.csv")
    table = convergence_study(run.spec, ys, opts["ns"], n_ref, run.optimizer_options(),
                              int(run.settings["grid"]["steps_per_node"]), run.workers)
    for row in table.rows:
        study.manifest.record_cell({"y": row["y"], "n": row["n"], "m": row["m"]}, row.get("seconds", 0.0))
    study.write(name, table.table(), STUDY_COLUMNS)
    for y in ys:
        logger.info("y=%.6g: gaps %s, equi-coercive %s", y, table.gaps(y), table.equi_coercive(y))
    if opts["probe"]:
        cfg = run.settings["study"]
        rows = []
        for y in ys:
            report = gamma_liminf_probe(run.spec, y, opts["ns"], n_ref=n_ref, eps_scale=float(cfg["eps_scale"]),
                                        slack=float(cfg["slack"]), opts=run.optimizer_options())
            rows += [{"y": y, "n": e.n, "value": e.value, "margin": e.margin, "note": e.note} for e in report.entries]
        study.write("probe.csv", rows, ["y", "n", "value", "margin", "note"])
    study.close()
    return 1 if table.errors() else 0


def cmd_mc(run: RunConfig) -> int:
    opts = run.options
    _validate(run)
    n = opts["n"]
    m_mc = opts["mmc"] or default_mc_steps(n, run.spec.T)
    grid = SpaceTimeGrid(n, m_mc, run.spec.T)
    mu = upsilon_n(run.spec, Control.zeros(grid)).terminal(run.spec.x0)
    y = opts["y"] if opts["y"] is not None else mu + opts["dy"]
    side = opts["side"] or ("ge" if y >= mu else "le")
    samples = opts["samples"] or int(run.settings["mc"]["samples"])
    block = int(run.settings["mc"]["block_size"])
    event = ThresholdEvent(y, side)
    study, name = run.logger_for("mc.csv")
    estimates = []
    for eps in opts["eps"]:
        started = time.perf_counter()
        estimates.append(estimate_rare(run.spec, grid, eps, event, samples, run.seed, block, run.workers))
        study.cell_done({"eps": eps, "y": y, "side": side}, started)
    study.write(name, [e.row() for e in estimates], MC_COLUMNS)
    rate_value = None
    if opts["rate"]:
        started = time.perf_counter()
        rate_value = rate_discrete(run.spec, grid, y, run.optimizer_options()).value
        study.cell_done({"rate": "optimizer", "y": y, "n": n, "m": m_mc}, started)
    report = slope_report(run.spec, grid, y, estimates, rate_value)
    report.log_comparison(run.spec.name)
    if report.target() is not None:
        study.write("slope.csv", report.comparison_rows(), SLOPE_COLUMNS)
    if opts["ks"]:
        ks = gaussian_ks_check(run.spec, grid, opts["eps"][0], samples, run.seed, run.workers)
        study.write("ks.csv", [{"eps": opts["eps"][0], "statistic": ks.statistic, "pvalue": ks.pvalue,
                                "mean": ks.mean, "sd": ks.sd}], ["eps", "statistic", "pvalue", "mean", "sd"])
    study.close()
    return 0


def selftest_rows(seed: int = 0) -> List[Dict[str, object]]:
    rng = np.random.default_rng(seed)
    rows = []
    for n in SELFTEST_NS:
        u = np.zeros(n + 1)
        v = np.zeros(n + 1)
        u[1:-1], v[1:-1] = rng.standard_normal(n - 1), rng.standard_normal(n - 1)
        rows.append({"check": "eigenrelation", "n": n, "error": eigenrelation_error(n), "tolerance": IDENTITY_TOL})
        rows.append({"check": "ibp", "n": n, "error": ibp_check(n, u, v), "tolerance": IDENTITY_TOL})
        rows.append({"check": "orthonormality", "n": n, "error": orthonormality_error(n), "tolerance": IDENTITY_TOL})
        rows.append({"check": "pdgn0", "n": n, "error": pdgn0_error(n, 5, seed), "tolerance": IDENTITY_TOL})
    for name in PRESET_SOURCES:
        spec = preset(name)
        grid = SpaceTimeGrid(4, 256, spec.T)
        h = BallSampler(1.0, seed).sample(grid)
        back = invert_upsilon_n(spec, upsilon_n(spec, h))
        rows.append({"check": f"roundtrip_{name}", "n": 4, "error": (back - h).norm, "tolerance": 1e-2})
    return rows


def cmd_selftest(run: RunConfig) -> int:
    rows = selftest_rows(run.seed)
    failed = [r for r in rows if not (math.isfinite(r["error"]) and r["error"] <= r["tolerance"])]
    for r in rows:
        logger.info("%-22s n=%-3d error %.3e", r["check"], r["n"], r["error"])
    if run.out:
        study, name = run.logger_for("selftest.csv")
        study.write(name, rows, ["check", "n", "error", "tolerance"])
        study.close()
    if failed:
        logger.error("selftest failed: %s", ", ".join(f"{r['check']}(n={r['n']})" for r in failed))
        return 1
    logger.info("selftest passed (%d checks)", len(rows))
    return 0


COMMANDS: Dict[str, Callable[[RunConfig], int]] = {
    "check-green": cmd_check_green,
    "skeleton": cmd_skeleton,
    "invert": cmd_invert,
    "rate": cmd_rate,
    "converge": cmd_converge,
    "mc": cmd_mc,
    "selftest": cmd_selftest,
}


def dispatch(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    try:
        run = build_run_config(args)
    except ProblemConfigError as exc:
        logger.error("%s", exc)
        return 2
    try:
        return COMMANDS[run.command](run)
    except (SweRateError, ValueError) as exc:
        logger.error("%s failed: %s", run.command, exc)
        return 1
    except OSError as exc:
        logger.error("%s: %s", run.command, exc)
        return 1

"""One-point rate functions: action, constrained minimization for I^n(y),
the linear closed form, the convergence study and the liminf probe.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from . import Utils
from .exceptions import BumpSupportError, NotLinearClassError, SweRateError
from .green import (
    DiscreteGreen,
    continuous_free_solution,
    initial_terms_discrete,
    linear_representer,
    representer_norm_sq_continuous,
    representer_norm_sq_discrete,
)
from .grid import SpaceTimeGrid
from .inverse import invert_upsilon_n, modified_control, modify_terminal
from .problem import DEFAULT_SIGMA_FLOOR
from .skeleton import (
    BallSampler,
    Control,
    DiscretePath,
    holder_ratio_max,
    require_sigma_floor,
    terminal_value_and_gradient,
    upsilon_n,
)
from .workers import run_cells

logger = logging.getLogger(__name__)

DEFAULT_J_MAX = 512
FEASIBILITY_TOL = 1e-12

RATE_COLUMNS = [
    "y",
    "n",
    "m",
    "value",
    "constraint_residual_prefix_modification",
    "iterations",
    "feasibility_method",
    "holder_seminorm",
]
STUDY_COLUMNS = RATE_COLUMNS + ["reference", "gap", "error"]


@dataclass(frozen=True)
class OptimizerOptions:
    penalties: Tuple[float, ...] = (1e2, 1e3, 1e4)
    gtol_factor: float = 1e-8
    maxiter: int = 500
    multistart: int = 0
    seed: int = 0
    sigma_floor: float = DEFAULT_SIGMA_FLOOR
    warm_start: bool = True


@dataclass
class RateResult:
    y: float
    n: int
    m: int
    value: float
    h_star: Control
    f_star: DiscretePath
    iterations: int
    penalty_stages: int
    constraint_residual: float
    feasibility_method: str
    converged: bool
    deterministic_value: float
    holder_seminorm: float = float("nan")

    def row(self) -> Dict[str, object]:
        return {
            "y": self.y,
            "n": self.n,
            "m": self.m,
            "value": self.value,
            "constraint_residual_prefix_modification": self.constraint_residual,
            "iterations": self.iterations,
            "feasibility_method": self.feasibility_method,
            "holder_seminorm": self.holder_seminorm,
        }


def action(h: Control) -> float:
    return h.action()


# --------------------------------------------------------------------------
# minimization


def warm_start(spec, grid: SpaceTimeGrid, y: float, f0: DiscretePath) -> Control:
    """Minimum-norm control of the linearised constraint, divided by sigma along f0."""
    r = linear_representer(grid, spec.x0)
    norm_sq = float(np.sum(r ** 2)) * grid.cell_area
    if norm_sq == 0.0:
        return Control.zeros(grid)
    sig = spec.sigma(f0.midpoint_positions()[:, : grid.n])
    values = (y - f0.terminal(spec.x0)) * r / (norm_sq * sig)
    values[:, 0] = 0.0
    return Control(grid, values)


class _PenaltyProblem:
    """Scaled variables z = h sqrt(dt/n) on cells 1..n-1, so that |z|^2 / 2 is the action."""

    def __init__(self, spec, grid: SpaceTimeGrid, y: float):
        self.spec = spec
        self.grid = grid
        self.y = y
        self.scale = math.sqrt(grid.cell_area)
        self.shape = (grid.m, grid.n - 1)

    def to_control(self, z: np.ndarray) -> Control:
        values = np.zeros((self.grid.m, self.grid.n))
        values[:, 1:] = z.reshape(self.shape) / self.scale
        return Control(self.grid, values)

    def from_control(self, h: Control) -> np.ndarray:
        return h.values[:, 1:].ravel() * self.scale

    def objective(self, z: np.ndarray, lam: float, mu: float):
        value, grad, _ = terminal_value_and_gradient(self.spec, self.to_control(z))
        c = value - self.y
        obj = 0.5 * float(z @ z) - lam * c + 0.5 * mu * c * c
        g = z + (mu * c - lam) * grad[:, 1:].ravel() / self.scale
        return obj, g

    def residual(self, z: np.ndarray) -> float:
        return upsilon_n(self.spec, self.to_control(z)).terminal(self.spec.x0) - self.y


def _penalty_solve(spec, grid: SpaceTimeGrid, y: float, h0: Control, opts: OptimizerOptions):
    problem = _PenaltyProblem(spec, grid, y)
    z = problem.from_control(h0)
    lam = 0.0
    iterations = 0
    converged = True
    for stage, mu in enumerate(opts.penalties, start=1):
        gtol = opts.gtol_factor * max(1.0, float(np.linalg.norm(z)))
        res = optimize.minimize(
            problem.objective,
            z,
            args=(lam, mu),
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": opts.maxiter, "gtol": gtol, "ftol": 1e-15},
        )
        z = res.x
        iterations += int(res.nit)
        c = problem.residual(z)
        stage_ok = bool(res.success) or float(np.max(np.abs(res.jac))) <= 1e-6 * max(1.0, float(np.linalg.norm(z)))
        converged = stage_ok
        logger.info(
            "penalty stage %d (mu=%g): residual %.3e action %.6g iterations %d%s",
            stage,
            mu,
            c,
            0.5 * float(z @ z),
            res.nit,
            "" if stage_ok else f" [{res.message}]",
        )
        lam -= mu * c
    return problem.to_control(z), iterations, converged


def _finish(spec, grid, y, h_pen: Control, iterations, converged, opts, mu_n) -> RateResult:
    f_tilde = upsilon_n(spec, h_pen)
    residual = f_tilde.terminal(spec.x0) - y
    try:
        f_star, h_closed = modified_control(spec, f_tilde, h_pen, y, spec.x0, opts.sigma_floor)
        method = "penalty-converged" if abs(residual) <= FEASIBILITY_TOL else "modified"
    except BumpSupportError as exc:
        logger.warning("terminal modification unavailable (%s); keeping the penalty solution", exc)
        f_star, h_closed = f_tilde, h_pen
        method = "penalty-converged"
    # the reported control is the exact inverse of the reported path
    h_star = invert_upsilon_n(spec, f_star, opts.sigma_floor)
    logger.debug("closed-form control vs inversion: L2 gap %.3e", (h_star - h_closed).norm)
    return RateResult(
        y=y,
        n=grid.n,
        m=grid.m,
        value=h_star.action(),
        h_star=h_star,
        f_star=f_star,
        iterations=iterations,
        penalty_stages=len(opts.penalties),
        constraint_residual=float(residual),
        feasibility_method=method,
        converged=converged,
        deterministic_value=mu_n,
    )


def rate_discrete(spec, grid: SpaceTimeGrid, y: float, opts: Optional[OptimizerOptions] = None) -> RateResult:
    """I^n(y) = inf 1/2 |h|^2 subject to Upsilon^n(h)(T, x0) = y (an upper bound by construction)."""
    opts = opts or OptimizerOptions()
    if not math.isfinite(y):
        raise ValueError(f"target must be finite, got {y}")
    zero = Control.zeros(grid)
    f0 = upsilon_n(spec, zero)
    require_sigma_floor(spec, f0, opts.sigma_floor)
    mu_n = f0.terminal(spec.x0)
    logger.info("rate_discrete(%s): y=%.6g n=%d m=%d deterministic value %.6g", spec.name, y, grid.n, grid.m, mu_n)
    if y == mu_n:
        return RateResult(y, grid.n, grid.m, 0.0, zero, f0, 0, 0, 0.0, "penalty-converged", True, mu_n)

    starts = [warm_start(spec, grid, y, f0) if opts.warm_start else zero]
    if opts.multistart:
        sampler = BallSampler(max(starts[0].norm, 1.0) * 0.5, opts.seed)
        starts += [starts[0] + sampler.sample(grid, idx) for idx in range(opts.multistart)]

    best: Optional[RateResult] = None
    for idx, h0 in enumerate(starts):
        h_pen, iterations, converged = _penalty_solve(spec, grid, y, h0, opts)
        result = _finish(spec, grid, y, h_pen, iterations, converged, opts, mu_n)
        logger.info("start %d: value %.8g (%s)", idx, result.value, result.feasibility_method)
        if best is None or result.value < best.value:
            best = result
    if not best.converged:
        logger.warning("optimizer did not converge for y=%g n=%d; %.6g is an upper bound", y, grid.n, best.value)
    return best


def rate_reference(spec, y: float, n_ref: int, opts: Optional[OptimizerOptions] = None,
                   m: Optional[int] = None) -> RateResult:
    grid = SpaceTimeGrid(n_ref, m, spec.T) if m else SpaceTimeGrid.default(n_ref, spec.T)
    return rate_discrete(spec, grid, y, opts)


# --------------------------------------------------------------------------
# linear closed form


@dataclass
class LinearOracle:
    value: float
    deterministic_value: float
    norm_sq: float
    sigma: float
    tail_bound: float


def linear_oracle(spec, y: float, n: Optional[int] = None, J_max: Optional[int] = None) -> LinearOracle:
    """(y - mu)^2 / (2 sigma^2 |G_{T-.}(x0, .)|^2); discrete when n is given, else truncated at J_max."""
    if not spec.is_linear_class():
        raise NotLinearClassError(f"{spec.name}: the closed form needs b = 0 and constant sigma")
    sigma = float(spec.sigma(0.0))
    if n is not None:
        mu = initial_terms_discrete(DiscreteGreen(n), spec, spec.T, spec.x0)
        norm_sq, tail = representer_norm_sq_discrete(n, spec.T, spec.x0), 0.0
    else:
        J = J_max or DEFAULT_J_MAX
        mu = continuous_free_solution(spec, spec.T, spec.x0, J)
        norm_sq, tail = representer_norm_sq_continuous(J, spec.T, spec.x0)
    value = (y - mu) ** 2 / (2.0 * sigma ** 2 * norm_sq)
    return LinearOracle(value, mu, norm_sq, sigma, tail)


def rate_linear_oracle(spec, y: float, n: Optional[int] = None, J_max: Optional[int] = None) -> float:
    return linear_oracle(spec, y, n, J_max).value


# --------------------------------------------------------------------------
# diagnostics


@dataclass
class GradientCheck:
    max_relative_error: float
    entries: List[Tuple[int, int, float, float]]


def gradient_check(spec, h: Control, coords: int = 10, step: float = 1e-5, seed: int = 0) -> GradientCheck:
    """Adjoint gradient against central differences on random interior cells."""
    _, grad, _ = terminal_value_and_gradient(spec, h)
    rng = np.random.default_rng(seed)
    grid = h.grid
    floor = 1e-3 * float(np.max(np.abs(grad[:, 1:])))
    worst = 0.0
    entries = []
    for _ in range(coords):
        i, k = int(rng.integers(grid.m)), int(rng.integers(1, grid.n))
        eps = step * max(1.0, abs(h.values[i, k]))
        bump = np.zeros_like(h.values)
        bump[i, k] = eps
        plus = upsilon_n(spec, Control(grid, h.values + bump)).terminal(spec.x0)
        minus = upsilon_n(spec, Control(grid, h.values - bump)).terminal(spec.x0)
        fd = (plus - minus) / (2.0 * eps)
        rel = abs(grad[i, k] - fd) / max(abs(fd), floor, 1e-300)
        worst = max(worst, rel)
        entries.append((i, k, float(grad[i, k]), float(fd)))
    logger.info("gradient check (%s): max relative error %.3e", spec.name, worst)
    return GradientCheck(worst, entries)


def feasible_perturbation_deltas(spec, result: RateResult, count: int = 20, size: float = 1e-2, seed: int = 0,
                                 sigma_floor: float = DEFAULT_SIGMA_FLOOR) -> List[float]:
    """Action change of randomly perturbed controls pulled back onto the constraint."""
    grid = result.h_star.grid
    sampler = BallSampler(size, seed)
    deltas = []
    for idx in range(count):
        h_p = result.h_star + sampler.sample(grid, idx)
        f = modify_terminal(upsilon_n(spec, h_p), result.y, spec.x0)
        h = invert_upsilon_n(spec, f, sigma_floor)
        deltas.append(h.action() - result.value)
    return deltas


# --------------------------------------------------------------------------
# convergence study


@dataclass
class StudyTable:
    n_ref: int
    rows: List[Dict[str, object]] = field(default_factory=list)

    def _rows(self, y: float, with_reference: bool = False):
        for r in self.rows:
            if r["y"] != y or r.get("error"):
                continue
            if r["n"] == self.n_ref and not with_reference:
                continue
            yield r

    def values(self, y: float, column: str = "value") -> Dict[int, float]:
        return {int(r["n"]): float(r[column]) for r in self._rows(y)}

    def gaps(self, y: float) -> List[float]:
        return [float(r["gap"]) for r in self._rows(y)]

    def errors(self) -> List[Dict[str, object]]:
        return [r for r in self.rows if r.get("error")]

    def equi_coercive(self, y: float, factor: float = 2.0) -> bool:
        """Sampled C^1/2 semi-norms of the minimizing paths stay within one band across n."""
        return Utils.stable_within((float(r["holder_seminorm"]) for r in self._rows(y, True)), factor)

    def table(self) -> List[Dict[str, object]]:
        return [{k: r.get(k, "") for k in STUDY_COLUMNS} for r in self.rows]


def _study_cell(cell):
    spec, y, n, m, opts = cell
    started = time.perf_counter()
    try:
        result = rate_discrete(spec, SpaceTimeGrid(n, m, spec.T), y, opts)
    except SweRateError as exc:
        logger.error("study cell y=%g n=%d failed: %s", y, n, exc)
        return {"y": y, "n": n, "m": m, "error": str(exc), "seconds": time.perf_counter() - started}
    row = result.row()
    row["holder_seminorm"] = holder_ratio_max(result.f_star, pairs=4000, seed=0)
    row["error"] = ""
    row["seconds"] = time.perf_counter() - started
    return row


def convergence_study(
    spec,
    ys: Sequence[float],
    ns: Sequence[int],
    n_ref: int,
    opts: Optional[OptimizerOptions] = None,
    steps_per_node: int = 4,
    workers: Optional[int] = None,
) -> StudyTable:
    """I^n(y) for every (y, n) against I^{n_ref}(y); cells run independently."""
    opts = opts or OptimizerOptions()
    if not ns or list(ns) != sorted(set(ns)) or ns[-1] >= n_ref:
        raise ValueError("resolutions must be increasing and below n_ref")

    def m_for(n: int) -> int:
        return int(math.ceil(steps_per_node * n * spec.T - 1e-9))

    resolutions = list(ns) + [n_ref]
    cells = [(spec, y, n, m_for(n), opts) for y in ys for n in resolutions]
    results = run_cells(_study_cell, cells, workers)
    table = StudyTable(n_ref)
    for block, y in enumerate(ys):
        rows = results[block * len(resolutions) : (block + 1) * len(resolutions)]
        ref_row = rows[-1]
        ref = float("nan") if ref_row.get("error") else float(ref_row["value"])
        for row in rows:
            row = dict(row)
            row["reference"] = ref
            if row.get("error") or not math.isfinite(ref):
                row["gap"] = float("nan")
            else:
                row["gap"] = abs(float(row["value"]) - ref)
            table.rows.append(row)
        logger.info("study y=%g: gaps %s", y, ["%.3e" % g for g in table.gaps(y)])
    return table


# --------------------------------------------------------------------------
# liminf probe


@dataclass
class ProbeEntry:
    n: int
    value: float
    margin: float
    note: str = ""


@dataclass
class ProbeReport:
    y: float
    reference_value: float
    entries: List[ProbeEntry]
    slack: float

    @property
    def tail_margin(self) -> float:
        usable = [e.margin for e in self.entries if math.isfinite(e.margin)]
        if not usable:
            return float("nan")
        return min(usable[len(usable) // 2 :])

    @property
    def passed(self) -> bool:
        return math.isfinite(self.tail_margin) and self.tail_margin >= -self.slack


def gamma_liminf_probe(
    spec,
    y: float,
    ns: Sequence[int],
    reference: Optional[RateResult] = None,
    n_ref: Optional[int] = None,
    eps_scale: float = 1.0,
    slack: float = 1e-3,
    opts: Optional[OptimizerOptions] = None,
) -> ProbeReport:
    """J^n_y along f_n -> f*: restrictions of the reference minimizer, perturbed by eps_scale/n and re-feasibilised."""
    opts = opts or OptimizerOptions()
    if reference is None:
        reference = rate_reference(spec, y, n_ref or 2 * max(ns), opts)
    fine = reference.f_star
    T = fine.grid.T
    entries = []
    for n in ns:
        factor = fine.grid.n // n if fine.grid.n % n == 0 else 0
        if not factor or fine.grid.m % factor:
            entries.append(ProbeEntry(n, float("nan"), float("nan"), "not a subgrid of the reference"))
            continue
        coarse = SpaceTimeGrid(n, fine.grid.m // factor, T)
        f_n = fine.restrict(coarse)
        eps_n = eps_scale / n
        if eps_n:
            shape = np.sin(2.0 * np.pi * coarse.nodes)
            shape[0] = shape[-1] = 0.0
            t = coarse.times[:, None]
            f_n = DiscretePath(coarse, f_n.pos + eps_n * (t / T) ** 2 * shape, f_n.vel + eps_n * 2.0 * t / T ** 2 * shape)
        try:
            f_n = modify_terminal(f_n, y, spec.x0)
            value = invert_upsilon_n(spec, f_n, opts.sigma_floor).action()
        except SweRateError as exc:
            entries.append(ProbeEntry(n, float("nan"), float("nan"), f"skipped: {exc}"))
            continue
        entries.append(ProbeEntry(n, value, value - reference.value))
    report = ProbeReport(y, reference.value, entries, slack)
    logger.info("liminf probe (%s, y=%g): tail margin %.3e", spec.name, y, report.tail_margin)
    return report

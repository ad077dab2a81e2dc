"""Crude Monte Carlo for the noise-driven FDM system and empirical LDP slopes.

Every sample block owns a Philox stream keyed by (seed, block), so the
value of sample i does not depend on the total sample count or on how
blocks are distributed over workers.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy import stats

from . import Utils
from .exceptions import GridError
from .green import representer_norm_sq_discrete, terminal_weights
from .grid import SpaceTimeGrid
from .rate import rate_linear_oracle
from .skeleton import (
    Control,
    check_horizon,
    check_growth,
    initial_state,
    rotation,
    strang_step,
    upsilon_n,
)
from .workers import run_cells

logger = logging.getLogger(__name__)

MIN_SAMPLES = 1000
DEFAULT_BLOCK = 1024
KS_LEVEL = 0.01

MC_COLUMNS = ["eps", "samples", "hits", "phat", "lo", "hi", "eps_log"]


def default_mc_steps(n: int, T: float, stability_fraction: float = 1.0) -> int:
    """Steps giving dt_mc = stability_fraction / (4n)."""
    return int(math.ceil(4 * n * T / stability_fraction - 1e-9))


@dataclass(frozen=True)
class NoisePlan:
    seed: int
    n: int
    m_mc: int
    block_size: int = DEFAULT_BLOCK

    def __post_init__(self):
        if self.block_size < 1:
            raise ValueError("block_size must be positive")

    def generator(self, block: int) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(self.seed, spawn_key=(block,))))

    def blocks(self, samples: int) -> List[tuple]:
        """(block index, samples used from it) covering the first ``samples`` draws."""
        out = []
        for block in range(-(-samples // self.block_size)):
            out.append((block, min(self.block_size, samples - block * self.block_size)))
        return out


def _check_plan(spec, grid: SpaceTimeGrid, eps: float, plan: NoisePlan) -> None:
    check_horizon(spec, grid)
    if (plan.n, plan.m_mc) != (grid.n, grid.m):
        raise GridError(f"noise plan (n={plan.n}, m={plan.m_mc}) does not match grid (n={grid.n}, m={grid.m})")
    if grid.dt > grid.stability_fraction / (2 * grid.n) * (1 + 1e-12):
        raise GridError(
            f"Monte Carlo step dt={grid.dt:g} exceeds {grid.stability_fraction}/(2n) for n={grid.n}"
        )
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"eps must lie in [0, 1], got {eps}")


def simulate_block(spec, grid: SpaceTimeGrid, eps: float, plan: NoisePlan, block: int,
                   count: Optional[int] = None) -> np.ndarray:
    """Terminal values u^{eps,n}(T, x0) of the first ``count`` samples of one block."""
    _check_plan(spec, grid, eps, plan)
    count = plan.block_size if count is None else count
    n, dt = grid.n, grid.dt
    rot = rotation(n, dt)
    u0, v0 = initial_state(spec, n)
    u = np.tile(u0, (count, 1))
    v = np.tile(v0, (count, 1))
    scale = max(1.0, float(np.max(np.abs(u0))), float(np.max(np.abs(v0))))
    rng = plan.generator(block)
    amplitude = n * math.sqrt(eps) * math.sqrt(dt / n)
    for i in range(grid.m):
        # the full block is drawn every step so sample values ignore ``count``
        dw = rng.standard_normal((plan.block_size, n - 1))[:count]
        kick = amplitude * spec.sigma(u) * dw if eps > 0 else None
        u, v = strang_step(spec, u, v, 0.0, n, dt, rot, kick=kick)
        check_growth(u, scale, i + 1, dt)
    return u @ terminal_weights(n, spec.x0)


def _block_cell(cell):
    spec, grid, eps, plan, block, count = cell
    return simulate_block(spec, grid, eps, plan, block, count)


def simulate_terminal(spec, grid: SpaceTimeGrid, eps: float, plan: NoisePlan, sample_index: int = 0) -> float:
    block, offset = divmod(sample_index, plan.block_size)
    return float(simulate_block(spec, grid, eps, plan, block, offset + 1)[offset])


def simulate_many(spec, grid: SpaceTimeGrid, eps: float, plan: NoisePlan, samples: int,
                  workers: Optional[int] = None) -> np.ndarray:
    cells = [(spec, grid, eps, plan, block, count) for block, count in plan.blocks(samples)]
    return np.concatenate(run_cells(_block_cell, cells, workers))


# --------------------------------------------------------------------------
# rare-event estimates


@dataclass(frozen=True)
class ThresholdEvent:
    y: float
    side: str = "ge"

    def __post_init__(self):
        if self.side not in ("ge", "le"):
            raise ValueError(f"side must be 'ge' or 'le', got {self.side!r}")

    @classmethod
    def whole_line(cls) -> "ThresholdEvent":
        return cls(-math.inf, "ge")

    def contains(self, values: np.ndarray) -> np.ndarray:
        return values >= self.y if self.side == "ge" else values <= self.y

    def describe(self) -> str:
        return f"u {'>=' if self.side == 'ge' else '<='} {self.y:g}"


def wilson_interval(hits: int, samples: int, level: float = 0.95):
    """Wilson score interval; with no hits the one-sided upper bound at ``level``."""
    phat = hits / samples
    if hits == 0:
        z = stats.norm.ppf(level)
        return 0.0, (z * z / samples) / (1.0 + z * z / samples)
    z = stats.norm.ppf(0.5 + level / 2.0)
    denom = 1.0 + z * z / samples
    center = (phat + z * z / (2.0 * samples)) / denom
    half = z / denom * math.sqrt(phat * (1.0 - phat) / samples + z * z / (4.0 * samples * samples))
    return max(0.0, min(center - half, phat)), min(1.0, max(center + half, phat))


def _neg_eps_log(eps: float, p: float) -> float:
    if p <= 0.0:
        return math.inf
    return 0.0 - eps * math.log(p)


@dataclass
class RareEventEstimate:
    eps: float
    event: ThresholdEvent
    samples: int
    hits: int
    phat: float
    lo: float
    hi: float

    @property
    def eps_log(self) -> float:
        """-eps log phat; with no hits only the lower bound -eps log hi is known."""
        if self.hits == 0:
            return _neg_eps_log(self.eps, self.hi)
        return _neg_eps_log(self.eps, self.phat)

    @property
    def eps_log_interval(self):
        return _neg_eps_log(self.eps, self.hi), _neg_eps_log(self.eps, self.lo)

    @property
    def lower_bound_only(self) -> bool:
        return self.hits == 0

    def row(self):
        return {
            "eps": self.eps,
            "samples": self.samples,
            "hits": self.hits,
            "phat": self.phat,
            "lo": self.lo,
            "hi": self.hi,
            "eps_log": self.eps_log,
        }


def estimate_rare(spec, grid: SpaceTimeGrid, eps: float, event: ThresholdEvent, samples: int, seed: int = 0,
                  block_size: int = DEFAULT_BLOCK, workers: Optional[int] = None) -> RareEventEstimate:
    """Crude Monte Carlo estimate of P(u^{eps,n}(T, x0) in event) with a Wilson interval."""
    if samples < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples, got {samples}")
    plan = NoisePlan(seed, grid.n, grid.m, block_size)
    values = simulate_many(spec, grid, eps, plan, samples, workers)
    hits = int(np.count_nonzero(event.contains(values)))
    lo, hi = wilson_interval(hits, samples)
    est = RareEventEstimate(eps, event, samples, hits, hits / samples, lo, hi)
    if hits == 0:
        logger.warning("no hits for %s at eps=%g over %d samples; -eps log p >= %.4g",
                       event.describe(), eps, samples, est.eps_log)
    else:
        logger.info("eps=%g %s: phat=%.4e [%.3e, %.3e] -eps log phat=%.4g",
                    eps, event.describe(), est.phat, lo, hi, est.eps_log)
    return est


# --------------------------------------------------------------------------
# slopes and the linear-case law


SLOPE_COLUMNS = ["eps", "eps_log", "target", "relative_gap", "lower_bound_only"]


@dataclass
class SlopeReport:
    y: float
    deterministic_value: float
    estimates: List[RareEventEstimate] = field(default_factory=list)
    rate_value: Optional[float] = None
    oracle_value: Optional[float] = None

    @property
    def eps_logs(self) -> List[float]:
        return [e.eps_log for e in self.estimates]

    def target(self) -> Optional[float]:
        return self.rate_value if self.rate_value is not None else self.oracle_value

    def target_source(self) -> str:
        if self.rate_value is not None:
            return "optimizer"
        return "linear closed form" if self.oracle_value is not None else "none"

    def trend_decreasing(self) -> bool:
        """-eps log phat moves down as eps shrinks, allowing each step its confidence interval."""
        pairs = zip(self.estimates, self.estimates[1:])
        return all(b.eps_log_interval[0] <= a.eps_log_interval[1] for a, b in pairs)

    def final_relative_error(self) -> float:
        target = self.target()
        if target is None or not self.estimates:
            return float("nan")
        return Utils.relative_gap(self.estimates[-1].eps_log, target)

    def rows(self):
        return [e.row() for e in self.estimates]

    def comparison_rows(self):
        target = self.target()
        if target is None:
            return []
        return [{"eps": e.eps, "eps_log": e.eps_log, "target": target,
                 "relative_gap": Utils.relative_gap(e.eps_log, target),
                 "lower_bound_only": int(e.lower_bound_only)} for e in self.estimates]

    def log_comparison(self, name: str) -> None:
        target = self.target()
        if target is None or not self.estimates:
            logger.info("ldp slope (%s, y=%g): %s, no target", name, self.y,
                        ", ".join("%.4g" % v for v in self.eps_logs))
            return
        last = self.estimates[-1]
        if last.lower_bound_only:
            logger.warning("ldp slope (%s, y=%g): no hits at eps=%g, -eps log p >= %.4g vs I^n(y) = %.6g (%s)",
                           name, self.y, last.eps, last.eps_log, target, self.target_source())
        else:
            logger.info("ldp slope (%s, y=%g): -eps log phat = %.6g at eps=%g vs I^n(y) = %.6g (%s), gap %.2e",
                        name, self.y, last.eps_log, last.eps, target, self.target_source(),
                        self.final_relative_error())


def slope_report(spec, grid: SpaceTimeGrid, y: float, estimates: Sequence[RareEventEstimate],
                 rate_value: Optional[float] = None) -> SlopeReport:
    """Collect estimates at one threshold together with the rate they should approach."""
    mu = upsilon_n(spec, Control.zeros(grid)).terminal(spec.x0)
    report = SlopeReport(y, mu, list(estimates), rate_value=rate_value)
    if spec.is_linear_class():
        report.oracle_value = rate_linear_oracle(spec, y, n=grid.n)
    return report


def ldp_slope(spec, grid: SpaceTimeGrid, y: float, eps_list: Sequence[float], samples: int, seed: int = 0,
              rate_value: Optional[float] = None, workers: Optional[int] = None,
              side: Optional[str] = None, block_size: int = DEFAULT_BLOCK) -> SlopeReport:
    """-eps log P(u^{eps,n}(T, x0) beyond y) over a decreasing eps list."""
    eps_list = list(eps_list)
    if len(eps_list) < 3 or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps list must be strictly decreasing with at least three entries")
    if side is None:
        mu = upsilon_n(spec, Control.zeros(grid)).terminal(spec.x0)
        side = "ge" if y >= mu else "le"
    event = ThresholdEvent(y, side)
    estimates = [estimate_rare(spec, grid, eps, event, samples, seed, block_size, workers) for eps in eps_list]
    report = slope_report(spec, grid, y, estimates, rate_value)
    report.log_comparison(spec.name)
    return report


@dataclass
class KsReport:
    statistic: float
    pvalue: float
    mean: float
    sd: float
    sample_mean: float
    sample_sd: float

    @property
    def passed(self) -> bool:
        return self.pvalue >= KS_LEVEL


def gaussian_ks_check(spec, grid: SpaceTimeGrid, eps: float, samples: int = 10_000, seed: int = 0,
                      workers: Optional[int] = None) -> KsReport:
    """Kolmogorov-Smirnov test of the LINEAR-class terminal law against N(mu^n, eps sigma^2 |G^n|^2)."""
    if not spec.is_linear_class():
        raise ValueError(f"{spec.name}: the Gaussian law needs b = 0 and constant sigma")
    mean = upsilon_n(spec, Control.zeros(grid)).terminal(spec.x0)
    sigma = float(spec.sigma(0.0))
    sd = math.sqrt(eps * sigma ** 2 * representer_norm_sq_discrete(grid.n, grid.T, spec.x0))
    values = simulate_many(spec, grid, eps, NoisePlan(seed, grid.n, grid.m), samples, workers)
    result = stats.kstest(values, "norm", args=(mean, sd))
    report = KsReport(float(result.statistic), float(result.pvalue), mean, sd,
                      float(np.mean(values)), float(np.std(values, ddof=1)))
    logger.info("KS check (%s, eps=%g): D=%.4f p=%.3f", spec.name, eps, report.statistic, report.pvalue)
    return report

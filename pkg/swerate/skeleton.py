"""Controlled (skeleton) wave equations: the discrete map h -> Upsilon^n(h),
an independent mild-form solver, the fine-grid reference, and the sampled
boundedness / Hoelder / Lipschitz diagnostics.

Node k = 1..n-1 is driven by the control value of cell [k/n, (k+1)/n); cell 0
never reaches the solution.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import Utils
from .exceptions import AssumptionViolation, GridError, InstabilityError, PicardDivergenceError
from .green import DiscreteGreen, initial_modes_discrete, terminal_weights
from .grid import SpaceTimeGrid, cell_index, frequencies, from_modes, to_modes

logger = logging.getLogger(__name__)

BLOWUP_FACTOR = 1e8
PICARD_MAX_ITER = 200


# --------------------------------------------------------------------------
# data types


@dataclass(frozen=True, eq=False)
class Control:
    """Piecewise constant h on the cells [t_i, t_i+1) x [k/n, (k+1)/n); values[i, k]."""

    grid: SpaceTimeGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.grid.m, self.grid.n):
            raise GridError(
                f"control shape {vals.shape} does not match grid (m={self.grid.m}, n={self.grid.n})"
            )
        if not np.all(np.isfinite(vals)):
            raise GridError("control values must be finite")
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, grid: SpaceTimeGrid) -> "Control":
        return cls(grid, np.zeros((grid.m, grid.n)))

    @classmethod
    def constant(cls, grid: SpaceTimeGrid, c: float) -> "Control":
        return cls(grid, np.full((grid.m, grid.n), float(c)))

    @classmethod
    def from_function(cls, grid: SpaceTimeGrid, fn) -> "Control":
        """Samples fn(t, x) at cell midpoints."""
        t = grid.midpoints[:, None]
        x = ((np.arange(grid.n) + 0.5) / grid.n)[None, :]
        return cls(grid, np.asarray(fn(t, x), dtype=float) * np.ones((grid.m, grid.n)))

    @cached_property
    def norm(self) -> float:
        return math.sqrt(float(np.sum(self.values ** 2)) * self.grid.cell_area)

    def action(self) -> float:
        return 0.5 * self.norm ** 2

    def scaled(self, c: float) -> "Control":
        return Control(self.grid, c * self.values)

    def __add__(self, other: "Control") -> "Control":
        if other.grid != self.grid:
            raise GridError("cannot add controls on different grids")
        return Control(self.grid, self.values + other.values)

    def __sub__(self, other: "Control") -> "Control":
        return self + other.scaled(-1.0)

    def embed(self, fine: SpaceTimeGrid) -> "Control":
        """Same function on a refined grid (every coarse cell split evenly)."""
        if fine.n % self.grid.n or fine.m % self.grid.m or not math.isclose(fine.T, self.grid.T):
            raise GridError(
                f"cannot embed control from (n={self.grid.n}, m={self.grid.m}) "
                f"into (n={fine.n}, m={fine.m})"
            )
        fm, fn = fine.m // self.grid.m, fine.n // self.grid.n
        return Control(fine, np.repeat(np.repeat(self.values, fm, axis=0), fn, axis=1))


@dataclass(frozen=True, eq=False)
class DiscretePath:
    """Nodal positions and velocities at the time grid points (boundary included).

    In time each node is the cubic Hermite interpolant of its stored
    position/velocity pairs; in space the path is polygonal.
    """

    grid: SpaceTimeGrid
    pos: np.ndarray
    vel: np.ndarray

    def __post_init__(self):
        shape = (self.grid.m + 1, self.grid.n + 1)
        pos = np.asarray(self.pos, dtype=float)
        vel = np.asarray(self.vel, dtype=float)
        if pos.shape != shape or vel.shape != shape:
            raise GridError(f"path arrays must have shape {shape}")
        object.__setattr__(self, "pos", pos)
        object.__setattr__(self, "vel", vel)

    @property
    def n(self) -> int:
        return self.grid.n

    def midpoint_positions(self) -> np.ndarray:
        dt = self.grid.dt
        return 0.5 * (self.pos[:-1] + self.pos[1:]) + dt * (self.vel[:-1] - self.vel[1:]) / 8.0

    def midpoint_accelerations(self) -> np.ndarray:
        return np.diff(self.vel, axis=0) / self.grid.dt

    def _cells(self, t):
        grid = self.grid
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > grid.T * (1 + 1e-12)):
            raise GridError(f"time outside [0, {grid.T}]")
        i = np.clip(np.floor(t / grid.dt).astype(int), 0, grid.m - 1)
        tau = t / grid.dt - i
        return i, tau

    def positions_at(self, t) -> np.ndarray:
        """Nodal values at times t; shape t.shape + (n+1,)."""
        i, tau = self._cells(t)
        tau = tau[..., None]
        dt = self.grid.dt
        h00 = 2 * tau ** 3 - 3 * tau ** 2 + 1
        h10 = tau ** 3 - 2 * tau ** 2 + tau
        h01 = -2 * tau ** 3 + 3 * tau ** 2
        h11 = tau ** 3 - tau ** 2
        return (
            h00 * self.pos[i] + h10 * dt * self.vel[i] + h01 * self.pos[i + 1] + h11 * dt * self.vel[i + 1]
        )

    def evaluate(self, t, x):
        """f(t, x) with t and x broadcast against each other."""
        t, x = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
        rows = self.positions_at(t)
        n = self.n
        k = np.minimum(cell_index(n, x), n - 1)
        frac = n * x - k
        left = np.take_along_axis(rows, k[..., None], axis=-1)[..., 0]
        right = np.take_along_axis(rows, (k + 1)[..., None], axis=-1)[..., 0]
        out = left + frac * (right - left)
        return float(out) if np.ndim(out) == 0 else out

    def terminal(self, x0: float) -> float:
        return float(terminal_weights(self.n, x0) @ self.pos[-1, 1:-1])

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.pos)))

    def restrict(self, coarse: SpaceTimeGrid) -> "DiscretePath":
        """Subsample onto a grid whose nodes and times are a subset of ours."""
        grid = self.grid
        if grid.n % coarse.n or grid.m % coarse.m or not math.isclose(grid.T, coarse.T):
            raise GridError(f"(n={coarse.n}, m={coarse.m}) is not a subgrid of (n={grid.n}, m={grid.m})")
        fn, fm = grid.n // coarse.n, grid.m // coarse.m
        return DiscretePath(coarse, self.pos[::fm, ::fn], self.vel[::fm, ::fn])


@dataclass(frozen=True)
class BallSampler:
    """Deterministic random controls with norm inside the ball of the given radius."""

    radius: float
    seed: int = 0
    modes: int = 4
    null_first_cell: bool = True

    def sample(self, grid: SpaceTimeGrid, index: int = 0) -> Control:
        if self.radius < 0:
            raise ValueError("radius must be non-negative")
        rng = np.random.default_rng([self.seed, index])
        p = np.arange(self.modes)
        q = np.arange(1, self.modes + 1)
        coef = rng.standard_normal((self.modes, self.modes)) / (1.0 + p[:, None] + q[None, :])
        tm = grid.midpoints / grid.T
        xm = (np.arange(grid.n) + 0.5) / grid.n
        values = np.cos(np.pi * np.outer(tm, p)) @ coef @ np.sin(np.pi * np.outer(q, xm))
        if self.null_first_cell:
            values[:, 0] = 0.0
        norm = math.sqrt(float(np.sum(values ** 2)) * grid.cell_area)
        if norm == 0.0 or self.radius == 0.0:
            return Control.zeros(grid)
        target = self.radius * rng.uniform(0.5, 1.0) * (1.0 - 1e-12)
        return Control(grid, values * (target / norm))

    def samples(self, grid: SpaceTimeGrid, count: int) -> List[Control]:
        return [self.sample(grid, idx) for idx in range(count)]


# --------------------------------------------------------------------------
# integrator


def initial_state(spec, n: int) -> Tuple[np.ndarray, np.ndarray]:
    nodes = np.arange(1, n) / n
    u = np.asarray(spec.u0(nodes), dtype=float) * np.ones(n - 1)
    v = np.asarray(spec.v0(nodes), dtype=float) * np.ones(n - 1)
    return u, v


def rotation(n: int, dt: float):
    om = np.asarray(frequencies(n))
    return np.cos(om * dt), np.sin(om * dt), om


def rotate(u, v, n: int, rot):
    """Exact flow of u'' = Delta_n u over one step (interior values, last axis)."""
    c, s, om = rot
    a, b = to_modes(u, n), to_modes(v, n)
    return from_modes(c * a + (s / om) * b, n), from_modes(-om * s * a + c * b, n)


def rotate_transpose(lu, lv, n: int, rot):
    c, s, om = rot
    a, b = to_modes(lu, n), to_modes(lv, n)
    return from_modes(c * a - om * s * b, n), from_modes((s / om) * a + c * b, n)


def force(spec, u, h):
    return spec.b(u) + spec.sigma(u) * h


def force_with_derivative(spec, u, h):
    """(b + sigma h, b' + sigma' h, sigma) at u."""
    b, db = spec.b.with_derivative(u)
    s, ds = spec.sigma.with_derivative(u)
    return b + s * h, db + ds * h, s


def strang_step(spec, u, v, h, n: int, dt: float, rot, kick=None):
    """Half kick, exact linear rotation, half kick; an optional impulse joins the first kick."""
    v_half = v + 0.5 * dt * force(spec, u, h)
    if kick is not None:
        v_half = v_half + kick
    u_new, v_star = rotate(u, v_half, n, rot)
    return u_new, v_star + 0.5 * dt * force(spec, u_new, h)


def check_growth(u, scale: float, step: int, dt: float) -> None:
    if not np.all(np.isfinite(u)) or np.max(np.abs(u)) > BLOWUP_FACTOR * scale:
        raise InstabilityError(
            f"solution blew up at step {step} (t={step * dt:g}); reduce the time step"
        )


def check_horizon(spec, grid: SpaceTimeGrid) -> None:
    if not math.isclose(grid.T, spec.T, rel_tol=1e-12):
        raise GridError(f"grid horizon {grid.T} differs from problem horizon {spec.T}")


def upsilon_n(spec, h: Control, sigma_floor: Optional[float] = None) -> DiscretePath:
    """Discrete skeleton solution Upsilon^n(h) from the nodal second-order system."""
    grid = h.grid
    check_horizon(spec, grid)
    n, m, dt = grid.n, grid.m, grid.dt
    rot = rotation(n, dt)
    u, v = initial_state(spec, n)
    scale = max(1.0, float(np.max(np.abs(u))), float(np.max(np.abs(v))))
    pos = np.zeros((m + 1, n + 1))
    vel = np.zeros((m + 1, n + 1))
    pos[0, 1:-1], vel[0, 1:-1] = u, v
    for i in range(m):
        u, v = strang_step(spec, u, v, h.values[i, 1:], n, dt, rot)
        check_growth(u, scale, i + 1, dt)
        pos[i + 1, 1:-1], vel[i + 1, 1:-1] = u, v
    path = DiscretePath(grid, pos, vel)
    if sigma_floor is not None:
        require_sigma_floor(spec, path, sigma_floor)
    logger.debug("upsilon_n(%s): n=%d m=%d |h|=%.4g sup|f|=%.4g", spec.name, n, m, h.norm, path.sup_norm())
    return path


def upsilon_n_mild(
    spec, h: Control, picard_tol: float = 1e-10, max_iter: int = PICARD_MAX_ITER
) -> DiscretePath:
    """Picard iteration on the mild (Green function) form of the discrete skeleton equation.

    Space integrals are exact cell sums through the sine modes; each time cell
    uses the trapezoid rule with the control value of that cell at both ends.
    """
    grid = h.grid
    check_horizon(spec, grid)
    n, m, dt = grid.n, grid.m, grid.dt
    om = DiscreteGreen(n).omega
    wt = np.outer(grid.times, om)
    a0, b0 = initial_modes_discrete(n, spec)
    free_a = a0 * np.cos(wt) + b0 * np.sin(wt) / om
    free_b = -a0 * om * np.sin(wt) + b0 * np.cos(wt)
    # kernel lags d*dt, d = 0..m
    K = np.sin(wt) / om
    C = np.cos(wt)
    hv = h.values[:, 1:]
    u = from_modes(free_a, n)
    a, b = free_a, free_b
    previous = math.inf
    for it in range(1, max_iter + 1):
        g_plus = to_modes(force(spec, u[:-1], hv), n)
        g_minus = to_modes(force(spec, u[1:], hv), n)
        a, b = free_a.copy(), free_b.copy()
        for i in range(1, m + 1):
            a[i] += 0.5 * dt * (
                np.sum(K[i:0:-1] * g_plus[:i], axis=0) + np.sum(K[i - 1 :: -1] * g_minus[:i], axis=0)
            )
            b[i] += 0.5 * dt * (
                np.sum(C[i:0:-1] * g_plus[:i], axis=0) + np.sum(C[i - 1 :: -1] * g_minus[:i], axis=0)
            )
        u_new = from_modes(a, n)
        update = float(np.max(np.abs(u_new - u)))
        u = u_new
        if not math.isfinite(update):
            raise PicardDivergenceError(f"Picard iteration produced non-finite values at sweep {it}")
        logger.debug("picard sweep %d: update %.3e", it, update)
        if update < picard_tol:
            break
        previous = update
    else:
        raise PicardDivergenceError(
            f"Picard iteration did not contract in {max_iter} sweeps (last update {previous:.3e})"
        )
    pos = np.zeros((m + 1, n + 1))
    vel = np.zeros((m + 1, n + 1))
    pos[:, 1:-1] = u
    vel[:, 1:-1] = from_modes(b, n)
    return DiscretePath(grid, pos, vel)


def upsilon_reference(spec, h: Control, n_ref: int) -> DiscretePath:
    """Upsilon^{n_ref}(h) on the refined grid; stands in for the continuous skeleton."""
    n = h.grid.n
    if n_ref < 4 * n or n_ref % n:
        raise GridError(f"reference resolution {n_ref} must be a multiple of {n} and at least {4 * n}")
    factor = n_ref // n
    return upsilon_n(spec, h.embed(h.grid.refine(factor, factor)))


def min_abs_sigma(spec, path: DiscretePath) -> float:
    return float(np.min(np.abs(spec.sigma(path.pos))))


def require_sigma_floor(spec, path: DiscretePath, sigma_floor: float) -> None:
    low = min_abs_sigma(spec, path)
    if low < sigma_floor:
        raise AssumptionViolation(
            f"|sigma| drops to {low:.3g} along the path, below the floor {sigma_floor:g}", low
        )


# --------------------------------------------------------------------------
# adjoint of the terminal functional


def terminal_value_and_gradient(spec, h: Control, x0: Optional[float] = None):
    """Upsilon^n(h)(T, x0) and its gradient with respect to the cell values h[i, k]."""
    x0 = spec.x0 if x0 is None else x0
    path = upsilon_n(spec, h)
    grid = h.grid
    n, m, dt = grid.n, grid.m, grid.dt
    rot = rotation(n, dt)
    c = terminal_weights(n, x0)
    value = float(c @ path.pos[-1, 1:-1])
    lu, lv = c.copy(), np.zeros(n - 1)
    grad = np.zeros((m, n))
    for i in range(m - 1, -1, -1):
        hi = h.values[i, 1:]
        _, d_next, s_next = force_with_derivative(spec, path.pos[i + 1, 1:-1], hi)
        grad[i, 1:] += 0.5 * dt * s_next * lv
        lu = lu + 0.5 * dt * d_next * lv
        lu, lv = rotate_transpose(lu, lv, n, rot)
        _, d_prev, s_prev = force_with_derivative(spec, path.pos[i, 1:-1], hi)
        grad[i, 1:] += 0.5 * dt * s_prev * lv
        lu = lu + 0.5 * dt * d_prev * lv
    return value, grad, path


# --------------------------------------------------------------------------
# convergence and sampled regularity


@dataclass
class ErrorCurve:
    ns: List[int]
    errors: List[float]
    n_ref: int
    order: float

    @property
    def decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.errors, self.errors[1:]))


def _on_resolution(h: Control, n: int) -> Control:
    base = h.grid
    if n % base.n:
        raise GridError(f"resolution {n} is not a multiple of the control resolution {base.n}")
    f = n // base.n
    return h.embed(base.refine(f, f))


def sup_error_curve(spec, h: Control, ns: Sequence[int], n_ref: int) -> ErrorCurve:
    """sup over the control's grid of |Upsilon^n(h) - Upsilon^{n_ref}(h)| for each n."""
    base = h.grid
    for n in ns:
        if n_ref % n:
            raise GridError(f"n={n} does not divide n_ref={n_ref}")
    reference = upsilon_n(spec, _on_resolution(h, n_ref)).restrict(base)
    errors = []
    for n in ns:
        path = upsilon_n(spec, _on_resolution(h, n)).restrict(base)
        errors.append(float(np.max(np.abs(path.pos - reference.pos))))
        logger.info("sup error n=%d vs n_ref=%d: %.4e", n, n_ref, errors[-1])
    return ErrorCurve(list(ns), errors, n_ref, Utils.fit_order(ns, errors))


def holder_ratio_max(path: DiscretePath, pairs: int = 10000, seed: int = 0) -> float:
    """max |f(t,x) - f(s,y)| / (|x-y|^1/2 + |t-s|^1/2) over random pairs."""
    rng = np.random.default_rng(seed)
    T = path.grid.T
    t, s = rng.uniform(0.0, T, pairs), rng.uniform(0.0, T, pairs)
    x, y = rng.uniform(0.0, 1.0, pairs), rng.uniform(0.0, 1.0, pairs)
    denom = np.sqrt(np.abs(x - y)) + np.sqrt(np.abs(t - s))
    keep = denom > 0
    diff = np.abs(path.evaluate(t[keep], x[keep]) - path.evaluate(s[keep], y[keep]))
    return float(np.max(diff / denom[keep]))


@dataclass
class SuiteReport:
    name: str
    by_n: Dict[int, float] = field(default_factory=dict)
    samples: int = 0
    factor: float = 2.0

    @property
    def constant(self) -> float:
        return max(self.by_n.values()) if self.by_n else float("nan")

    @property
    def finite(self) -> bool:
        return all(math.isfinite(v) for v in self.by_n.values())

    @property
    def stable(self) -> bool:
        return Utils.stable_within(self.by_n.values(), self.factor)


def _base_grid(spec, ns: Iterable[int], base: Optional[SpaceTimeGrid]) -> SpaceTimeGrid:
    return base or SpaceTimeGrid.default(min(ns), spec.T)


def boundedness_suite(
    spec,
    radii: Sequence[float] = (1.0, 2.0),
    ns: Sequence[int] = (4, 8, 16, 32),
    count: int = 50,
    seed: int = 0,
    base: Optional[SpaceTimeGrid] = None,
) -> SuiteReport:
    base = _base_grid(spec, ns, base)
    report = SuiteReport("sup_norm", {n: 0.0 for n in ns})
    for radius in radii:
        sampler = BallSampler(radius, seed)
        for idx in range(count):
            h = sampler.sample(base, idx)
            for n in ns:
                report.by_n[n] = max(report.by_n[n], upsilon_n(spec, _on_resolution(h, n)).sup_norm())
            report.samples += 1
    logger.info("boundedness suite (%s): %s", spec.name, report.by_n)
    return report


def holder_suite(
    spec,
    radius: float = 1.0,
    ns: Sequence[int] = (4, 8, 16, 32),
    count: int = 5,
    pairs: int = 10000,
    seed: int = 0,
    base: Optional[SpaceTimeGrid] = None,
) -> SuiteReport:
    base = _base_grid(spec, ns, base)
    sampler = BallSampler(radius, seed)
    report = SuiteReport("holder_half", {n: 0.0 for n in ns})
    for idx in range(count):
        h = sampler.sample(base, idx)
        for n in ns:
            ratio = holder_ratio_max(upsilon_n(spec, _on_resolution(h, n)), pairs, seed + idx)
            report.by_n[n] = max(report.by_n[n], ratio)
        report.samples += 1
    logger.info("hoelder suite (%s): %s", spec.name, report.by_n)
    return report


def lipschitz_suite(
    spec,
    radius: float = 2.0,
    n_ref: int = 32,
    count: int = 10,
    seed: int = 0,
    base: Optional[SpaceTimeGrid] = None,
) -> SuiteReport:
    base = base or SpaceTimeGrid.default(max(2, n_ref // 4), spec.T)
    sampler = BallSampler(radius, seed)
    report = SuiteReport("lipschitz_h", {n_ref: 0.0})
    for idx in range(count):
        h1 = sampler.sample(base, 2 * idx)
        h2 = sampler.sample(base, 2 * idx + 1)
        gap = (h1 - h2).norm
        if gap == 0.0:
            continue
        f1 = upsilon_n(spec, _on_resolution(h1, n_ref))
        f2 = upsilon_n(spec, _on_resolution(h2, n_ref))
        ratio = float(np.max(np.abs(f1.pos - f2.pos))) / gap
        report.by_n[n_ref] = max(report.by_n[n_ref], ratio)
        report.samples += 1
    logger.info("lipschitz suite (%s): %.4g", spec.name, report.by_n[n_ref])
    return report


# --------------------------------------------------------------------------
# file formats


def path_rows(path: DiscretePath) -> List[Tuple[float, float, float, float]]:
    """(t, x, f, f_t) for every time point and node."""
    times, nodes = path.grid.times, path.grid.nodes
    rows = []
    for i, t in enumerate(times):
        for k, x in enumerate(nodes):
            rows.append((float(t), float(x), float(path.pos[i, k]), float(path.vel[i, k])))
    return rows


def path_from_rows(rows: Sequence[Sequence[float]]) -> DiscretePath:
    data = np.asarray(rows, dtype=float)
    if data.ndim != 2 or data.shape[1] < 4:
        raise GridError("path table needs the columns t, x, f, f_t")
    times = np.unique(data[:, 0])
    nodes = np.unique(data[:, 1])
    m, n = times.size - 1, nodes.size - 1
    if data.shape[0] != (m + 1) * (n + 1):
        raise GridError("path table is not a full time x node grid")
    order = np.lexsort((data[:, 1], data[:, 0]))
    data = data[order]
    grid = SpaceTimeGrid(n=n, m=m, T=float(times[-1]))
    return DiscretePath(grid, data[:, 2].reshape(m + 1, n + 1), data[:, 3].reshape(m + 1, n + 1))


def save_control(control: Control, path) -> None:
    grid = control.grid
    lines = [f"{grid.n} {grid.m} {format(grid.T, '.17g')}"]
    lines += [" ".join(format(v, ".17g") for v in row) for row in control.values]
    Path(path).write_text("\n".join(lines) + "\n")


def load_control(path) -> Control:
    """Header ``n m T`` followed by m rows of n cell values."""
    try:
        lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    except OSError as exc:
        raise GridError(f"cannot read control file {path}: {exc}") from exc
    if not lines:
        raise GridError(f"control file {path} is empty")
    try:
        n_text, m_text, t_text = lines[0].split()
        grid = SpaceTimeGrid(n=int(n_text), m=int(m_text), T=float(t_text))
        values = np.array([[float(v) for v in ln.split()] for ln in lines[1:]])
    except ValueError as exc:
        raise GridError(f"malformed control file {path}: {exc}") from exc
    return Control(grid, values)

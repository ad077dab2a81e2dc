"""Continuous and discrete Green functions of the Dirichlet wave operator on [0, 1].

The continuous kernel is a sine series truncated at ``J_max`` and is applied
to functions through their sine coefficients.  The discrete kernel has
exactly n-1 modes with frequencies omega_j = j pi sqrt(c_j^n), and every
spatial integral against it is an exact cell sum.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Dict, Iterator, List, Optional, Sequence

import numpy as np
from scipy import integrate

from .grid import (
    PiecewiseLinearFn,
    SpaceTimeGrid,
    discrete_laplacian,
    frequencies,
    eigenfactors,
    interpolation_weights,
    kappa,
    phi,
    pi_n,
    to_modes,
)

logger = logging.getLogger(__name__)

SAMPLE_CHUNK = 2048


@dataclass(frozen=True)
class GreenSeries:
    J_max: int

    def __post_init__(self):
        if self.J_max < 1:
            raise ValueError(f"J_max must be >= 1, got {self.J_max}")

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        return np.arange(1, self.J_max + 1) * np.pi

    def weights(self, t) -> np.ndarray:
        """sin(j pi t) / (j pi); shape (..., J_max)."""
        k = self.wavenumbers
        return np.sin(np.multiply.outer(t, k)) / k

    def time_derivative_weights(self, t) -> np.ndarray:
        return np.cos(np.multiply.outer(t, self.wavenumbers))

    def basis(self, x) -> np.ndarray:
        return phi(np.arange(1, self.J_max + 1), np.asarray(x)[..., None])

    def fejer(self, t, x, y) -> np.ndarray:
        """Cesaro-smoothed pointwise value of the truncated series."""
        j = np.arange(1, self.J_max + 1)
        damp = 1.0 - j / (self.J_max + 1.0)
        return np.sum(damp * self.weights(t) * self.basis(x) * self.basis(y), axis=-1)


@dataclass(frozen=True)
class DiscreteGreen:
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"need n >= 2, got {self.n}")

    @property
    def eigenfactors(self) -> np.ndarray:
        return eigenfactors(self.n)

    @property
    def omega(self) -> np.ndarray:
        return frequencies(self.n)

    @cached_property
    def nodal_basis(self) -> np.ndarray:
        """phi_j(k/n) for j = 1..n-1 (rows), k = 0..n (columns); boundary exactly 0."""
        n = self.n
        out = np.zeros((n - 1, n + 1))
        out[:, 1:-1] = phi(np.arange(1, n)[:, None], np.arange(1, n)[None, :] / n)
        return out

    def weights(self, t) -> np.ndarray:
        return np.sin(np.multiply.outer(t, self.omega)) / self.omega

    def time_derivative_weights(self, t) -> np.ndarray:
        return np.cos(np.multiply.outer(t, self.omega))

    def interpolated_basis(self, x) -> np.ndarray:
        """phi_{j,n}(x) = Pi_n(phi_j)(x); shape (..., n-1)."""
        vals = PiecewiseLinearFn(self.nodal_basis)(np.asarray(x, dtype=float))
        return np.moveaxis(np.asarray(vals), 0, -1)

    def cell_basis(self, y) -> np.ndarray:
        """phi_j(kappa_n(y)); shape (..., n-1)."""
        return phi(np.arange(1, self.n), np.asarray(kappa(self.n, y))[..., None])

    def modes(self, g) -> np.ndarray:
        """int_0^1 phi_j(kappa_n z) g(kappa_n z) dz for nodal g (exact cell sum)."""
        vals = np.asarray(g.values if hasattr(g, "values") else g, dtype=float)
        return to_modes(vals[..., 1 : self.n], self.n)


def green_discrete(dg: DiscreteGreen, t: float, x: float, y: float) -> float:
    return float(np.sum(dg.weights(t) * dg.interpolated_basis(x) * dg.cell_basis(y)))


def green_discrete_dt(dg: DiscreteGreen, t: float, x: float, y: float) -> float:
    return float(np.sum(dg.time_derivative_weights(t) * dg.interpolated_basis(x) * dg.cell_basis(y)))


def green_discrete_dtt(dg: DiscreteGreen, t: float, x: float, y: float) -> float:
    w = -dg.omega * np.sin(dg.omega * t)
    return float(np.sum(w * dg.interpolated_basis(x) * dg.cell_basis(y)))


def green_apply_discrete(dg: DiscreteGreen, t: float, x: float, g) -> float:
    return float(np.sum(dg.weights(t) * dg.interpolated_basis(x) * dg.modes(g)))


def green_apply_discrete_dt(dg: DiscreteGreen, t: float, x: float, g) -> float:
    return float(np.sum(dg.time_derivative_weights(t) * dg.interpolated_basis(x) * dg.modes(g)))


def green_apply_continuous(gs: GreenSeries, t: float, x: float, coeffs) -> float:
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape[-1] < gs.J_max:
        raise ValueError(f"need {gs.J_max} sine coefficients, got {coeffs.shape[-1]}")
    return float(np.sum(gs.weights(t) * gs.basis(x) * coeffs[..., : gs.J_max]))


def sine_coefficients(g: Callable, J_max: int, panels: Optional[int] = None) -> np.ndarray:
    """int_0^1 g(z) phi_j(z) dz, j = 1..J_max, by composite Simpson."""
    panels = panels or 8 * J_max
    panels += panels % 2
    z = np.linspace(0.0, 1.0, panels + 1)
    gz = np.asarray(g(z), dtype=float) * np.ones_like(z)
    out = np.empty(J_max)
    # row blocks keep the (J, panels) product small for large J_max
    for start in range(0, J_max, 256):
        j = np.arange(start + 1, min(start + 256, J_max) + 1)
        out[start : start + j.size] = integrate.simpson(phi(j[:, None], z) * gz, x=z, axis=-1)
    return out


def _nodal(n: int, expr) -> np.ndarray:
    vals = np.asarray(expr(np.arange(n + 1) / n), dtype=float) * np.ones(n + 1)
    vals[0] = vals[-1] = 0.0
    return vals


def initial_terms_discrete(dg: DiscreteGreen, spec, t: float, x: float) -> float:
    """Free evolution of Pi_n(u0), Pi_n(v0) under the semidiscrete wave flow."""
    n = dg.n
    return green_apply_discrete(dg, t, x, _nodal(n, spec.v0)) + green_apply_discrete_dt(
        dg, t, x, _nodal(n, spec.u0)
    )


def initial_modes_discrete(n: int, spec):
    return to_modes(_nodal(n, spec.u0)[1:-1], n), to_modes(_nodal(n, spec.v0)[1:-1], n)


def continuous_free_solution(spec, t, x, J_max: int):
    """sum_j [u0_j cos(j pi t) + v0_j sin(j pi t)/(j pi)] phi_j(x); vectorized in x."""
    gs = GreenSeries(J_max)
    u_hat = sine_coefficients(spec.u0, J_max)
    v_hat = sine_coefficients(spec.v0, J_max)
    modal = u_hat * gs.time_derivative_weights(t) + v_hat * gs.weights(t)
    out = np.sum(gs.basis(x) * modal, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def pdgn0_error(n: int, trials: int = 20, seed: int = 0) -> float:
    """max |int d_t G^n_0(x, y) w(kappa_n y) dy - Pi_n(w)(x)| over random w and x."""
    rng = np.random.default_rng(seed)
    dg = DiscreteGreen(n)
    worst = 0.0
    for _ in range(trials):
        w = np.zeros(n + 1)
        w[1:-1] = rng.standard_normal(n - 1)
        xs = rng.uniform(0.0, 1.0, 16)
        lhs = dg.interpolated_basis(xs) @ dg.modes(w)
        rhs = pi_n(n, w)(xs)
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


def green_time_equation_residual(dg: DiscreteGreen, t: float, x: float) -> float:
    """max_k |d_t^2 G^n_t(x, k/n) - Delta_n G^n_t(x, .)(k/n)| over interior nodes."""
    n = dg.n
    nodes = np.arange(n + 1) / n
    g_vals = np.array([green_discrete(dg, t, x, y) for y in nodes])
    g_vals[0] = g_vals[-1] = 0.0
    lap = discrete_laplacian(n, g_vals)
    dtt = np.array([green_discrete_dtt(dg, t, x, y) for y in nodes])
    return float(np.max(np.abs(dtt[1:-1] - lap[1:-1])))


# --------------------------------------------------------------------------
# representer of the terminal functional in the linear case


def representer_norm_sq_discrete(n: int, T: float, x0: float) -> float:
    """int_0^T int_0^1 |G^n_{T-s}(x0, z)|^2 dz ds by Parseval."""
    dg = DiscreteGreen(n)
    om = dg.omega
    basis = dg.interpolated_basis(x0)
    time_part = (T / 2.0 - np.sin(2.0 * om * T) / (4.0 * om)) / om ** 2
    return float(np.sum(basis ** 2 * time_part))


def representer_norm_sq_continuous(J_max: int, T: float, x0: float):
    """Truncated continuous norm and a bound on the discarded tail."""
    k = np.arange(1, J_max + 1) * np.pi
    basis = phi(np.arange(1, J_max + 1), x0)
    time_part = (T / 2.0 - np.sin(2.0 * k * T) / (4.0 * k)) / k ** 2
    tail = (T + 1.0 / (2.0 * math.pi * J_max)) / (math.pi ** 2 * J_max)
    return float(np.sum(basis ** 2 * time_part)), tail


def linear_representer(grid: SpaceTimeGrid, x0: float) -> np.ndarray:
    """Cell averages of (s, z) -> G^n_{T-s}(x0, z) on the control grid, shape (m, n)."""
    n = grid.n
    dg = DiscreteGreen(n)
    om = dg.omega
    left = grid.T - grid.times[:-1]
    right = grid.T - grid.times[1:]
    # (1/dt) int_{t_i}^{t_{i+1}} sin(om (T - s)) / om ds
    time_avg = (np.cos(np.multiply.outer(right, om)) - np.cos(np.multiply.outer(left, om))) / (
        om ** 2 * grid.dt
    )
    out = np.zeros((grid.m, n))
    weights = time_avg * dg.interpolated_basis(x0)
    out[:, 1:] = weights @ dg.nodal_basis[:, 1:-1]
    return out


def terminal_weights(n: int, x0: float) -> np.ndarray:
    """c with Pi_n(w)(x0) = c . w over interior nodes."""
    k, theta = interpolation_weights(n, x0)
    c = np.zeros(n + 1)
    c[k] += 1.0 - theta
    c[k + 1] += theta
    return c[1:-1]


# --------------------------------------------------------------------------
# bound diagnostics


@dataclass
class BoundRow:
    bound_name: str
    n: int
    estimate: float
    samples: int


@dataclass
class BoundReport:
    rows: List[BoundRow] = field(default_factory=list)

    def add(self, name: str, n: int, estimate: float, samples: int) -> None:
        self.rows.append(BoundRow(name, n, float(estimate), samples))

    def estimate(self, name: str, n: int) -> float:
        for row in self.rows:
            if row.bound_name == name and row.n == n:
                return row.estimate
        raise KeyError(f"no {name} estimate for n={n}")

    def by_name(self, name: str) -> Dict[int, float]:
        return {row.n: row.estimate for row in self.rows if row.bound_name == name}

    @property
    def finite(self) -> bool:
        return all(np.isfinite(row.estimate) for row in self.rows)


def _chunks(total: int) -> Iterator[slice]:
    for start in range(0, total, SAMPLE_CHUNK):
        yield slice(start, min(start + SAMPLE_CHUNK, total))


def _draw(rng: np.random.Generator, samples: int, T: float):
    t = rng.uniform(0.0, T, samples)
    s = rng.uniform(0.0, T, samples)
    x = rng.uniform(0.0, 1.0, samples)
    y = rng.uniform(0.0, 1.0, samples)
    keep = (x != y) & (t != s)
    return t[keep], s[keep], x[keep], y[keep]


def _mode_bounds(weights_fn, basis_fn, t, s, x, y):
    l2 = holder_x = holder_t = 0.0
    for sl in _chunks(t.size):
        wt, ws = weights_fn(t[sl]), weights_fn(s[sl])
        bx, by = basis_fn(x[sl]), basis_fn(y[sl])
        l2 = max(l2, float(np.max(np.sum((wt * bx) ** 2, axis=-1))))
        dx = np.sum((wt * (bx - by)) ** 2, axis=-1) / np.abs(x[sl] - y[sl])
        dt = np.sum(((wt - ws) * bx) ** 2, axis=-1) / np.abs(t[sl] - s[sl])
        holder_x = max(holder_x, float(np.max(dx)))
        holder_t = max(holder_t, float(np.max(dt)))
    return l2, holder_x, holder_t


def _trig_test_functions(rng: np.random.Generator, J: int, count: int, degree: int = 6):
    """Random sine polynomials with exact coefficients and sup norms of f and f'."""
    z = np.linspace(0.0, 1.0, 2001)
    for _ in range(count):
        a = rng.standard_normal(degree) / np.arange(1, degree + 1)
        coeffs = np.zeros(J)
        coeffs[: min(degree, J)] = a[: min(degree, J)] / math.sqrt(2.0)
        deg = np.arange(1, degree + 1)[:, None]
        values = np.sum(a[:, None] * np.sin(deg * np.pi * z), axis=0)
        slopes = np.sum(a[:, None] * deg * np.pi * np.cos(deg * np.pi * z), axis=0)
        yield coeffs, float(np.max(np.abs(values))), float(np.max(np.abs(slopes)))


def check_green_bounds(
    ns: Sequence[int] = (4, 8, 16, 32),
    J_max: Optional[int] = None,
    samples: int = 1000,
    T: float = 1.0,
    seed: int = 0,
) -> BoundReport:
    """Sampled constants of the kernel estimates, discrete (per n) and continuous (n = J_max)."""
    if samples < 100:
        raise ValueError("check_green_bounds needs a sample budget of at least 100")
    report = BoundReport()
    rng = np.random.default_rng(seed)
    t, s, x, y = _draw(rng, samples, T)
    used = int(t.size)

    for n in ns:
        dg = DiscreteGreen(n)
        l2, hx, ht = _mode_bounds(dg.weights, dg.interpolated_basis, t, s, x, y)
        report.add("l2_sup", n, l2, used)
        report.add("holder_x", n, hx, used)
        report.add("holder_t", n, ht, used)
        logger.debug("discrete kernel bounds n=%d: l2=%.4g hx=%.4g ht=%.4g", n, l2, hx, ht)

    if J_max:
        gs = GreenSeries(J_max)
        l2, hx, ht = _mode_bounds(gs.weights, gs.basis, t, s, x, y)
        report.add("l2_sup", J_max, l2, used)
        report.add("holder_x", J_max, hx, used)
        report.add("holder_t", J_max, ht, used)
        pointwise = 0.0
        for sl in _chunks(min(used, 4 * SAMPLE_CHUNK)):
            pointwise = max(pointwise, float(np.max(np.abs(gs.fejer(t[sl], x[sl], y[sl])))))
        report.add("pointwise_fejer", J_max, pointwise, min(used, 4 * SAMPLE_CHUNK))

        action = deriv = 0.0
        count = max(1, used // 100)
        for coeffs, sup, sup_slope in _trig_test_functions(rng, J_max, count):
            tt = rng.uniform(0.0, T, 64)
            xx = rng.uniform(0.0, 1.0, 64)
            vals = np.sum(gs.weights(tt) * gs.basis(xx) * coeffs, axis=-1)
            dvals = np.sum(gs.time_derivative_weights(tt) * gs.basis(xx) * coeffs, axis=-1)
            action = max(action, float(np.max(np.abs(vals))) / sup)
            deriv = max(deriv, float(np.max(np.abs(dvals))) / sup_slope)
        report.add("action_sup", J_max, action, count * 64)
        report.add("time_derivative_action", J_max, deriv, count * 64)

    logger.info("check_green_bounds: %d rows from %d samples", len(report.rows), used)
    return report

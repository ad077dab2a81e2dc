"""Closed-form inverse of the discrete skeleton map and the terminal-value
modification used to make optimizer output exactly feasible.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from .exceptions import AssumptionViolation, BumpSupportError, MembershipError
from .grid import discrete_laplacian, kappa, laplacian_interior
from .problem import DEFAULT_SIGMA_FLOOR
from .skeleton import Control, DiscretePath, initial_state

logger = logging.getLogger(__name__)

MEMBERSHIP_TOL = 1e-9


@dataclass
class MembershipReport:
    initial_position_ok: bool
    initial_velocity_ok: bool
    boundary_ok: bool
    polygonal_ok: bool
    time_regular_ok: bool
    violations: Dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(
            (
                self.initial_position_ok,
                self.initial_velocity_ok,
                self.boundary_ok,
                self.polygonal_ok,
                self.time_regular_ok,
            )
        )

    def failures(self):
        return [name for name, value in self.violations.items() if value > MEMBERSHIP_TOL]


def _polygonal_defect(f: DiscretePath) -> float:
    """max gap between f at cell midpoints and the mean of the two neighbouring nodes."""
    n = f.n
    xs = (np.arange(n) + 0.5) / n
    rows = np.unique(np.linspace(0, f.grid.m, 17).astype(int))
    mids = np.asarray(f.evaluate(f.grid.times[rows][:, None], xs[None, :]))
    chords = 0.5 * (f.pos[rows, :-1] + f.pos[rows, 1:])
    scale = max(1.0, f.sup_norm())
    return float(np.max(np.abs(mids - chords))) / scale


def check_membership(spec, f: DiscretePath, tol: float = MEMBERSHIP_TOL) -> MembershipReport:
    u0, v0 = initial_state(spec, f.n)
    scale = max(1.0, float(np.max(np.abs(u0))), float(np.max(np.abs(v0))))
    violations = {
        "initial_position": float(np.max(np.abs(f.pos[0, 1:-1] - u0))) / scale,
        "initial_velocity": float(np.max(np.abs(f.vel[0, 1:-1] - v0))) / scale,
        "boundary": float(
            max(np.max(np.abs(f.pos[:, [0, -1]])), np.max(np.abs(f.vel[:, [0, -1]])))
        ),
        "polygonal": _polygonal_defect(f),
        "time_regularity": 0.0
        if np.all(np.isfinite(f.midpoint_accelerations()))
        else math.inf,
    }
    return MembershipReport(
        initial_position_ok=violations["initial_position"] <= tol,
        initial_velocity_ok=violations["initial_velocity"] <= tol,
        boundary_ok=violations["boundary"] <= tol,
        polygonal_ok=violations["polygonal"] <= tol,
        time_regular_ok=math.isfinite(violations["time_regularity"]),
        violations=violations,
    )


def _require_membership(spec, f: DiscretePath) -> None:
    report = check_membership(spec, f)
    if not report.passed:
        detail = ", ".join(f"{k}={report.violations[k]:.3g}" for k in report.failures())
        raise MembershipError(f"path is not an admissible discrete path ({detail})")


def _divide_by_sigma(spec, numerator, at, sigma_floor: float):
    sig = np.asarray(spec.sigma(at), dtype=float) * np.ones_like(at)
    low = float(np.min(np.abs(sig)))
    if low < sigma_floor:
        raise AssumptionViolation(
            f"|sigma| = {low:.3g} along the path is below the floor {sigma_floor:g}", low
        )
    return numerator / sig


def _boundary_cell(spec, m: int, sigma_floor: float) -> np.ndarray:
    # cell [0, 1/n): f = 0 and Delta_n f = 0 there
    zero = np.zeros(m)
    return _divide_by_sigma(spec, -np.asarray(spec.b(zero)) * np.ones(m), zero, sigma_floor)


def invert_upsilon_n(
    spec, f: DiscretePath, sigma_floor: float = DEFAULT_SIGMA_FLOOR, check: bool = True
) -> Control:
    """h = [f_tt - Delta_n f - b(f)] / sigma(f) at time-cell midpoints, one value per cell."""
    if check:
        _require_membership(spec, f)
    grid = f.grid
    u_mid = f.midpoint_positions()[:, 1:-1]
    acc = f.midpoint_accelerations()[:, 1:-1]
    numerator = acc - laplacian_interior(u_mid, grid.n) - spec.b(u_mid)
    values = np.zeros((grid.m, grid.n))
    values[:, 1:] = _divide_by_sigma(spec, numerator, u_mid, sigma_floor)
    values[:, 0] = _boundary_cell(spec, grid.m, sigma_floor)
    return Control(grid, values)


# --------------------------------------------------------------------------
# terminal modification


def _bump_cell(n: int, x0: float) -> float:
    k = kappa(n, x0)
    if k < 1.0 / n - 1e-15 or k > (n - 2.0) / n + 1e-15:
        raise BumpSupportError(
            f"n={n} too small to modify the terminal value at x0={x0}: need 1/n <= kappa_n(x0) <= (n-2)/n"
        )
    return k


def bump(n: int, x0: float, amplitude: float, x) -> np.ndarray:
    """Piecewise cubic with plateau ``amplitude`` on [kappa_n(x0), kappa_n(x0) + 1/n], zero at 0 and 1."""
    k = _bump_cell(n, x0)
    right = k + 1.0 / n
    x = np.asarray(x, dtype=float)
    out = np.full_like(x, float(amplitude))
    left_part = x < k
    right_part = x > right
    out = np.where(left_part, amplitude * (1.0 + ((x - k) / k) ** 3), out)
    out = np.where(right_part, amplitude * (1.0 - ((x - right) / (1.0 - right)) ** 3), out)
    return out


def bump_nodal(n: int, x0: float, amplitude: float) -> np.ndarray:
    w = bump(n, x0, amplitude, np.arange(n + 1) / n)
    w[0] = w[-1] = 0.0
    return w


def bump_second_derivative_bound(n: int, x0: float, amplitude: float) -> float:
    """sup |p''| = 6 |A| max(kappa^-2, (1 - kappa - 1/n)^-2)."""
    k = _bump_cell(n, x0)
    return 6.0 * abs(amplitude) * max(k ** -2, (1.0 - k - 1.0 / n) ** -2)


def bump_laplacian_excess(n: int, x0: float, amplitude: float) -> float:
    """max_k |Delta_n Pi_n(p)(k/n)| - sup|p''|; non-positive when the bound holds."""
    lap = discrete_laplacian(n, bump_nodal(n, x0, amplitude))
    return float(np.max(np.abs(lap))) - bump_second_derivative_bound(n, x0, amplitude)


def modify_terminal(f_tilde: DiscretePath, y: float, x0: float) -> DiscretePath:
    """f = f~ + (t/T)^2 Pi_n(p) with p the bump of height y - f~(T, x0)."""
    grid = f_tilde.grid
    y_tilde = f_tilde.terminal(x0)
    if not (math.isfinite(y) and math.isfinite(y_tilde)):
        raise BumpSupportError("terminal values must be finite")
    w = bump_nodal(grid.n, x0, y - y_tilde)
    t = grid.times[:, None]
    T = grid.T
    pos = f_tilde.pos + (t ** 2 / T ** 2) * w
    vel = f_tilde.vel + (2.0 * t / T ** 2) * w
    return DiscretePath(grid, pos, vel)


def modified_control(
    spec,
    f_tilde: DiscretePath,
    h_tilde: Control,
    y: float,
    x0: float,
    sigma_floor: float = DEFAULT_SIGMA_FLOOR,
) -> Tuple[DiscretePath, Control]:
    """Modified path and its control, using f~_tt = Delta_n f~ + b(f~) + sigma(f~) h~."""
    grid = f_tilde.grid
    f = modify_terminal(f_tilde, y, x0)
    w = bump_nodal(grid.n, x0, y - f_tilde.terminal(x0))[1:-1]
    tm = grid.midpoints[:, None]
    T = grid.T
    ut_mid = f_tilde.midpoint_positions()[:, 1:-1]
    u_mid = f.midpoint_positions()[:, 1:-1]
    h_int = h_tilde.values[:, 1:]
    lap_w = laplacian_interior(w, grid.n)
    numerator = (
        spec.b(ut_mid)
        + spec.sigma(ut_mid) * h_int
        + 2.0 * w / T ** 2
        - (tm ** 2 / T ** 2) * lap_w
        - spec.b(u_mid)
    )
    values = np.zeros((grid.m, grid.n))
    values[:, 1:] = _divide_by_sigma(spec, numerator, u_mid, sigma_floor)
    values[:, 0] = _boundary_cell(spec, grid.m, sigma_floor)
    logger.debug("modified_control: bump height %.3e", y - f_tilde.terminal(x0))
    return f, Control(grid, values)

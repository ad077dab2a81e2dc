"""Uniform space-time mesh, kappa_n / Pi_n, the discrete Dirichlet Laplacian
and its sine eigenbasis.

Nodal data lives in numpy arrays whose *last* axis runs over the nodes
0..n (boundary included) or over the interior nodes 1..n-1.  Integrals of
cell-constant integrands are exact cell sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Union

import numpy as np
from scipy import fft

from .exceptions import GridError

DIRICHLET_TOL = 0.0


@dataclass(frozen=True)
class SpaceTimeGrid:
    n: int
    m: int
    T: float
    stability_fraction: float = field(default=1.0, compare=False)

    def __post_init__(self):
        if self.n < 2:
            raise GridError(f"spatial resolution must be >= 2, got {self.n}")
        if self.m < 1:
            raise GridError(f"need at least one time step, got {self.m}")
        if self.T <= 0:
            raise GridError(f"horizon must be positive, got {self.T}")
        if not 0 < self.stability_fraction <= 1:
            raise GridError("stability_fraction must lie in (0, 1]")
        if self.dt > self.stability_fraction / self.n * (1 + 1e-12):
            raise GridError(
                f"dt={self.dt:g} exceeds stability bound {self.stability_fraction}/n "
                f"(n={self.n}, m={self.m}, T={self.T:g})"
            )

    @classmethod
    def default(cls, n: int, T: float, stability_fraction: float = 0.5) -> "SpaceTimeGrid":
        """Grid with dt at most stability_fraction / (2n); m is the smallest step count reaching that."""
        m = int(math.ceil(2 * n * T / stability_fraction - 1e-9))
        return cls(n=n, m=m, T=T, stability_fraction=stability_fraction)

    @property
    def dt(self) -> float:
        return self.T / self.m

    @property
    def cell_area(self) -> float:
        return self.dt / self.n

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n + 1) / self.n

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.m + 1) * self.dt

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.m) + 0.5) * self.dt

    def refine(self, factor_n: int, factor_m: int) -> "SpaceTimeGrid":
        return SpaceTimeGrid(self.n * factor_n, self.m * factor_m, self.T, self.stability_fraction)


@dataclass(frozen=True)
class NodalVector:
    """Values at the nodes 0..n of a grid."""

    values: np.ndarray
    dirichlet: bool = True

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size < 3:
            raise GridError("a nodal vector needs n+1 >= 3 entries")
        if self.dirichlet and (abs(vals[0]) > DIRICHLET_TOL or abs(vals[-1]) > DIRICHLET_TOL):
            raise GridError("Dirichlet nodal vector must vanish at both ends")
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return self.values.size - 1

    @classmethod
    def sample(cls, n: int, w: Callable, dirichlet: bool = True) -> "NodalVector":
        vals = np.asarray(w(np.arange(n + 1) / n), dtype=float) * np.ones(n + 1)
        if dirichlet:
            vals[0] = vals[-1] = 0.0
        return cls(vals, dirichlet)


NodalLike = Union[NodalVector, np.ndarray]


def _values(w: NodalLike) -> np.ndarray:
    return w.values if isinstance(w, NodalVector) else np.asarray(w, dtype=float)


# --------------------------------------------------------------------------
# kappa_n and Pi_n


def cell_index(n: int, z) -> np.ndarray:
    """floor(n z), corrected so that z = k/n always maps to k."""
    z = np.asarray(z, dtype=float)
    if np.any(z < 0) or np.any(z > 1):
        raise GridError("kappa_n is defined on [0, 1]")
    k = np.floor(z * n).astype(int)
    k = np.where((k + 1) / n <= z, k + 1, k)
    k = np.where(k / n > z, k - 1, k)
    return k


def kappa(n: int, z):
    k = cell_index(n, z)
    out = k / n
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class PiecewiseLinearFn:
    """Polygonal interpolant through nodal values (the Pi_n rule)."""

    values: np.ndarray

    @property
    def n(self) -> int:
        return np.shape(self.values)[-1] - 1

    def __call__(self, x):
        n = self.n
        x = np.asarray(x, dtype=float)
        k = np.minimum(cell_index(n, x), n - 1)
        frac = n * x - k
        left = np.take(self.values, k, axis=-1)
        right = np.take(self.values, k + 1, axis=-1)
        out = left + frac * (right - left)
        return float(out) if np.ndim(out) == 0 else out


def pi_n(n: int, w) -> PiecewiseLinearFn:
    if isinstance(w, PiecewiseLinearFn) and w.n == n:
        return w
    if isinstance(w, (NodalVector, np.ndarray)):
        vals = _values(w)
        if vals.shape[-1] != n + 1:
            raise GridError(f"expected {n + 1} nodal values, got {vals.shape[-1]}")
        return PiecewiseLinearFn(vals)
    nodes = np.arange(n + 1) / n
    return PiecewiseLinearFn(np.asarray(w(nodes), dtype=float) * np.ones(n + 1))


def interpolation_weights(n: int, x0: float):
    """(k, theta) with Pi_n(w)(x0) = (1-theta) w_k + theta w_{k+1}."""
    k = int(min(cell_index(n, x0), n - 1))
    return k, n * x0 - k


# --------------------------------------------------------------------------
# discrete Laplacian


def laplacian_interior(u: np.ndarray, n: int) -> np.ndarray:
    """n^2 second difference of interior values (zero Dirichlet data outside)."""
    padded = np.zeros(u.shape[:-1] + (u.shape[-1] + 2,))
    padded[..., 1:-1] = u
    return n * n * (padded[..., :-2] - 2.0 * u + padded[..., 2:])


def discrete_laplacian(n: int, w: NodalLike, strict: bool = True) -> np.ndarray:
    vals = _values(w)
    if vals.shape[-1] != n + 1:
        raise GridError(f"expected {n + 1} nodal values, got {vals.shape[-1]}")
    if strict and (np.any(vals[..., 0] != 0) or np.any(vals[..., -1] != 0)):
        raise GridError("discrete_laplacian needs zero boundary values in strict mode")
    out = np.zeros_like(vals)
    out[..., 1:-1] = n * n * (vals[..., :-2] - 2.0 * vals[..., 1:-1] + vals[..., 2:])
    return out


# --------------------------------------------------------------------------
# sine eigenbasis


def phi(j, x):
    return math.sqrt(2.0) * np.sin(np.asarray(j) * np.pi * np.asarray(x))


def eigenfactor(n: int, j: int) -> float:
    if not 1 <= j <= n - 1:
        raise GridError(f"mode {j} outside 1..{n - 1}")
    arg = j * math.pi / (2 * n)
    return math.sin(arg) ** 2 / arg ** 2


@lru_cache(maxsize=64)
def eigenfactors(n: int) -> np.ndarray:
    arg = np.arange(1, n) * np.pi / (2 * n)
    out = np.sin(arg) ** 2 / arg ** 2
    out.setflags(write=False)
    return out


@lru_cache(maxsize=64)
def frequencies(n: int) -> np.ndarray:
    """omega_j = j pi sqrt(c_j^n) = 2n sin(j pi / 2n)."""
    out = 2.0 * n * np.sin(np.arange(1, n) * np.pi / (2 * n))
    out.setflags(write=False)
    return out


@lru_cache(maxsize=64)
def basis_matrix(n: int) -> np.ndarray:
    """Phi[j-1, k-1] = phi_j(k/n), j, k = 1..n-1 (symmetric)."""
    j = np.arange(1, n)
    out = math.sqrt(2.0) * np.sin(np.pi * np.outer(j, j) / n)
    out.setflags(write=False)
    return out


def to_modes(u_interior: np.ndarray, n: int) -> np.ndarray:
    """a_j = (1/n) sum_k phi_j(k/n) u_k along the last axis."""
    if n == 2:
        return np.asarray(u_interior, dtype=float) / math.sqrt(2.0)
    return fft.dst(u_interior, type=1, norm="ortho", axis=-1) / math.sqrt(n)


def from_modes(a: np.ndarray, n: int) -> np.ndarray:
    """u_k = sum_j a_j phi_j(k/n) along the last axis."""
    if n == 2:
        return np.asarray(a, dtype=float) * math.sqrt(2.0)
    return fft.dst(a, type=1, norm="ortho", axis=-1) * math.sqrt(n)


def cell_inner(n: int, u: NodalLike, v: NodalLike) -> float:
    """int_0^1 u(kappa_n x) v(kappa_n x) dx as an exact cell sum."""
    uu, vv = _values(u), _values(v)
    return float(np.sum(uu[..., :n] * vv[..., :n], axis=-1) / n)


def ibp_check(n: int, u: NodalLike, v: NodalLike) -> float:
    uu, vv = _values(u), _values(v)
    lhs = cell_inner(n, discrete_laplacian(n, uu), vv)
    rhs = cell_inner(n, uu, discrete_laplacian(n, vv))
    return abs(lhs - rhs)


def eigenrelation_error(n: int) -> float:
    nodes = np.arange(n + 1) / n
    worst = 0.0
    for j in range(1, n):
        w = phi(j, nodes)
        w[0] = w[-1] = 0.0
        residual = discrete_laplacian(n, w) + (j * math.pi) ** 2 * eigenfactor(n, j) * w
        worst = max(worst, float(np.max(np.abs(residual))))
    return worst


def orthonormality_error(n: int) -> float:
    phi_mat = basis_matrix(n)
    gram = phi_mat @ phi_mat.T / n
    return float(np.max(np.abs(gram - np.eye(n - 1))))

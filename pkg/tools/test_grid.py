import math

import numpy as np
import pytest

from swerate.exceptions import GridError
from swerate.grid import (
    NodalVector,
    SpaceTimeGrid,
    discrete_laplacian,
    eigenfactor,
    eigenrelation_error,
    from_modes,
    ibp_check,
    kappa,
    orthonormality_error,
    phi,
    pi_n,
    to_modes,
)

NS = (2, 4, 8, 16, 32)


@pytest.mark.parametrize("n, z, expected", [(10, 0.37, 0.3), (4, 1.0, 1.0), (7, 0.999, 6 / 7), (3, 2 / 3, 2 / 3)])
def test_kappa(n, z, expected):
    assert kappa(n, z) == pytest.approx(expected, abs=1e-15)


def test_kappa_maps_nodes_onto_themselves():
    for n in NS:
        nodes = np.arange(n + 1) / n
        np.testing.assert_array_equal(kappa(n, nodes), nodes)


def test_kappa_out_of_range():
    with pytest.raises(GridError):
        kappa(4, 1.2)


def test_pi_n_reproduces_affine_and_is_idempotent():
    rng = np.random.default_rng(1)
    x = rng.uniform(0.0, 1.0, 100)
    affine = pi_n(5, lambda z: 2.0 - 3.0 * z)
    np.testing.assert_allclose(affine(x), 2.0 - 3.0 * x, atol=1e-14)
    f = pi_n(6, np.sin)
    np.testing.assert_array_equal(pi_n(6, f)(x), f(x))
    np.testing.assert_allclose(pi_n(6, f)(x), pi_n(6, lambda z: f(z))(x), atol=1e-13)


def test_pi_n_hand_value():
    assert pi_n(2, lambda z: z * z)(0.25) == pytest.approx(0.125)


def test_nodal_vector_dirichlet():
    with pytest.raises(GridError):
        NodalVector(np.array([0.0, 1.0, 0.5]))
    w = NodalVector.sample(4, lambda z: z * (1 - z))
    assert w.n == 4 and w.values[0] == 0.0


def test_laplacian_zero_and_strict():
    assert not np.any(discrete_laplacian(6, np.zeros(7)))
    with pytest.raises(GridError):
        discrete_laplacian(3, np.array([1.0, 0.0, 0.0, 0.0]))


def test_laplacian_eigen_relation_hand_case():
    n = 4
    nodes = np.arange(n + 1) / n
    w = phi(1, nodes)
    w[0] = w[-1] = 0.0
    c = math.sin(math.pi / 8) ** 2 / (math.pi / 8) ** 2
    assert eigenfactor(4, 1) == pytest.approx(c, rel=1e-15)
    np.testing.assert_allclose(discrete_laplacian(n, w), -math.pi ** 2 * c * w, atol=1e-12)


def test_eigenfactor_bounds():
    for n in NS + (101,):
        for j in range(1, n):
            assert 4 / math.pi ** 2 - 1e-15 <= eigenfactor(n, j) <= 1.0
    assert eigenfactor(100, 1) >= 1 - 1e-3
    with pytest.raises(GridError):
        eigenfactor(4, 4)


@pytest.mark.parametrize("n", NS)
def test_exact_identities(n):
    rng = np.random.default_rng(n)
    u, v = np.zeros(n + 1), np.zeros(n + 1)
    u[1:-1], v[1:-1] = rng.standard_normal(n - 1), rng.standard_normal(n - 1)
    assert eigenrelation_error(n) <= 1e-10 * max(1, n * n)
    assert orthonormality_error(n) <= 1e-10
    assert ibp_check(n, u, v) <= 1e-10 * n * n


@pytest.mark.parametrize("n", NS)
def test_mode_transform_inverts(n):
    rng = np.random.default_rng(3)
    u = rng.standard_normal((3, n - 1))
    np.testing.assert_allclose(from_modes(to_modes(u, n), n), u, atol=1e-12)


def test_grid_validation():
    grid = SpaceTimeGrid(8, 64, 1.0)
    assert grid.dt == 1 / 64 and grid.cell_area == pytest.approx(1 / 512)
    assert SpaceTimeGrid.default(8, 1.0).m == 32
    with pytest.raises(GridError):
        SpaceTimeGrid(8, 4, 1.0)
    with pytest.raises(GridError):
        SpaceTimeGrid(1, 4, 1.0)
    with pytest.raises(GridError):
        SpaceTimeGrid(4, 4, 1.0, stability_fraction=1.5)
    fine = grid.refine(2, 4)
    assert (fine.n, fine.m) == (16, 256)


def test_default_grid_keeps_its_stability_fraction():
    grid = SpaceTimeGrid.default(8, 1.0, 0.25)
    assert grid.m == 64
    assert grid.stability_fraction == 0.25
    assert grid.dt <= 0.25 / 16
    assert SpaceTimeGrid.default(8, 1.0) == SpaceTimeGrid(8, 32, 1.0)
    assert SpaceTimeGrid.default(5, 2.0).m == 40

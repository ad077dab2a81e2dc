import math

import numpy as np
import pytest

from swerate.green import (
    DiscreteGreen,
    GreenSeries,
    check_green_bounds,
    green_apply_continuous,
    green_apply_discrete,
    green_discrete,
    green_discrete_dt,
    green_discrete_dtt,
    initial_terms_discrete,
    green_time_equation_residual,
    linear_representer,
    pdgn0_error,
    representer_norm_sq_continuous,
    representer_norm_sq_discrete,
    sine_coefficients,
    terminal_weights,
)
from swerate.grid import SpaceTimeGrid, eigenfactor, frequencies, phi, pi_n
from swerate.problem import make_problem


def test_continuous_norm_at_centre():
    value, tail = representer_norm_sq_continuous(2000, 1.0, 0.5)
    assert value == pytest.approx(0.125, abs=1e-4)
    assert 0 < tail < 1e-3


@pytest.mark.parametrize("n, rel", [(32, 0.05), (64, 0.02)])
def test_discrete_norm_approaches_continuous(n, rel):
    continuous, _ = representer_norm_sq_continuous(4000, 1.0, 0.5)
    assert representer_norm_sq_discrete(n, 1.0, 0.5) == pytest.approx(continuous, rel=rel)


def test_cell_averaged_representer_matches_norm():
    grid = SpaceTimeGrid(16, 512, 1.0)
    rep = linear_representer(grid, 0.5)
    assert rep.shape == (512, 16)
    assert not np.any(rep[:, 0])
    approx = float(np.sum(rep ** 2)) * grid.cell_area
    assert approx == pytest.approx(representer_norm_sq_discrete(16, 1.0, 0.5), rel=1e-3)


@pytest.mark.parametrize("n", [2, 4, 8, 16])
def test_time_derivative_at_zero_reproduces_interpolant(n):
    assert pdgn0_error(n) <= 1e-10


def test_discrete_kernel_solves_wave_equation():
    dg = DiscreteGreen(8)
    for t in (0.1, 0.45, 0.9):
        assert green_time_equation_residual(dg, t, 0.3) <= 1e-9


def test_discrete_kernel_symmetric_at_nodes():
    dg = DiscreteGreen(6)
    nodes = np.arange(7) / 6
    for x in nodes[1:-1]:
        for y in nodes[1:-1]:
            assert green_discrete(dg, 0.7, x, y) == pytest.approx(green_discrete(dg, 0.7, y, x), abs=1e-14)


def test_sine_coefficients_of_a_mode():
    coeffs = sine_coefficients(lambda z: np.sin(2 * math.pi * z), 5, panels=2000)
    expected = np.zeros(5)
    expected[1] = 1 / math.sqrt(2.0)
    np.testing.assert_allclose(coeffs, expected, atol=1e-8)


def test_terminal_weights():
    np.testing.assert_allclose(terminal_weights(4, 0.5), [0.0, 1.0, 0.0])
    np.testing.assert_allclose(terminal_weights(4, 0.3), [0.8, 0.2, 0.0], atol=1e-15)


def test_bound_report_is_finite():
    report = check_green_bounds(ns=(4, 8), J_max=32, samples=200)
    assert report.finite
    assert set(report.by_name("l2_sup")) == {4, 8, 32}
    assert report.estimate("pointwise_fejer", 32) > 0
    with pytest.raises(KeyError):
        report.estimate("l2_sup", 16)


def test_bound_sample_budget():
    with pytest.raises(ValueError):
        check_green_bounds(samples=50)


def _cell_sum(kernel, dg, t, x, g):
    n = dg.n
    return sum(kernel(dg, t, x, k / n) * g[k] for k in range(n)) / n


def test_discrete_kernel_vanishes_at_time_zero_and_on_the_boundary():
    dg = DiscreteGreen(8)
    rng = np.random.default_rng(0)
    for x, y in rng.uniform(0.0, 1.0, (10, 2)):
        assert green_discrete(dg, 0.0, x, y) == 0.0
        assert green_discrete_dtt(dg, 0.0, x, y) == 0.0
        assert green_discrete(dg, 0.4, 0.0, y) == pytest.approx(0.0, abs=1e-14)
        assert green_discrete(dg, 0.4, 1.0, y) == pytest.approx(0.0, abs=1e-14)


def test_discrete_application_of_first_mode():
    dg = DiscreteGreen(4)
    g = phi(1, np.arange(5) / 4)
    omega = math.pi * math.sqrt(eigenfactor(4, 1))
    expected = math.sin(omega * 0.25) / omega * math.sqrt(2.0)
    assert green_apply_discrete(dg, 0.25, 0.5, g) == pytest.approx(expected, rel=1e-12)
    assert green_apply_discrete(dg, 0.25, 0.5, np.zeros(5)) == 0.0


@pytest.mark.parametrize("n", [4, 8])
def test_discrete_application_is_a_cell_sum(n):
    dg = DiscreteGreen(n)
    rng = np.random.default_rng(n)
    g = np.zeros(n + 1)
    g[1:-1] = rng.standard_normal(n - 1)
    for t, x in ((0.3, 0.37), (0.9, 0.5)):
        brute = _cell_sum(green_discrete, dg, t, x, g)
        assert green_apply_discrete(dg, t, x, g) == pytest.approx(brute, abs=1e-12)
    for x in (0.1, 0.55, 0.8):
        assert _cell_sum(green_discrete_dt, dg, 0.0, x, g) == pytest.approx(pi_n(n, g)(x), abs=1e-12)


def test_continuous_application():
    gs = GreenSeries(16)
    assert green_apply_continuous(gs, 0.5, 0.5, np.zeros(16)) == 0.0
    first = np.zeros(16)
    first[0] = 1.0
    assert green_apply_continuous(gs, 0.5, 0.5, first) == pytest.approx(math.sqrt(2.0) / math.pi, rel=1e-12)
    with pytest.raises(ValueError):
        green_apply_continuous(gs, 0.5, 0.5, np.zeros(8))


def test_continuous_truncation_tail():
    coeffs = sine_coefficients(lambda z: z * (1.0 - z), 64)
    j = np.arange(33, 65)
    bound = math.sqrt(2.0) / math.pi * float(np.sum(np.abs(coeffs[32:]) / j))
    for t, x in ((0.3, 0.2), (0.7, 0.5)):
        fine = green_apply_continuous(GreenSeries(64), t, x, coeffs)
        gap = fine - green_apply_continuous(GreenSeries(32), t, x, coeffs)
        assert abs(gap) <= bound + 1e-15


def test_discrete_application_approaches_continuous():
    coeffs = sine_coefficients(lambda z: np.sin(np.pi * z), 64)
    continuous = green_apply_continuous(GreenSeries(64), 0.5, 0.5, coeffs)
    assert continuous == pytest.approx(1.0 / math.pi, rel=1e-8)
    gaps = []
    for n in (4, 8, 16, 32):
        g = np.sin(np.pi * np.arange(n + 1) / n)
        gaps.append(abs(green_apply_discrete(DiscreteGreen(n), 0.5, 0.5, g) - continuous))
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 1e-3


def test_initial_terms_discrete(linear):
    dg = DiscreteGreen(8)
    nodal = np.sin(np.pi * np.arange(9) / 8)
    for x in (0.2, 0.5, 0.93):
        assert initial_terms_discrete(dg, linear, 0.0, x) == pytest.approx(pi_n(8, nodal)(x), abs=1e-12)
    omega = frequencies(8)[0]
    assert initial_terms_discrete(dg, linear, 0.3, 0.5) == pytest.approx(math.cos(omega * 0.3), rel=1e-12)
    still = make_problem(b="0", sigma="1", u0="0", v0="0")
    assert initial_terms_discrete(dg, still, 0.3, 0.5) == 0.0

import numpy as np
import pytest

from swerate.exceptions import NotLinearClassError
from swerate.grid import SpaceTimeGrid
from swerate.inverse import invert_upsilon_n
from swerate.problem import SIN_PI_X, make_problem
from swerate.rate import (
    ProbeEntry,
    ProbeReport,
    StudyTable,
    action,
    convergence_study,
    feasible_perturbation_deltas,
    gamma_liminf_probe,
    gradient_check,
    linear_oracle,
    rate_discrete,
    rate_linear_oracle,
    rate_reference,
    warm_start,
)
from swerate.skeleton import BallSampler, Control, upsilon_n


def deterministic_value(spec, grid):
    return upsilon_n(spec, Control.zeros(grid)).terminal(spec.x0)


def test_action_hand_value():
    h = Control(SpaceTimeGrid(2, 2, 1.0), np.array([[1.0, 2.0], [3.0, 1.0]]))
    assert h.norm ** 2 == pytest.approx(3.75)
    assert action(h) == pytest.approx(1.875)
    h = Control(SpaceTimeGrid(2, 2, 1.0), np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert h.norm ** 2 == pytest.approx(7.5)
    assert action(h) == pytest.approx(3.75)


def test_zero_at_deterministic_value(any_preset, small_grid):
    mu = deterministic_value(any_preset, small_grid)
    result = rate_discrete(any_preset, small_grid, mu)
    assert result.value == 0.0
    assert result.iterations == 0
    assert not np.any(result.h_star.values)


def test_linear_rate_matches_closed_form(linear, small_grid):
    y = deterministic_value(linear, small_grid) + 0.5
    result = rate_discrete(linear, small_grid, y)
    assert result.value == pytest.approx(rate_linear_oracle(linear, y, n=small_grid.n), rel=1e-2)
    assert result.f_star.terminal(linear.x0) == pytest.approx(y, abs=1e-10)
    assert result.feasibility_method in ("modified", "penalty-converged")
    assert result.row()["n"] == 8


def test_doubling_sigma_quarters_the_rate(linear, small_grid):
    loud = make_problem(b="0", sigma="2", u0=SIN_PI_X, v0="0")
    y = deterministic_value(linear, small_grid) - 0.4
    quiet_value = rate_discrete(linear, small_grid, y).value
    assert rate_discrete(loud, small_grid, y).value == pytest.approx(quiet_value / 4, rel=1e-3)


def test_warm_start_is_nearly_feasible_for_linear_class(linear, small_grid):
    f0 = upsilon_n(linear, Control.zeros(small_grid))
    y = f0.terminal(linear.x0) + 0.3
    h0 = warm_start(linear, small_grid, y, f0)
    assert not np.any(h0.values[:, 0])
    assert upsilon_n(linear, h0).terminal(linear.x0) == pytest.approx(y, abs=1e-2)


def test_continuous_closed_form(linear):
    oracle = linear_oracle(linear, -0.5)
    assert oracle.deterministic_value == pytest.approx(-1.0, abs=1e-6)
    assert oracle.norm_sq == pytest.approx(0.125, rel=2e-3)
    assert oracle.value == pytest.approx(1.0, rel=2e-3)
    assert oracle.tail_bound > 0


def test_closed_form_needs_linear_class(nonlin_a):
    with pytest.raises(NotLinearClassError):
        rate_linear_oracle(nonlin_a, 0.0)


def test_adjoint_gradient_check(nonlin_a, small_grid):
    h = BallSampler(1.0, seed=11).sample(small_grid)
    check = gradient_check(nonlin_a, h, coords=8)
    assert check.max_relative_error <= 1e-4
    assert len(check.entries) == 8


def test_rate_rejects_non_finite_target(linear, small_grid):
    with pytest.raises(ValueError):
        rate_discrete(linear, small_grid, float("nan"))


def test_study_table_accessors():
    rows = [
        {"y": 0.1, "n": 4, "value": 0.30, "gap": 0.02, "holder_seminorm": 1.0, "error": ""},
        {"y": 0.1, "n": 8, "value": 0.31, "gap": 0.01, "holder_seminorm": 1.4, "error": ""},
        {"y": 0.1, "n": 16, "value": 0.32, "gap": 0.0, "holder_seminorm": 1.5, "error": ""},
        {"y": 0.2, "n": 4, "error": "failed"},
    ]
    table = StudyTable(16, rows)
    assert table.values(0.1) == {4: 0.30, 8: 0.31}
    assert table.gaps(0.1) == [0.02, 0.01]
    assert table.errors() == [rows[3]]
    assert table.equi_coercive(0.1)
    assert not table.equi_coercive(0.1, factor=1.2)
    assert table.table()[3]["value"] == ""


def test_study_resolution_checks(linear):
    with pytest.raises(ValueError):
        convergence_study(linear, [0.0], [8, 4], 16)
    with pytest.raises(ValueError):
        convergence_study(linear, [0.0], [4, 16], 16)


def test_liminf_report_tail():
    entries = [ProbeEntry(4, 0.2, -0.1), ProbeEntry(8, 0.31, 0.01), ProbeEntry(16, 0.302, 0.002)]
    report = ProbeReport(0.5, 0.3, entries, slack=1e-3)
    assert report.tail_margin == pytest.approx(0.002)
    assert report.passed
    assert not ProbeReport(0.5, 0.3, [ProbeEntry(4, float("nan"), float("nan"))], 1e-3).passed


@pytest.mark.slow
def test_linear_convergence_study(linear):
    y = deterministic_value(linear, SpaceTimeGrid(16, 64, 1.0)) + 0.3
    table = convergence_study(linear, [y], [4, 8], 16, workers=1)
    assert len(table.rows) == 3
    assert not table.errors()
    reference = table.rows[-1]["value"]
    for n, value in table.values(y).items():
        assert value == pytest.approx(reference, rel=0.1)
        assert value == pytest.approx(rate_linear_oracle(linear, y, n=n), rel=2e-2)


@pytest.mark.slow
def test_nonlinear_minimizer_is_local(nonlin_a, small_grid):
    y = deterministic_value(nonlin_a, small_grid) + 0.25
    result = rate_discrete(nonlin_a, small_grid, y)
    assert result.value > 0
    deltas = feasible_perturbation_deltas(nonlin_a, result, count=8)
    assert min(deltas) >= -1e-3 * max(1.0, result.value)


@pytest.mark.slow
def test_liminf_entries_on_subgrids(linear):
    grid = SpaceTimeGrid(16, 64, 1.0)
    y = deterministic_value(linear, grid) + 0.3
    reference = rate_discrete(linear, grid, y)
    report = gamma_liminf_probe(linear, y, [3, 4, 8], reference=reference)
    assert report.reference_value == reference.value
    assert [e.n for e in report.entries] == [3, 4, 8]
    assert report.entries[0].note == "not a subgrid of the reference"
    assert all(np.isfinite(e.value) for e in report.entries[1:])


@pytest.mark.parametrize("name", ["linear", "nonlin_a"])
def test_reported_value_is_action_of_inverted_path(name, small_grid, request):
    spec = request.getfixturevalue(name)
    y = deterministic_value(spec, small_grid) + 0.5
    result = rate_discrete(spec, small_grid, y)
    inverted = invert_upsilon_n(spec, result.f_star)
    assert result.value == pytest.approx(inverted.action(), rel=1e-6)
    assert (result.h_star - inverted).norm <= 1e-6 * result.h_star.norm
    assert result.f_star.terminal(spec.x0) == pytest.approx(y, abs=1e-10)


@pytest.mark.parametrize("dy", [-1.0, -0.5, 0.5, 1.0])
def test_linear_rate_is_the_closed_form_parabola(linear, small_grid, dy):
    y = deterministic_value(linear, small_grid) + dy
    assert rate_discrete(linear, small_grid, y).value == pytest.approx(
        rate_linear_oracle(linear, y, n=small_grid.n), rel=1e-2)


@pytest.mark.slow
@pytest.mark.parametrize("n", [16, 32])
def test_linear_rate_parabola_on_default_grids(linear, n):
    grid = SpaceTimeGrid.default(n, linear.T)
    for dy in (-0.5, 0.5):
        y = deterministic_value(linear, grid) + dy
        assert rate_discrete(linear, grid, y).value == pytest.approx(rate_linear_oracle(linear, y, n=n), rel=1e-2)


def test_reference_rate_uses_default_grid(linear):
    grid = SpaceTimeGrid.default(16, linear.T)
    mu = deterministic_value(linear, grid)
    assert rate_reference(linear, mu, 16).value == 0.0
    result = rate_reference(linear, mu + 0.3, 16)
    assert (result.n, result.m) == (16, 64)
    assert result.value == pytest.approx(rate_linear_oracle(linear, mu + 0.3, n=16), rel=1e-2)


@pytest.mark.slow
def test_reference_rate_with_explicit_steps(linear):
    grid = SpaceTimeGrid(16, 128, linear.T)
    y = deterministic_value(linear, grid) + 0.3
    result = rate_reference(linear, y, 16, m=128)
    assert result.m == 128
    assert result.value == pytest.approx(rate_linear_oracle(linear, y, n=16), rel=1e-2)

import numpy as np
import pytest

from swerate.exceptions import AssumptionViolation, BumpSupportError, MembershipError
from swerate.grid import SpaceTimeGrid, laplacian_interior
from swerate.inverse import (
    bump,
    bump_laplacian_excess,
    bump_nodal,
    check_membership,
    invert_upsilon_n,
    modified_control,
    modify_terminal,
)
from swerate.problem import SIN_PI_X, make_problem
from swerate.skeleton import BallSampler, Control, DiscretePath, upsilon_n

FINE = SpaceTimeGrid(4, 256, 1.0)


def test_inverse_undoes_forward_map(any_preset):
    h = BallSampler(1.0, seed=0).sample(FINE)
    back = invert_upsilon_n(any_preset, upsilon_n(any_preset, h))
    assert (back - h).norm <= 1e-2


def test_boundary_cell_value():
    spec = make_problem(b="1 + x", sigma="2", u0=SIN_PI_X, v0="0")
    back = invert_upsilon_n(spec, upsilon_n(spec, Control.zeros(FINE)))
    np.testing.assert_allclose(back.values[:, 0], -0.5)


def test_membership(nonlin_a):
    path = upsilon_n(nonlin_a, Control.zeros(FINE))
    assert check_membership(nonlin_a, path).passed
    pos = path.pos.copy()
    pos[0, 2] += 0.1
    shifted = DiscretePath(FINE, pos, path.vel)
    report = check_membership(nonlin_a, shifted)
    assert not report.initial_position_ok
    assert report.failures() == ["initial_position"]
    with pytest.raises(MembershipError):
        invert_upsilon_n(nonlin_a, shifted)


def test_vanishing_sigma_rejected():
    spec = make_problem(b="0", sigma="x", u0=SIN_PI_X, v0="0")
    path = upsilon_n(spec, Control.zeros(FINE))
    with pytest.raises(AssumptionViolation) as info:
        invert_upsilon_n(spec, path)
    assert info.value.min_abs_sigma < 1e-6


def test_bump_shape():
    xs = np.array([0.0, 0.5, 0.6, 0.75, 1.0])
    np.testing.assert_allclose(bump(4, 0.6, 2.0, xs), [0.0, 2.0, 2.0, 2.0, 0.0], atol=1e-15)
    with pytest.raises(BumpSupportError):
        bump(2, 0.5, 1.0, xs)


@pytest.mark.parametrize("n", [4, 8, 16, 32])
def test_bump_discrete_second_difference_bound(n):
    assert bump_laplacian_excess(n, 0.5, 1.3) <= 1e-12
    assert bump_laplacian_excess(n, 0.3, -0.7) <= 1e-12


def test_modified_terminal_hits_target(nonlin_a):
    h = BallSampler(1.0, seed=4).sample(FINE)
    path = upsilon_n(nonlin_a, h)
    target = path.terminal(0.5) + 0.2
    assert modify_terminal(path, target, 0.5).terminal(0.5) == pytest.approx(target, abs=1e-13)
    f, h_mod = modified_control(nonlin_a, path, h, target, 0.5)
    assert f.terminal(0.5) == pytest.approx(target, abs=1e-13)
    assert np.all(np.isfinite(h_mod.values))
    np.testing.assert_array_equal(h_mod.values[:, 0], 0.0)
    assert (invert_upsilon_n(nonlin_a, f) - h_mod).norm <= 1e-2


def test_modified_control_boundary_cell_matches_inversion():
    spec = make_problem(b="1 + x", sigma="2", u0=SIN_PI_X, v0="0")
    h = BallSampler(1.0, seed=6).sample(FINE)
    path = upsilon_n(spec, h)
    f, h_mod = modified_control(spec, path, h, path.terminal(0.5) + 0.3, 0.5)
    np.testing.assert_allclose(h_mod.values[:, 0], -0.5)
    np.testing.assert_allclose(h_mod.values[:, 0], invert_upsilon_n(spec, f).values[:, 0])


def test_membership_reports_polygonal_defect(any_preset):
    path = upsilon_n(any_preset, BallSampler(1.0, seed=2).sample(FINE))
    report = check_membership(any_preset, path)
    assert report.polygonal_ok
    assert 0.0 <= report.violations["polygonal"] <= 1e-9


def test_modify_terminal_at_current_value_is_identity(nonlin_a):
    path = upsilon_n(nonlin_a, BallSampler(1.0, seed=3).sample(FINE))
    same = modify_terminal(path, path.terminal(0.5), 0.5)
    np.testing.assert_array_equal(same.pos, path.pos)
    np.testing.assert_array_equal(same.vel, path.vel)


def test_modify_terminal_keeps_initial_state(nonlin_a):
    path = upsilon_n(nonlin_a, BallSampler(1.0, seed=3).sample(FINE))
    moved = modify_terminal(path, path.terminal(0.5) - 0.4, 0.5)
    np.testing.assert_array_equal(moved.pos[0], path.pos[0])
    np.testing.assert_array_equal(moved.vel[0], path.vel[0])
    assert check_membership(nonlin_a, moved).passed


def test_linear_modified_control_closed_form(linear):
    grid = SpaceTimeGrid(8, 64, 1.0)
    h = BallSampler(1.0, seed=5).sample(grid)
    path = upsilon_n(linear, h)
    gaps = []
    for dy in (0.2, 0.4):
        _, h_mod = modified_control(linear, path, h, path.terminal(0.5) + dy, 0.5)
        w = bump_nodal(8, 0.5, dy)[1:-1]
        tm = grid.midpoints[:, None]
        expected = h.values[:, 1:] + 2.0 * w - tm ** 2 * laplacian_interior(w, 8)
        np.testing.assert_allclose(h_mod.values[:, 1:], expected, atol=1e-12)
        gaps.append(np.linalg.norm(h_mod.values[:, 1:] - h.values[:, 1:]))
    assert gaps[1] == pytest.approx(2.0 * gaps[0], rel=1e-12)


def test_round_trip_error_shrinks_with_time_steps(nonlin_a):
    coarse = SpaceTimeGrid(4, 128, 1.0)
    h = BallSampler(1.0, seed=1).sample(coarse)
    errors = []
    for control in (h, h.embed(SpaceTimeGrid(4, 256, 1.0))):
        back = invert_upsilon_n(nonlin_a, upsilon_n(nonlin_a, control))
        errors.append((back - control).norm)
    assert errors[1] < 0.6 * errors[0]

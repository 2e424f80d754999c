import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tzlab import tzitzeica as tz
from tzlab.acceptance import RESONANT_L, lattice5_direction, lattice5_grid
from tzlab.fields import ScalarField, TorusGrid, spectral_derivative


@pytest.fixture(scope="module")
def resonant():
    return TorusGrid(RESONANT_L, RESONANT_L, 32, 32)


def test_residual_of_zero_is_exactly_zero(square):
    assert np.all(tz.tzitzeica_residual(ScalarField.zeros(square)).values == 0)


@settings(max_examples=25, deadline=None)
@given(c=st.floats(-3, 3).filter(lambda c: abs(c) > 1e-3))
def test_residual_of_constant(c):
    # closed form of Lap v - 4e^{-2v} + 4e^{v} at v = c
    g = TorusGrid(1.0, 1.0, 8, 8)
    res = tz.tzitzeica_residual(ScalarField(g, np.full(g.shape, c))).values
    assert np.allclose(res, 4 * np.exp(c) - 4 * np.exp(-2 * c), rtol=1e-14, atol=0)
    assert np.all(res != 0)


def test_resonant_mode_residual_is_second_order(resonant):
    eps = 1e-6
    v = ScalarField.from_function(resonant, lambda x, y: eps * np.cos(np.sqrt(12.0) * x) + 0 * y)
    assert np.max(np.abs(tz.tzitzeica_residual(v).values)) < 1e-10


def test_range_is_enforced(square):
    v = np.zeros(square.shape)
    v[0, 0] = -301.0
    with pytest.raises(tz.TzitzeicaRangeError, match="300"):
        tz.tzitzeica_residual(ScalarField(square, v))


def test_constant_solution(square):
    sol = tz.constant_solution(square)
    assert np.all(sol.v.values == 0) and sol.residual_norm == 0 and sol.lineage == "constant"
    assert np.all(2 * np.exp(sol.v.values) == 2)


def test_certify_rejects_unknown_lineage(square):
    with pytest.raises(ValueError):
        tz.Solution.certify(ScalarField.zeros(square), "guessed")


# -- one-dimensional reduction ------------------------------------------------

def test_rest_point_and_energy():
    prof = tz.integrate_1d(0.0, 0.0, 3.0, 256)
    assert np.all(prof.v == 0) and prof.E == 6.0 and prof.energy_drift == 0


def test_small_amplitude_period():
    assert tz.period_1d(1e-3) == pytest.approx(np.pi / np.sqrt(3), rel=1e-3)


def test_energy_drift_over_ten_periods():
    T = tz.period_1d(0.8)
    prof = tz.integrate_1d(0.8, 0.0, 10 * T, int(10 * T / 1e-3))
    assert prof.energy_drift < 1e-10


def test_rk4_order_against_reference():
    # self-convergence of the 1D integrator
    ends = [tz.integrate_1d(0.5, 0.2, 2.0, n).v[-1] for n in (100, 200, 400)]
    order = np.log2(abs(ends[0] - ends[1]) / abs(ends[1] - ends[2]))
    assert abs(order - 4) < 0.3


def test_blow_up_is_flagged():
    prof = tz.integrate_1d(0.0, -60.0, 50.0, 64)
    assert prof.failed and len(prof.v) < 65
    with pytest.raises(ValueError):
        tz.integrate_1d(0.0, 0.0, 1.0, 10)


# -- Newton --------------------------------------------------------------------

def test_newton_fixed_point(square):
    sol = tz.solve_newton(ScalarField.zeros(square))
    assert sol.stats["iterations"] <= 1 and sol.residual_norm == 0


def test_newton_from_constant_guess_finds_zero(square):
    sol = tz.solve_newton(ScalarField(square, np.full(square.shape, 0.3)))
    assert sol.residual_norm < 1e-10
    assert np.ptp(sol.v.values) < 1e-12 and abs(np.mean(sol.v.values)) < 1e-10
    assert sol.stats["history"][0] > sol.stats["history"][-1]


def test_newton_near_bifurcation(resonant):
    kernel_mode = np.cos(np.sqrt(12.0) * resonant.mesh()[0])
    guess = ScalarField(resonant, 0.2 * kernel_mode)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            sol = tz.solve_newton(guess, max_iter=40)
    except tz.SingularJacobianError as exc:
        assert "continu" in str(exc)
    else:
        assert sol.residual_norm < 1e-10
        if np.ptp(sol.v.values) < 1e-12:
            assert sol.stats["near_singular"]


def test_newton_failure_carries_best_iterate(square):
    guess = ScalarField.from_function(square, lambda x, y: 3 * np.cos(x) * np.cos(y))
    with pytest.raises(tz.ConvergenceError) as info:
        tz.solve_newton(guess, max_iter=1)
    assert info.value.best is not None and info.value.history
    with pytest.raises(ValueError):
        tz.solve_newton(guess, tol=0)


# -- linearization -------------------------------------------------------------

def test_jacobian_is_symmetric(nontrivial, rng):
    g, v = nontrivial.grid, nontrivial.v.values
    u, w = rng.standard_normal((2,) + g.shape)
    a = np.sum(tz.jacobian_apply(v, g, u) * w)
    b = np.sum(u * tz.jacobian_apply(v, g, w))
    assert abs(a - b) <= 1e-10 * abs(a)


@pytest.mark.parametrize("eps", [1e-4, 1e-5])
def test_jacobian_matches_finite_differences(nontrivial, eps):
    g, v = nontrivial.grid, nontrivial.v.values
    w = lattice5_direction(g).values
    fd = (tz.residual_array(v + eps * w, g) - tz.residual_array(v - eps * w, g)) / (2 * eps)
    err = np.max(np.abs(fd - tz.jacobian_apply(v, g, w)))
    # truncation eps^2/6 * |third derivative of 4e^v - 4e^{-2v}| * |w|^3,
    # plus roundoff of order 1e-16 / eps
    third = np.max((32 * np.exp(-2 * v) + 4 * np.exp(v)) * np.abs(w) ** 3) / 6
    size = np.max(np.abs(spectral_derivative(v, g, 0, 2)) + np.abs(spectral_derivative(v, g, 1, 2))
                  + 4 * np.exp(-2 * v) + 4 * np.exp(v))
    roundoff = 100 * np.finfo(float).eps * size / eps
    assert err < 1.1 * third * eps ** 2 + roundoff


def test_finite_difference_error_is_second_order(nontrivial):
    g, v = nontrivial.grid, nontrivial.v.values
    w = lattice5_direction(g).values
    J = tz.jacobian_apply(v, g, w)

    def err(eps):
        fd = (tz.residual_array(v + eps * w, g) - tz.residual_array(v - eps * w, g)) / (2 * eps)
        return np.max(np.abs(fd - J))

    assert np.log2(err(1e-3) / err(5e-4)) == pytest.approx(2, abs=0.1)


def test_mean_value_identity(nontrivial):
    v = nontrivial.v.values
    mean = np.mean(4 * np.exp(-2 * v) - 4 * np.exp(v))
    assert abs(mean) * nontrivial.grid.area <= 1e-10 * nontrivial.grid.area


# -- continuation --------------------------------------------------------------

def test_continuation_rejects_zero_and_non_kernel_directions(resonant):
    base = tz.constant_solution(resonant)
    zero = ScalarField(resonant, spectral_derivative(base.v.values, resonant, 0))
    with pytest.raises(ValueError, match="zero"):
        tz.continue_branch(base, zero, 0.1, 2)
    bad = ScalarField.from_function(resonant, lambda x, y: np.cos(x * 2 * np.pi / RESONANT_L) + 0 * y)
    with pytest.raises(ValueError, match="kernel"):
        tz.continue_branch(base, bad, 0.1, 2)


def test_zero_step_returns_base(resonant):
    base = tz.constant_solution(resonant)
    w = ScalarField.from_function(resonant, lambda x, y: np.cos(np.sqrt(12.0) * x) + 0 * y)
    assert list(tz.continue_branch(base, w, 0.0, 5)) == [base]


def test_branch_is_certified_and_nonconstant(one_dim):
    assert one_dim.lineage == "continued" and one_dim.residual_norm < 1e-10
    assert np.ptp(one_dim.v.values) > 0.5
    assert one_dim.stats["scale"] != 1 and one_dim.grid.Lx == one_dim.grid.Ly


def test_branch_matches_one_dimensional_profiles(one_dim):
    g = one_dim.grid
    row = one_dim.v.values[:, 0]
    vx0 = spectral_derivative(one_dim.v.values, g, 0)[0, 0]
    ode = tz.integrate_1d(row[0], vx0, g.Lx, 64 * g.Nx)
    assert np.max(np.abs(ode.v[::64][: g.Nx] - row)) < 1e-6
    # the cell holds two periods of the orbit through the maximum
    assert 2 * tz.period_1d(row.max(), steps_per_unit=20000) == pytest.approx(g.Lx, rel=1e-6)


def test_two_dimensional_branch(nontrivial):
    v = nontrivial.v.values
    assert nontrivial.residual_norm < 1e-10
    # genuinely two-dimensional: varies in both directions and is not a function of x + y
    assert np.ptp(v, axis=0).max() > 0.1 and np.ptp(v, axis=1).max() > 0.1
    assert nontrivial.grid.Lx / lattice5_grid(32).Lx == pytest.approx(nontrivial.stats["scale"])

import cmath
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tzlab import theta as th


def _direct_sum(omega, z, R):
    """Plain double loop over the box |n|_inf <= R, no vectorization."""
    g = len(z)
    total = 0j
    for n in itertools.product(range(-R, R + 1), repeat=g):
        q = sum(omega[i][j] * n[i] * n[j] for i in range(g) for j in range(g))
        total += cmath.exp(0.5 * q + sum(z[i] * n[i] for i in range(g)))
    return total


def _draw(seed, g0):
    rng = np.random.default_rng(seed)
    data = th.PrymData.random(g0, rng)
    z = rng.uniform(-0.5, 0.5, g0) + 1j * rng.uniform(-3, 3, g0)
    return data, z


def test_genus_one_at_zero_is_jacobi_theta():
    # theta_3 with nome q = e^{-1/2}: 1 + 2 sum q^{n^2}
    data = th.PrymData([[-1.0]])
    ref = 1 + 2 * sum(np.exp(-0.5 * n * n) for n in range(1, 40))
    assert th.theta_eval(data, [0.0]).value == pytest.approx(ref, abs=1e-14)


@pytest.mark.parametrize("g0", [1, 2, 3])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_against_direct_sum(g0, seed):
    data, z = _draw(seed, g0)
    R = {1: 30, 2: 16, 3: 15}[g0]
    ref = _direct_sum(data.omega.tolist(), list(z), R)
    out = th.theta_eval(data, z)
    assert out.tail_bound <= 1e-14 and out.radius <= R
    assert abs(out.value - ref) <= 1e-13 * max(1.0, abs(ref))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), g0=st.integers(1, 3))
def test_even_and_two_pi_i_periodic(seed, g0):
    data, z = _draw(seed, g0)
    t = th.theta_eval(data, z).value
    assert th.theta_eval(data, -z).value == pytest.approx(t, rel=1e-12, abs=1e-13)
    e = np.zeros(g0)
    e[seed % g0] = 1
    assert th.theta_eval(data, z + 2j * np.pi * e).value == pytest.approx(t, rel=1e-12, abs=1e-13)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), g0=st.integers(1, 3))
def test_quasi_periodicity(seed, g0):
    data, z = _draw(seed, g0)
    rng = np.random.default_rng(seed + 1)
    span = 2 if g0 < 3 else 1
    m = rng.integers(-span, span + 1, g0)
    assert th.quasi_periodicity_defect(data, z, m) < 1e-10


def test_printed_sign_fails():
    data, z = _draw(7, 2)
    m = np.array([1, -1])
    base = th.theta_eval(data, z).value
    shifted = th.theta_eval(data, z + data.omega @ m, 1e-13).value
    wrong = np.exp(-0.5 * m @ data.omega @ m + z @ m) * base
    right = th.periodicity_factor(data, z, m) * base
    assert abs(shifted - right) < 1e-10 * (1 + abs(shifted))
    assert abs(shifted - wrong) > 1e-3 * (1 + abs(shifted))


def test_tail_bound_decreases_and_is_honest():
    data, z = _draw(3, 2)
    bounds = [th.tail_bound(data, z, R) for R in range(1, 8)]
    assert all(b2 < b1 for b1, b2 in zip(bounds, bounds[1:]))
    # the actual remainder beyond R = 2 is below the bound
    full = _direct_sum(data.omega.tolist(), list(z), 14)
    part = th.theta_eval(data, z, radius=2).value
    assert abs(full - part) <= th.tail_bound(data, z, 2)


def test_radius_grows_with_accuracy():
    data, z = _draw(4, 2)
    radii = [th.truncation_radius(data, z, tol) for tol in (1e-4, 1e-8, 1e-14)]
    assert radii == sorted(radii) and radii[0] < radii[-1]


@pytest.mark.parametrize("omega", [
    [[1.0]],                         # positive real part
    [[-1.0, 0.5], [0.4, -1.0]],      # not symmetric
    [[-1.0, 0.0], [0.0, 0.0]],       # semidefinite
])
def test_domain_errors(omega):
    with pytest.raises(th.ThetaDomainError):
        th.PrymData(omega)


def test_argument_validation():
    data = th.PrymData([[-1.0, 0.1], [0.1, -2.0]])
    with pytest.raises(ValueError):
        th.theta_eval(data, [0.0])
    with pytest.raises(ValueError):
        th.theta_eval(data, [0.0, 0.0], tol=0)
    assert th.quasi_periodicity_defect(data, [0.1, 0.2], [0, 0]) == 0


# -- Baker-Akhiezer phase --------------------------------------------------------

@pytest.fixture
def ba_setup():
    rng = np.random.default_rng(11)
    g0 = 2
    c = lambda: rng.standard_normal(g0) + 1j * rng.standard_normal(g0)
    data = th.PrymData(th.PrymData.random(g0, rng).omega, V=[c(), c(), c()], Vt=[c(), c(), c()],
                       alpha=[0.3, 0.1j, -0.2], e=c())
    ints = th.AbelianIntegrals(eta=c(), omega=[0.5 + 1j, -0.2j, 0.7], omega_tilde=[0.1, 0.4j, -1.0])
    return data, ints


def test_ba_phase_at_origin(ba_setup):
    data, ints = ba_setup
    out = th.ba_phase(data, ints, 0, t=[0.0, 0.0])
    assert out.exponent == 0
    assert np.allclose(out.theta_argument, ints.eta - data.e)
    assert np.allclose(out.denominator_arguments[1], -data.e)


def test_ba_phase_is_real_linear_in_z_and_t(ba_setup):
    data, ints = ba_setup
    f = lambda z, t: th.ba_phase(data, ints, z, t)
    a, b = f(0.3 - 0.2j, [0.1, 0.0]), f(-1.1 + 0.5j, [0.0, -0.4])
    s = f(0.3 - 0.2j - 1.1 + 0.5j, [0.1, -0.4])
    assert s.exponent == pytest.approx(a.exponent + b.exponent)
    flow = lambda p: p.theta_argument - ints.eta + data.e
    assert np.allclose(flow(s), flow(a) + flow(b))


def test_ba_phase_terms(ba_setup):
    data, ints = ba_setup
    z, t1 = 0.4 + 0.3j, 0.25
    out = th.ba_phase(data, ints, z, [t1])
    tp = t1 + 1j * t1
    assert out.exponent_terms["z"] == pytest.approx(z * (ints.omega[0] - data.alpha[0]))
    assert out.exponent_terms["zbar"] == pytest.approx(np.conj(z) * ints.omega_tilde[0])
    assert out.exponent_terms["t"][0] == pytest.approx(tp * (ints.omega[1] - data.alpha[1])
                                                       + np.conj(tp) * ints.omega_tilde[1])
    assert np.allclose(out.argument_terms["t"][0], tp * data.V[1] + np.conj(tp) * data.Vt[1])


def test_ba_phase_reports_missing_vectors(ba_setup):
    data, ints = ba_setup
    with pytest.raises(ValueError, match="V, Vt, alpha"):
        th.ba_phase(data, ints, 0.1, t=[0.1, 0.2, 0.3])
    short = th.PrymData(data.omega)
    with pytest.raises(ValueError, match="orders 0..0"):
        th.ba_phase(short, ints, 0.1)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tzlab import spectral as sp
from tzlab import tzitzeica as tz
from tzlab.fields import ScalarField


@pytest.fixture(scope="module")
def clifford(clifford_grid):
    return tz.constant_solution(clifford_grid)


@pytest.mark.parametrize("lam", [1.0, 1j, 0.6 * np.exp(0.3j), 1.8 * np.exp(-2.1j)])
def test_clifford_multipliers(clifford, lam):
    g = clifford.grid
    T = sp.holonomy(clifford, lam, "x")
    expected = np.exp(g.Lx * sp.clifford_exponents(lam))
    # lam = 1 has a double exponent, so compare the well-conditioned coefficients
    coeffs = np.poly(expected)
    assert np.max(np.abs(np.poly(T) - coeffs)) < 1e-8 * max(1, np.max(np.abs(coeffs)))


def test_clifford_exponents_lie_on_the_clifford_curve():
    curve = sp.TrigonalCurve.clifford()
    for lam in (0.5, 2j, np.exp(1j)):
        assert sp.match_sets(sp.clifford_exponents(lam), curve.roots(lam)) < 1e-12


def test_char_poly_matches_numpy(rng):
    T = rng.standard_normal((5, 3, 3)) + 1j * rng.standard_normal((5, 3, 3))
    cp = sp.char_poly(T)
    for M, c in zip(T, cp):
        assert np.allclose(np.poly(M), [1, -c[0], -c[1], -c[2]], atol=1e-12)


def test_holonomy_has_unit_determinant(nontrivial):
    # exactly 1 for the flow; RK4 leaves an O(h^4) defect
    n = sp.DEFAULT_STEPS_FACTOR * nontrivial.grid.Ny
    d = [np.max(np.abs(np.linalg.det(sp.holonomies(nontrivial, [0.7j, 1.4], [(0, 0), (0.3, 0.9)],
                                                     "y", steps)) - 1)) for steps in (n, 2 * n)]
    assert d[0] < 1e-9 and np.log2(d[0] / d[1]) == pytest.approx(4, abs=0.5)


def test_char_poly_is_base_point_independent(nontrivial):
    lams = [0.8 * np.exp(0.4j), 1.3j]
    table = sp.charpoly_table(nontrivial, lams, sp.default_bases(nontrivial.grid, 4))
    assert table.shape == (2, 4, 6)
    ref = table[:, :1]
    assert np.max(np.abs(table - ref) / np.maximum(1, np.abs(ref))) < 1e-9


def test_base_change_is_a_conjugation(nontrivial):
    # T at (b, 0) and at 0 along x are conjugate, hence have the same spectrum
    T = sp.holonomies(nontrivial, [1.1j], [(0, 0), (0.37 * nontrivial.grid.Lx, 0)], "x")[0]
    assert sp.match_sets(np.linalg.eigvals(T[0]), np.linalg.eigvals(T[1])) < 1e-8


def test_scan_diagnostics(nontrivial):
    out = sp.spectral_scan(nontrivial, [0.5j, 2.0 * np.exp(0.2j)], steps=None)
    for s in out:
        assert s.spread < 1e-9 and s.commutator < 1e-9 and s.det_spread < 1e-9


def test_uncertified_and_bad_lambdas(square):
    bad = tz.Solution.certify(ScalarField.from_function(square, lambda x, y: np.cos(x) + 0 * y), "newton")
    with pytest.raises(ValueError, match="certified"):
        sp.holonomy(bad, 1.0)
    with pytest.raises(ValueError, match="certified"):
        sp.spectral_scan(bad)
    with pytest.raises(ValueError):
        sp.charpoly_table(tz.constant_solution(square), [0.0])


def test_default_lambdas_avoid_real_axis():
    lams = sp.default_lambdas(24)
    assert len(lams) == 24 and np.min(np.abs(lams.imag)) > 0.1


# -- trigonal curves -------------------------------------------------------------

def test_reality_conditions_are_enforced():
    with pytest.raises(ValueError, match="q_j"):
        sp.TrigonalCurve([1j], [1j, 1j])
    with pytest.raises(ValueError, match="p_j"):
        sp.TrigonalCurve([-3.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        sp.TrigonalCurve([1.0, 2.0], [1j, 1j])


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), k=st.integers(0, 3), n=st.integers(0, 3))
def test_involutions_preserve_random_curves(seed, k, n):
    curve = sp.TrigonalCurve.random(k, n, np.random.default_rng(seed))
    res = sp.involution_check(curve, samples=8, seed=seed % 1000)
    scale = max(1.0, float(np.max(np.abs(np.concatenate([curve.q, curve.p])))))
    tol = 1e-10 * scale ** 3 * 4.0 ** (2 * max(k, n) + 1)
    assert res["on_curve"] < tol and res["sigma"] < tol and res["tau"] < tol


def test_naive_antiholomorphic_map_fails():
    curve = sp.TrigonalCurve.random(2, 1, np.random.default_rng(5))
    lam = 0.8 * np.exp(0.9j)
    mus = curve.roots(lam)
    l2, m2 = sp.tau(lam, mus)
    assert np.max(np.abs(sp.curve_eval(curve, l2, m2))) < 1e-10
    assert np.max(np.abs(sp.curve_eval(curve, l2, -m2))) > 1e-3


def test_sigma_reverses_signs():
    l2, m2 = sp.sigma(2j, np.array([1.0, -2.0]))
    assert l2 == -2j and np.all(m2 == [-1.0, 2.0])


def test_affine_origin_is_rejected():
    with pytest.raises(ValueError):
        sp.TrigonalCurve.clifford().roots(0)
    with pytest.raises(ValueError):
        sp.curve_eval(sp.TrigonalCurve.clifford(), 0, 1)

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tzlab import nvflow as nv
from tzlab import tzitzeica as tz
from tzlab.acceptance import RESONANT_L
from tzlab.fields import FieldError, ScalarField, TorusGrid, fourier_shift, inner


def _lattice_kernel_dim(L, c=12.0, tol=1e-9):
    # cos/sin pairs of integer wavevectors with |2 pi m / L|^2 = c
    s = (2 * np.pi / L) ** 2
    M = int(np.sqrt(c / s)) + 1
    return sum(1 for m, n in itertools.product(range(-M, M + 1), repeat=2)
               if abs(s * (m * m + n * n) - c) < tol)


@pytest.fixture(scope="module")
def nontrivial_kernel(nontrivial):
    return nv.kernel_basis(nontrivial)


def test_operator_at_zero_on_constants(square):
    out = nv.linearized_apply(tz.constant_solution(square), ScalarField(square, np.ones(square.shape)))
    assert np.all(out.values == 12)


def test_operator_grid_mismatch(square, clifford_grid):
    with pytest.raises(FieldError):
        nv.linearized_apply(tz.constant_solution(square), ScalarField.zeros(clifford_grid))


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_operator_is_self_adjoint(nontrivial, seed):
    rng = np.random.default_rng(seed)
    g = nontrivial.grid
    a, b = (ScalarField(g, rng.standard_normal(g.shape)) for _ in range(2))
    lhs = inner(a.values, nv.linearized_apply(nontrivial, b).values, g)
    rhs = inner(nv.linearized_apply(nontrivial, a).values, b.values, g)
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


@pytest.mark.parametrize("L", [RESONANT_L, 2 * np.pi, 2 * np.pi * np.sqrt(5 / 12), 2 * np.pi / np.sqrt(3)])
def test_constant_kernel_dimension(L):
    g = TorusGrid(L, L, 32, 32)
    K = nv.kernel_basis(tz.constant_solution(g))
    assert len(K) == _lattice_kernel_dim(L)
    for k in K:
        assert nv.kernel_defect(tz.constant_solution(g), k.values) < 1e-12


def test_nontrivial_kernel(nontrivial, nontrivial_kernel):
    K = nontrivial_kernel
    # two translations plus the two directions broken by the lattice symmetry
    assert len(K) == 4
    G = np.array([[np.mean(a.values * b.values) for b in K] for a in K])
    assert np.allclose(G, np.eye(4), atol=1e-10)
    for k in K:
        assert nv.kernel_defect(nontrivial, k.values) < 10 * nv.KERNEL_TOL
    # translations lie in the computed kernel up to the aliasing of v_x, v_y
    P = np.column_stack([k.values.ravel() for k in K])
    for t in nv.translation_modes(nontrivial):
        t = t.ravel() / np.sqrt(np.mean(t * t))
        assert np.sqrt(np.mean((t - P @ (P.T @ t) / t.size) ** 2)) < 1e-5


def test_kernel_block_too_small(nontrivial):
    with pytest.raises(nv.KernelError):
        nv.kernel_basis(nontrivial, block=3)


def test_kernel_eigenvalues_are_returned(nontrivial):
    K, eigs = nv.kernel_basis(nontrivial, return_eigenvalues=True)
    assert len(eigs) == len(K) and max(map(abs, eigs)) < nv.KERNEL_TOL


# -- deformation ---------------------------------------------------------------

def test_zero_direction_gives_constant_path(nontrivial):
    path = nv.deform(nontrivial, ScalarField.zeros(nontrivial.grid), 0.1, 3)
    assert len(path) == 4 and all(s is nontrivial for s in path.solutions)
    rep = nv.isospectrality_report(path, lams=[1j])
    assert rep["max_drift"] == 0 and rep["periods_constant"]


def test_non_kernel_direction_is_rejected(nontrivial):
    w = ScalarField.from_function(nontrivial.grid, lambda x, y: np.cos(x) + 0 * y)
    with pytest.raises(ValueError, match="kernel"):
        nv.deform(nontrivial, w, 0.01, 2)


def test_translation_direction_reproduces_shifts(nontrivial, nontrivial_kernel):
    # the first basis vector is the (projected, normalized) x translation
    t = nontrivial_kernel[0]
    vx = nv.translation_modes(nontrivial)[0]
    assert abs(np.mean(t.values * vx)) / np.sqrt(np.mean(vx * vx)) > 0.99
    dists = []
    for dt in (0.02, 0.01):
        path = nv.deform(nontrivial, t, dt, 1)
        assert not path.failed and not path.flags
        assert path.solutions[-1].residual_norm < 1e-10
        dists.append(nv.translation_distance(path.solutions[-1].v, nontrivial.v))
    # the straight predictor leaves the orbit only through the kernel part of the
    # higher-order terms; <v_xx, v_x> = 0 and the reflection symmetry of v kill the
    # second-order one, so the distance is third order in dt
    assert dists[0] < 1e-3 and np.log2(dists[0] / dists[1]) == pytest.approx(3, abs=0.3)


def test_nontrivial_direction_moves_off_the_orbit(nontrivial, nontrivial_kernel):
    w = nontrivial_kernel[2]
    dt = 0.01 / np.max(np.abs(w.values))
    path = nv.deform(nontrivial, w, dt, 3)
    assert not path.failed, path.flags
    assert nv.translation_distance(path.solutions[-1].v, nontrivial.v) > 1e-3
    # Newton corrections are orthogonal to the kernel at the previous point
    for k in range(1, len(path)):
        prev = path.solutions[k - 1]
        K = np.column_stack([b.values.ravel() for b in nv.kernel_basis(prev)])
        corr = path.solutions[k].v.values - prev.v.values - dt * path.directions[k - 1].values
        assert np.max(np.abs(K.T @ corr.ravel() / corr.size)) < 1e-10


def test_translation_distance(nontrivial):
    g = nontrivial.grid
    shifted = ScalarField(g, fourier_shift(nontrivial.v.values, g, 0.37, -1.21))
    assert nv.translation_distance(shifted, nontrivial.v) < 1e-9
    assert nv.translation_distance(ScalarField(g, 1.1 * nontrivial.v.values), nontrivial.v) > 1e-2


def test_translates_are_isospectral(nontrivial):
    g = nontrivial.grid
    sols = nv.translation_path(nontrivial, [(0, 0), (0.4 * g.Lx, 0.1 * g.Ly)])
    rep = nv.isospectrality_report(sols, lams=[0.7j, 1.5 * np.exp(0.3j)])
    assert rep["entries"] == 2 and rep["max_drift"] < 1e-9 and rep["max_baseline"] < 1e-9

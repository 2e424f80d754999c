"""Deformations of Tzitzeica solutions along kernel directions of the linearization.

The kernel of  Lap + 8 e^{-2v} + 4 e^{v}  is the tangent space of the solution
set at fixed periods. Flowing along a kernel direction with a gauge-fixed
Newton corrector moves the solution while the holonomy spectra are monitored.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .fields import FieldError, ScalarField, fourier_shift, spectral_derivative
from .spectral import charpoly_table, default_lambdas
from .tzitzeica import (Solution, jacobian_apply, make_projector, newton_iterate,
                        potential, solve_jacobian)

log = logging.getLogger(__name__)

KERNEL_TOL = 1e-8
INVERSE_SHIFT = 1e-7


class KernelError(RuntimeError):
    def __init__(self, message, eigenvalues=()):
        super().__init__(message)
        self.eigenvalues = list(eigenvalues)


def linearized_apply(sol: Solution, w: ScalarField) -> ScalarField:
    """Lap w + (8 e^{-2v} + 4 e^{v}) w."""
    if w.grid != sol.grid:
        raise FieldError("w and the solution live on different grids")
    return ScalarField(w.grid, jacobian_apply(sol.v.values, sol.grid, w.values))


def _rms_normalize(x):
    return x / np.sqrt(np.mean(x * x))


def _orthonormal(vectors):
    """Orthonormal columns (mean inner product) of the span of ``vectors``, dropping dependent ones."""
    out = []
    for x in vectors:
        y = np.array(x, dtype=float)
        for q in out:
            y -= np.mean(q * y) * q
        for q in out:
            y -= np.mean(q * y) * q
        n = np.sqrt(np.mean(y * y))
        if n > 1e-8 * max(1.0, np.sqrt(np.mean(np.asarray(x) ** 2))):
            out.append(y / n)
    return out


def _constant_kernel(sol: Solution, tol: float):
    g = sol.grid
    c = float(potential(np.array(sol.v.values.flat[0])))
    X, Y = g.mesh()
    basis = []
    for i, kx in enumerate(g.kx):
        for j, ky in enumerate(g.ky):
            if abs(c - kx * kx - ky * ky) >= tol:
                continue
            # one representative per +-k pair; Nyquist modes are real cosines only
            if (kx, ky) < (0.0, 0.0) and (-kx in g.kx) and (-ky in g.ky):
                if not (i == g.Nx // 2 or j == g.Ny // 2):
                    continue
            phase = kx * X + ky * Y
            basis.extend([np.cos(phase), np.sin(phase)])
    return _orthonormal(basis), [c - kx * kx - ky * ky for kx in g.kx for ky in g.ky
                                 if abs(c - kx * kx - ky * ky) < tol]


def translation_modes(sol: Solution) -> list[np.ndarray]:
    g = sol.grid
    v = sol.v.values
    return [d for d in (spectral_derivative(v, g, 0), spectral_derivative(v, g, 1))
            if np.max(np.abs(d)) > 1e-10]


def kernel_basis(sol: Solution, tol: float = KERNEL_TOL, block: int = 8, max_iter: int = 12,
                 start=None, seed: int = 0, return_eigenvalues: bool = False):
    """Orthonormal basis (grid-mean product) of eigenvectors with |eigenvalue| < tol.

    Shifted block inverse iteration around 0 with MINRES inner solves and
    Rayleigh-Ritz extraction. Translation modes, when present, come first.
    """
    g = sol.grid
    v = sol.v.values
    if np.ptp(v) == 0:
        basis, eigs = _constant_kernel(sol, tol)
        fields = [ScalarField(g, b) for b in basis]
        return (fields, eigs) if return_eigenvalues else fields

    trans = translation_modes(sol)
    rng = np.random.default_rng(seed)
    init = list(start or []) + trans
    while len(init) < block:
        init.append(rng.standard_normal(g.shape))
    X = _orthonormal(init)[:block]
    while len(X) < block:
        X = _orthonormal(X + [rng.standard_normal(g.shape)])
    theta = None
    for it in range(max_iter):
        Y = [solve_jacobian(v, g, x, rtol=1e-12, shift=INVERSE_SHIFT)[0] for x in X]
        Q = np.linalg.qr(np.column_stack([y.ravel() for y in Y]))[0]
        JQ = np.column_stack([jacobian_apply(v, g, Q[:, i].reshape(g.shape)).ravel()
                              for i in range(Q.shape[1])])
        H = Q.T @ JQ
        theta, S = np.linalg.eigh(0.5 * (H + H.T))
        order = np.argsort(np.abs(theta))
        theta, S = theta[order], S[:, order]
        V = Q @ S
        resid = np.linalg.norm(JQ @ S - V * theta, axis=0)
        X = [_rms_normalize(V[:, i].reshape(g.shape)) for i in range(V.shape[1])]
        small = np.abs(theta) < tol
        if np.all(small):
            raise KernelError(f"kernel dimension >= block size {block}; increase block",
                              theta.tolist())
        # kernel pairs converged and separated from the rest of the block
        if np.all(resid[small] < tol) and np.abs(theta[~small][0]) > 100 * tol:
            break
    else:
        raise KernelError("shifted inverse iteration did not converge", theta.tolist())
    kern = [X[i] for i in np.nonzero(small)[0]]
    if trans:
        # put translations first when they lie in the computed kernel
        P = np.column_stack([k.ravel() for k in kern]) if kern else np.zeros((v.size, 0))
        lead = []
        for t in trans:
            proj = P @ (P.T @ t.ravel() / v.size)
            if np.sqrt(np.mean((t.ravel() - proj) ** 2)) < 1e-5 * np.sqrt(np.mean(t ** 2)):
                lead.append(proj.reshape(g.shape))
        kern = _orthonormal(lead + kern)[:len(kern)]
    fields = [ScalarField(g, k) for k in kern]
    eigs = [float(t) for t in theta[small]]
    return (fields, eigs) if return_eigenvalues else fields


def kernel_defect(sol: Solution, w: np.ndarray) -> float:
    return float(np.max(np.abs(jacobian_apply(sol.v.values, sol.grid, w))) / np.max(np.abs(w)))


@dataclass(frozen=True, eq=False)
class DeformationPath:
    solutions: list
    times: list
    directions: list
    flags: list = field(default_factory=list)
    failed: bool = False

    def __len__(self):
        return len(self.solutions)

    @property
    def grid(self):
        return self.solutions[0].grid


def deform(sol: Solution, direction: ScalarField, dt: float, steps: int, tol: float = 1e-11,
           kernel_tol: float = KERNEL_TOL, max_newton: int = 12) -> DeformationPath:
    """Predictor along a kernel direction, then a gauge-fixed Newton corrector.

    Corrections are constrained orthogonal to the current kernel (which holds
    the translations and the direction itself); after each step the direction
    is re-projected onto the new kernel and rescaled to its original norm.
    """
    g = sol.grid
    w = np.array(direction.values, dtype=float)
    if direction.grid != g:
        raise FieldError("direction and solution live on different grids")
    wnorm = np.sqrt(np.mean(w * w))
    if wnorm == 0 or steps == 0 or dt == 0:
        n = steps + 1
        return DeformationPath([sol] * n, [k * dt for k in range(n)], [direction] * n)
    if kernel_defect(sol, w) > 1e-6:
        raise ValueError("direction is not in the kernel of the linearized operator")
    trans = translation_modes(sol)
    avoid_translations = all(abs(np.mean(w * t)) < 1e-8 * wnorm * np.sqrt(np.mean(t * t)) for t in trans)

    K = [k.values for k in kernel_basis(sol, kernel_tol)]
    dim0 = len(K)
    sols, times, dirs, flags = [sol], [0.0], [direction], []
    v = np.array(sol.v.values, dtype=float)
    failed = False
    for step in range(1, steps + 1):
        pred = v + dt * w
        project = make_projector(K, g)
        new, hist, ok = newton_iterate(pred, g, tol, max_newton, project=project)
        if not ok:
            flags.append(f"corrector diverged at step {step} (residual {hist[-1]:.2e})")
            failed = True
            break
        s = Solution.certify(ScalarField(g, new), "deformed", flow_time=step * dt, newton=len(hist) - 1)
        try:
            Kf = kernel_basis(s, kernel_tol, block=len(K) + 1, start=K)
        except Exception as exc:  # noqa: BLE001 - recorded as a path flag
            flags.append(f"kernel tracking failed at step {step}: {exc}")
            failed = True
            break
        K = [k.values for k in Kf]
        if len(K) < dim0:
            flags.append(f"kernel dimension dropped {dim0} -> {len(K)} at step {step}")
        Q = np.column_stack([k.ravel() for k in K])
        w = (Q @ (Q.T @ w.ravel()) / w.size).reshape(g.shape)
        if avoid_translations:
            # translations projected into the discrete kernel
            tr = [(Q @ (Q.T @ t.ravel()) / t.size).reshape(g.shape) for t in translation_modes(s)]
            for t in _orthonormal(tr):
                w = w - np.mean(t * w) * t
        kept = np.sqrt(np.mean(w * w)) / wnorm
        log.debug("step %d: direction kept %.3e of its norm", step, kept)
        if kept < 0.5:
            flags.append(f"direction left the kernel at step {step} (kept {kept:.2e})")
        w = w * (wnorm / np.sqrt(np.mean(w * w)))
        v = new
        sols.append(s)
        times.append(step * dt)
        dirs.append(ScalarField(g, w))
    return DeformationPath(sols, times, dirs, flags, failed)


def translation_distance(a: ScalarField, b: ScalarField) -> float:
    """min over shifts s of ||a - b(. + s)||_inf, the shift found by L2 least squares."""
    g = a.grid
    if b.grid != g:
        raise FieldError("fields live on different grids")
    A, B = a.values, b.values
    # coarse search over node shifts, then refine continuously
    corr = np.fft.ifft2(np.fft.fft2(A) * np.conj(np.fft.fft2(B))).real
    i, j = np.unravel_index(np.argmax(corr), corr.shape)
    start = np.array([-i * g.dx, -j * g.dy])
    cost = lambda s: float(np.mean((A - fourier_shift(B, g, s[0], s[1])) ** 2))
    res = minimize(cost, start, method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-20, "maxiter": 2000})
    best = min((res.x, start), key=cost)
    return float(np.max(np.abs(A - fourier_shift(B, g, best[0], best[1]))))


def translation_path(sol: Solution, shifts) -> list[Solution]:
    """Exact (Fourier) translates of ``sol`` by the given (sx, sy) shifts."""
    g = sol.grid
    return [Solution.certify(ScalarField(g, fourier_shift(sol.v.values, g, sx, sy)), "deformed")
            for sx, sy in shifts]


def _drift(tables):
    ref = tables[0]
    return np.max(np.stack([np.abs(t - ref) / np.maximum(1.0, np.abs(ref)) for t in tables]), axis=(0, 2, 3))


def isospectrality_report(path: DeformationPath | list, lams=None, steps: int | None = None,
                          base=(0.0, 0.0)) -> dict:
    """Max relative drift of the six char-poly coefficients along ``path`` per lambda.

    A translation baseline (exact translates of the first entry) is computed
    with the same machinery and reported as the noise floor.
    """
    sols = path.solutions if isinstance(path, DeformationPath) else list(path)
    lams = default_lambdas() if lams is None else np.atleast_1d(np.asarray(lams, dtype=complex))
    tables = [charpoly_table(s, lams, [base], steps) for s in sols]
    drift = _drift(tables)
    g = sols[0].grid
    shifts = [(0.0, 0.0), (0.31 * g.Lx, 0.17 * g.Ly), (0.62 * g.Lx, 0.55 * g.Ly), (0.13 * g.Lx, 0.83 * g.Ly)]
    base_tables = [charpoly_table(s, lams, [base], steps) for s in translation_path(sols[0], shifts)]
    floor = _drift(base_tables)
    periods = {(s.grid.Lx, s.grid.Ly) for s in sols}
    return {
        "lambdas": [[float(l.real), float(l.imag)] for l in lams],
        "drift": drift.tolist(),
        "baseline": floor.tolist(),
        "max_drift": float(np.max(drift)),
        "max_baseline": float(np.max(floor)),
        "entries": len(sols),
        "periods_constant": len(periods) == 1,
        "max_residual": float(max(s.residual_norm for s in sols)),
    }

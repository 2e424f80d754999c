"""Doubly periodic solutions of  v_xx + v_yy = 4 exp(-2v) - 4 exp(v)."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres, minres

from .fields import (FieldError, ScalarField, TorusGrid, spectral_derivative,
                     spectral_laplacian)

log = logging.getLogger(__name__)

V_MAX = 300.0
LINEARIZATION_CONSTANT = 12.0  # 8 e^{-2v} + 4 e^{v} at v = 0
LINEAGES = ("constant", "one_dimensional", "newton", "continued", "deformed")


class TzitzeicaRangeError(ValueError):
    """|v| exceeded the representable range of exp(-2v)."""


class ConvergenceError(RuntimeError):
    """Newton failed; ``best`` holds the lowest-residual iterate seen."""

    def __init__(self, message, best=None, history=()):
        super().__init__(message)
        self.best = best
        self.history = list(history)


class SingularJacobianError(ConvergenceError):
    pass


@dataclass(frozen=True, eq=False)
class Solution:
    v: ScalarField
    residual_norm: float
    lineage: str
    stats: dict = field(default_factory=dict)

    @property
    def grid(self) -> TorusGrid:
        return self.v.grid

    @classmethod
    def certify(cls, v: ScalarField, lineage: str, **stats) -> "Solution":
        if lineage not in LINEAGES:
            raise ValueError(f"unknown lineage {lineage!r}")
        res = float(np.max(np.abs(residual_array(v.values, v.grid))))
        return cls(v, res, lineage, dict(stats))


# ---------------------------------------------------------------------------
# residual and linearization

def _check_range(v: np.ndarray) -> None:
    if not np.all(np.isfinite(v)):
        raise FieldError("v has non-finite values")
    vmax = float(np.max(np.abs(v)))
    if vmax > V_MAX:
        raise TzitzeicaRangeError(f"|v| reaches {vmax:.3g} > {V_MAX}; exp(-2v) would overflow")


def residual_array(v: np.ndarray, grid: TorusGrid, lap_scale: float = 1.0) -> np.ndarray:
    _check_range(v)
    return lap_scale * spectral_laplacian(v, grid) - 4 * np.exp(-2 * v) + 4 * np.exp(v)


def tzitzeica_residual(v: ScalarField) -> ScalarField:
    """Pointwise  Lap v - 4 e^{-2v} + 4 e^{v}."""
    return ScalarField(v.grid, residual_array(v.values, v.grid))


def potential(v: np.ndarray) -> np.ndarray:
    """Zeroth-order coefficient of the linearized operator."""
    return 8 * np.exp(-2 * v) + 4 * np.exp(v)


def jacobian_apply(v: np.ndarray, grid: TorusGrid, w: np.ndarray, lap_scale: float = 1.0) -> np.ndarray:
    return lap_scale * spectral_laplacian(w, grid) + potential(v) * w


def _preconditioner(grid: TorusGrid, lap_scale: float = 1.0) -> LinearOperator:
    """SPD approximation (c - Lap)^{-1} of |J|^{-1}, diagonal in Fourier space."""
    n = grid.Nx * grid.Ny
    k2 = lap_scale * grid.k_squared()
    inv = 1.0 / (LINEARIZATION_CONSTANT + k2)

    def apply(x):
        x = np.asarray(x).reshape(grid.shape)
        return np.fft.ifft2(inv * np.fft.fft2(x)).real.ravel()

    return LinearOperator((n, n), matvec=apply, dtype=float)


def _jacobian_operator(v: np.ndarray, grid: TorusGrid, lap_scale: float = 1.0,
                       shift: float = 0.0, project=None) -> LinearOperator:
    n = grid.Nx * grid.Ny
    pot = potential(v) - shift

    def apply(x):
        x = np.asarray(x).reshape(grid.shape)
        if project is not None:
            x = project(x)
        y = lap_scale * spectral_laplacian(x, grid) + pot * x
        if project is not None:
            y = project(y)
        return y.ravel()

    return LinearOperator((n, n), matvec=apply, dtype=float)


def solve_jacobian(v: np.ndarray, grid: TorusGrid, rhs: np.ndarray, *, rtol: float = 1e-12,
                   maxiter: int = 4000, lap_scale: float = 1.0, shift: float = 0.0,
                   project=None) -> tuple[np.ndarray, int]:
    """MINRES solve of (J - shift) x = rhs with the Fourier-diagonal preconditioner."""
    op = _jacobian_operator(v, grid, lap_scale, shift, project)
    b = rhs.ravel() if project is None else project(rhs).ravel()
    x, info = minres(op, b, M=_preconditioner(grid, lap_scale), rtol=rtol, maxiter=maxiter)
    x = x.reshape(grid.shape)
    if project is not None:
        x = project(x)
    return x, info


def make_projector(basis: list[np.ndarray], grid: TorusGrid):
    """Orthogonal projector onto the complement of span(basis) in the grid L2 product."""
    vecs = [b.ravel() for b in basis if np.linalg.norm(b) > 0]
    if not vecs:
        return None
    Q, _ = np.linalg.qr(np.column_stack(vecs))

    def project(x):
        flat = x.ravel()
        return (flat - Q @ (Q.T @ flat)).reshape(grid.shape)

    return project


# ---------------------------------------------------------------------------
# constant and one-dimensional solutions

def constant_solution(grid: TorusGrid) -> Solution:
    """v = 0, the only constant solution."""
    return Solution(ScalarField.zeros(grid), 0.0, "constant")


def constant_spectrum_gap(c: float, grid: TorusGrid) -> float:
    """min |8e^{-2c} + 4e^c - |k|^2| over the lattice: the Jacobian's smallest |eigenvalue| at v = c."""
    return float(np.min(np.abs(potential(np.array(c)) - grid.k_squared())))


@dataclass(frozen=True, eq=False)
class Profile1D:
    L: float
    t: np.ndarray
    v: np.ndarray
    dv: np.ndarray
    energy: np.ndarray
    failed: bool = False

    @property
    def E(self) -> float:
        return float(self.energy[0])

    @property
    def energy_drift(self) -> float:
        return float(np.max(np.abs(self.energy - self.energy[0])))


def energy_1d(v, dv):
    return 0.5 * dv ** 2 + 2 * np.exp(-2 * v) + 4 * np.exp(v)


def _rhs_1d(v):
    # blow-up is detected by the caller; let inf/nan through quietly
    with np.errstate(over="ignore", invalid="ignore"):
        return 4 * np.exp(-2 * v) - 4 * np.exp(v)


def integrate_1d(v0: float, dv0: float, L: float, steps: int) -> Profile1D:
    """Classical RK4 for v'' = 4e^{-2v} - 4e^{v} on [0, L]."""
    if steps < 64:
        raise ValueError("steps must be >= 64")
    h = L / steps
    v = np.empty(steps + 1)
    dv = np.empty(steps + 1)
    v[0], dv[0] = v0, dv0
    failed = False
    n = steps
    for i in range(steps):
        a, b = v[i], dv[i]
        k1v, k1d = b, _rhs_1d(a)
        k2v, k2d = b + 0.5 * h * k1d, _rhs_1d(a + 0.5 * h * k1v)
        k3v, k3d = b + 0.5 * h * k2d, _rhs_1d(a + 0.5 * h * k2v)
        k4v, k4d = b + h * k3d, _rhs_1d(a + h * k3v)
        v[i + 1] = a + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
        dv[i + 1] = b + h / 6 * (k1d + 2 * k2d + 2 * k3d + k4d)
        if not np.isfinite(v[i + 1]) or abs(v[i + 1]) > V_MAX:
            failed = True
            n = i + 1
            break
    t = np.arange(n + 1) * h
    v, dv = v[: n + 1], dv[: n + 1]
    with np.errstate(over="ignore"):
        e = energy_1d(v, dv)
    return Profile1D(L, t, v, dv, e, failed)


def period_1d(v0: float, steps_per_unit: int = 2000) -> float:
    """Oscillation period of the orbit through (v0, 0), from its turning points."""
    if v0 == 0:
        return float(np.pi / np.sqrt(3.0))
    L = 4.0
    while True:
        prof = integrate_1d(v0, 0.0, L, max(64, int(L * steps_per_unit)))
        dv = prof.dv
        # second sign change of v' after t = 0 closes one oscillation
        idx = np.nonzero(np.sign(dv[1:]) != np.sign(dv[:-1]))[0]
        idx = idx[idx > 0]
        if len(idx) >= 2:
            i = idx[1]
            # cubic Hermite root of v' on [t_i, t_{i+1}] via secant on v''
            t0, t1 = prof.t[i], prof.t[i + 1]
            d0, d1 = dv[i], dv[i + 1]
            return float(t0 - d0 * (t1 - t0) / (d1 - d0))
        L *= 2
        if L > 1e3:
            raise RuntimeError("orbit did not return")


# ---------------------------------------------------------------------------
# Newton solver

def _nontranslation_projector(v: np.ndarray, grid: TorusGrid):
    vx = spectral_derivative(v, grid, 0)
    vy = spectral_derivative(v, grid, 1)
    basis = [b for b in (vx, vy) if np.max(np.abs(b)) > 1e-12]
    return make_projector(basis, grid)


def smallest_eigenvalue(v: np.ndarray, grid: TorusGrid, exclude_translations: bool = True,
                        iters: int = 30, seed: int = 0) -> float:
    """Smallest |eigenvalue| of the Jacobian by shifted inverse iteration."""
    if np.ptp(v) < 1e-14:
        return constant_spectrum_gap(float(v.flat[0]), grid)
    project = _nontranslation_projector(v, grid) if exclude_translations else None
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(grid.shape)
    if project is not None:
        x = project(x)
    shift = 1e-3 * np.pi
    lam = np.inf
    for _ in range(iters):
        x /= np.linalg.norm(x)
        y, _ = solve_jacobian(v, grid, x, rtol=1e-10, shift=shift, project=project)
        Jy = jacobian_apply(v, grid, y)
        if project is not None:
            Jy = project(Jy)
        new = float(np.vdot(y, Jy) / np.vdot(y, y))
        x = y
        if abs(new - lam) < 1e-12 * max(1.0, abs(new)):
            lam = new
            break
        lam = new
    return abs(lam)


def newton_iterate(v: np.ndarray, grid: TorusGrid, tol: float, max_iter: int, *,
                   lap_scale: float = 1.0, project=None, damping: bool = True):
    """Damped Newton; updates optionally projected orthogonal to a constraint span.

    Returns ``(v, history, converged)``; the best iterate is returned on failure.
    """
    v = np.array(v, dtype=float)
    res = residual_array(v, grid, lap_scale)
    r = float(np.max(np.abs(res)))
    history = [r]
    best = (r, v.copy())
    for _ in range(max_iter):
        if r <= tol:
            break
        delta, _ = solve_jacobian(v, grid, -res, rtol=min(1e-6, max(1e-13, 1e-3 * r)),
                                  lap_scale=lap_scale, project=project)
        step = 1.0
        while True:
            trial = v + step * delta
            try:
                tres = residual_array(trial, grid, lap_scale)
                tr = float(np.max(np.abs(tres)))
            except TzitzeicaRangeError:
                tr = np.inf
            if not damping or tr < r or step < 1e-3:
                break
            step *= 0.5
        if not np.isfinite(tr):
            break
        v, res, r = trial, tres, tr
        history.append(r)
        if r < best[0]:
            best = (r, v.copy())
        if len(history) > 4 and r > 0.5 * history[-4] and step < 1e-2:
            break  # stagnation
    if r > best[0]:
        r, v = best
    return v, history, r <= tol


def solve_newton(guess: ScalarField, tol: float = 1e-10, max_iter: int = 30,
                 singular_threshold: float = 1e-10) -> Solution:
    """Newton iteration on Lap v - 4e^{-2v} + 4e^{v} = 0 with matrix-free MINRES solves.

    On success the returned Solution carries ``iterations`` and ``history`` in
    its stats. A converged iterate whose Jacobian is singular beyond the
    translation modes is flagged ``near_singular`` (a bifurcation point).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    grid = guess.grid
    _check_range(guess.values)
    v, history, ok = newton_iterate(guess.values, grid, tol, max_iter)
    best = Solution.certify(ScalarField(grid, v), "newton", iterations=len(history) - 1,
                            history=history)
    if not ok:
        eig = smallest_eigenvalue(v, grid)
        if eig < singular_threshold:
            raise SingularJacobianError(
                f"Newton stalled at residual {best.residual_norm:.3e} with a near-singular "
                f"Jacobian (|eig| = {eig:.2e}); use continue_branch from a kernel direction",
                best, history)
        raise ConvergenceError(
            f"no convergence in {max_iter} iterations (residual {best.residual_norm:.3e})",
            best, history)
    stats = dict(best.stats)
    if np.ptp(v) < 1e-12:
        gap = constant_spectrum_gap(float(np.mean(v)), grid)
        stats["jacobian_min_abs_eigenvalue"] = gap
        if gap < singular_threshold:
            stats["near_singular"] = True
            warnings.warn("converged to a constant solution at a bifurcation point "
                          "(singular Jacobian); use continue_branch for nontrivial solutions",
                          RuntimeWarning, stacklevel=2)
    return Solution(best.v, best.residual_norm, "newton", stats)


# ---------------------------------------------------------------------------
# continuation in the lattice scale

class Branch(list):
    """List of continued Solutions; ``failed``/``message`` describe truncation."""

    def __init__(self, items=(), failed=False, message=""):
        super().__init__(items)
        self.failed = failed
        self.message = message


def _mean_dot(a, b):
    return float(np.mean(a * b))


def _bordered_solve(v, grid, s, tau_v, tau_s, rhs_f, rhs_c, rtol):
    """Solve [[J_s, F_s], [<tau_v,.>, tau_s]] [dv; ds] = [rhs_f; rhs_c] by GMRES."""
    n = grid.Nx * grid.Ny
    lap0 = spectral_laplacian(v, grid)
    Fs = -2.0 * s ** -3 * lap0
    pot = potential(v)
    inv = 1.0 / (LINEARIZATION_CONSTANT + grid.k_squared() / s ** 2)

    def matvec(x):
        dv = x[:n].reshape(grid.shape)
        ds = x[n]
        top = spectral_laplacian(dv, grid) / s ** 2 + pot * dv + Fs * ds
        bot = _mean_dot(tau_v, dv) + tau_s * ds
        return np.concatenate([top.ravel(), [bot]])

    def precond(x):
        top = np.fft.ifft2(inv * np.fft.fft2(x[:n].reshape(grid.shape))).real
        return np.concatenate([top.ravel(), [x[n]]])

    A = LinearOperator((n + 1, n + 1), matvec=matvec, dtype=float)
    M = LinearOperator((n + 1, n + 1), matvec=precond, dtype=float)
    b = np.concatenate([rhs_f.ravel(), [rhs_c]])
    x, info = gmres(A, b, M=M, rtol=rtol, restart=120, maxiter=40)
    return x[:n].reshape(grid.shape), float(x[n]), info


def continue_branch(base: Solution, direction: ScalarField, amplitude_step: float,
                    n_steps: int, tol: float = 1e-10, max_corrector: int = 25,
                    kernel_tol: float = 1e-6) -> Branch:
    """Pseudo-arclength continuation of solutions in (v, lattice scale).

    The period lattice is scaled by a factor ``s`` (conformal type fixed), which
    is the bifurcation parameter. Step 1 follows ``direction`` (a kernel element
    of the linearization at ``base``); later tangents are secants. Returned
    solutions live on their own scaled grids.
    """
    grid0 = base.grid
    if direction.grid.shape != grid0.shape:
        raise FieldError("direction grid does not match base")
    w = np.asarray(direction.values, dtype=float)
    wrms = float(np.sqrt(np.mean(w ** 2)))
    if wrms == 0:
        raise ValueError("direction is the zero field")
    if amplitude_step == 0 or n_steps == 0:
        return Branch([base])
    defect = np.max(np.abs(jacobian_apply(base.v.values, grid0, w))) / np.max(np.abs(w))
    if defect > kernel_tol:
        raise ValueError(f"direction is not in the kernel of the linearization "
                         f"(relative defect {defect:.2e} > {kernel_tol:.0e})")

    v = np.array(base.v.values, dtype=float)
    s = 1.0
    tau_v, tau_s = w / wrms, 0.0
    out = Branch([base])
    prev = (v.copy(), s)
    for step in range(1, n_steps + 1):
        vp = v + amplitude_step * tau_v
        sp = s + amplitude_step * tau_s
        vc, sc = vp.copy(), sp
        ok = False
        for _ in range(max_corrector):
            f = residual_array(vc, grid0, sc ** -2)
            c = _mean_dot(tau_v, vc - vp) + tau_s * (sc - sp)
            r = float(np.max(np.abs(f)))
            if r <= tol and abs(c) <= tol:
                ok = True
                break
            dv, ds, _ = _bordered_solve(vc, grid0, sc, tau_v, tau_s, -f, -c,
                                        rtol=max(1e-13, min(1e-6, 1e-3 * r)))
            vc = vc + dv
            sc = sc + ds
            if not np.all(np.isfinite(vc)) or np.max(np.abs(vc)) > V_MAX or sc <= 0:
                break
        if not ok:
            out.failed = True
            out.message = f"corrector diverged at step {step}"
            log.warning(out.message)
            break
        if np.ptp(vc) < 10 * tol:
            out.failed = True
            out.message = f"branch returned to a constant solution at step {step}"
            break
        grid = grid0.scaled(sc)
        sol = Solution.certify(ScalarField(grid, vc), "continued", scale=sc, arclength=step * amplitude_step)
        out.append(sol)
        prev, (v, s) = (v, s), (vc, sc)
        dv_sec = v - prev[0]
        ds_sec = s - prev[1]
        norm = np.sqrt(np.mean(dv_sec ** 2) + ds_sec ** 2)
        tau_v, tau_s = dv_sec / norm, ds_sec / norm
    return out

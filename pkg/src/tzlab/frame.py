"""Transport of the frame system along paths and reconstruction of r: R^2 -> S^5."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import expm

from .fields import ComplexField, FieldError, TorusGrid, sample_lines, spectral_derivative
from .laxpair import Matrix3Field, frame_from_values
from .tzitzeica import Solution

# commutator-free 4th-order scheme: two exponentials at the Gauss nodes
_C1, _C2 = 0.5 - np.sqrt(3) / 6, 0.5 + np.sqrt(3) / 6
_A1, _A2 = 0.25 + np.sqrt(3) / 6, 0.25 - np.sqrt(3) / 6

CERTIFIED_RESIDUAL = 1e-8


class FrameWarning(UserWarning):
    pass


@dataclass(frozen=True)
class FramePath:
    """Axis-aligned polygonal path: ``segments`` holds ``(axis, length, steps)``."""

    base: tuple[float, float]
    segments: tuple[tuple[str, float, int], ...]

    def __post_init__(self):
        segs = tuple((str(a), float(L), int(n)) for a, L, n in self.segments)
        for axis, _, n in segs:
            if axis not in ("x", "y"):
                raise ValueError(f"segment axis must be 'x' or 'y', got {axis!r}")
            if n < 1:
                raise ValueError("each segment needs at least one step")
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "base", (float(self.base[0]), float(self.base[1])))

    def check_resolution(self, grid: TorusGrid) -> None:
        for axis, L, n in self.segments:
            period = grid.Lx if axis == "x" else grid.Ly
            if L != 0 and n * period / abs(L) < 16:
                raise ValueError(f"{n} steps over length {L} is below 16 steps per period")


# ---------------------------------------------------------------------------
# coefficient samplers

def _field_sampler(M: Matrix3Field, axis: str):
    """Coefficient sampler ``(offsets, t) -> (len(t), len(offsets), 3, 3)`` from a matrix field."""
    g = M.grid
    flat = M.values.reshape(g.shape + (9,))

    def sample(offsets, t):
        ax = 0 if axis == "x" else 1
        out = np.stack([sample_lines(flat[..., k], g, ax, offsets, t) for k in range(9)], axis=-1)
        return out.transpose(1, 0, 2).reshape(len(t), len(offsets), 3, 3)

    return sample


def _callable_sampler(C: Callable, axis: str):
    def sample(offsets, t):
        T, O = np.meshgrid(t, offsets, indexing="ij")
        X, Y = (T, O) if axis == "x" else (O, T)
        return np.asarray(C(X, Y), dtype=complex)

    return sample


def _as_sampler(C, axis):
    if isinstance(C, Matrix3Field):
        return _field_sampler(C, axis)
    if callable(C):
        return _callable_sampler(C, axis)
    if C is None:
        return lambda offsets, t: np.zeros((len(t), len(offsets), 3, 3), dtype=complex)
    raise TypeError("coefficients must be a Matrix3Field or a callable (x, y) -> (..., 3, 3)")


# ---------------------------------------------------------------------------
# one-segment propagators, batched over independent lines

def polar_unitary(R: np.ndarray) -> np.ndarray:
    U, _, Vh = np.linalg.svd(R)
    return U @ Vh


def _is_antihermitian(C: np.ndarray, tol: float = 1e-12) -> bool:
    return bool(np.max(np.abs(C + np.conj(np.swapaxes(C, -1, -2)))) <= tol * max(1.0, np.max(np.abs(C))))


def propagate(sample, offsets, start: float, length: float, steps: int, R0: np.ndarray,
              method: str = "rk4", project: bool = False, record_every: int | None = None):
    """Transport ``R0`` (shape ``(B, 3, 3)``) along ``len(offsets) = B`` parallel lines.

    ``sample(offsets, t)`` returns coefficients ``(len(t), B, 3, 3)``. With
    ``record_every`` the frames after every ``record_every`` steps (and the
    start) are also returned, stacked along a new leading axis.
    """
    h = length / steps
    R = np.array(R0, dtype=complex)
    rec = [R.copy()] if record_every else None
    if method == "rk4":
        C = sample(offsets, start + h * 0.5 * np.arange(2 * steps + 1))
        for n in range(steps):
            c0, ch, c1 = C[2 * n], C[2 * n + 1], C[2 * n + 2]
            k1 = c0 @ R
            k2 = ch @ (R + 0.5 * h * k1)
            k3 = ch @ (R + 0.5 * h * k2)
            k4 = c1 @ (R + h * k3)
            R = R + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            if project:
                R = polar_unitary(R)
            if rec is not None and (n + 1) % record_every == 0:
                rec.append(R.copy())
    elif method == "cf4":
        base = start + h * np.arange(steps)
        t = np.stack([base + _C1 * h, base + _C2 * h], axis=1).ravel()
        C = sample(offsets, t).reshape((steps, 2) + R.shape)
        first = expm(h * (_A1 * C[:, 0] + _A2 * C[:, 1]))
        second = expm(h * (_A2 * C[:, 0] + _A1 * C[:, 1]))
        for n in range(steps):
            R = second[n] @ (first[n] @ R)
            if project:
                R = polar_unitary(R)
            if rec is not None and (n + 1) % record_every == 0:
                rec.append(R.copy())
    else:
        raise ValueError(f"unknown method {method!r}")
    if rec is not None:
        return R, np.stack(rec)
    return R


def integrate_frame(A, B, path: FramePath, R0, method: str = "auto",
                    grid: TorusGrid | None = None, check_order: bool = False) -> np.ndarray:
    """Solve R_x = A R, R_y = B R along ``path`` starting from ``R0``.

    ``method='auto'`` picks the two-exponential Lie scheme with unitary
    projection when the coefficients are anti-Hermitian, classical RK4
    otherwise. With ``check_order`` the observed order on a halving triple is
    estimated and a :class:`FrameWarning` issued when it falls below 3.
    """
    R0 = np.asarray(R0, dtype=complex)
    if R0.shape != (3, 3):
        raise ValueError("R0 must be a 3x3 matrix")
    grid = grid or next((M.grid for M in (A, B) if isinstance(M, Matrix3Field)), None)
    if grid is not None:
        path.check_resolution(grid)
    samplers = {"x": _as_sampler(A, "x"), "y": _as_sampler(B, "y")}
    R = _run_path(samplers, path, R0, method)
    if check_order:
        order = _observed_order(samplers, path, R0, method)
        if order < 3:
            warnings.warn(f"observed order {order:.2f} < 3: steps too coarse for this path",
                          FrameWarning, stacklevel=2)
    return R


def _resolve_method(samplers, path, method):
    if method != "auto":
        return method, method == "cf4"
    (x0, y0) = path.base
    anti = True
    pos = [x0, y0]
    for axis, L, n in path.segments:
        off = pos[1] if axis == "x" else pos[0]
        start = pos[0] if axis == "x" else pos[1]
        C = samplers[axis]([off], start + np.linspace(0, L, 5))
        anti &= _is_antihermitian(C)
        pos[0 if axis == "x" else 1] += L
    return ("cf4", True) if anti else ("rk4", False)


def _run_path(samplers, path, R0, method, refine: int = 1):
    meth, project = _resolve_method(samplers, path, method)
    R = R0[None]
    pos = list(path.base)
    for axis, L, n in path.segments:
        ax = 0 if axis == "x" else 1
        off = pos[1 - ax]
        R = propagate(samplers[axis], [off], pos[ax], L, n * refine, R, meth, project)
        pos[ax] += L
    return R[0]


def _observed_order(samplers, path, R0, method) -> float:
    r1, r2, r4 = (_run_path(samplers, path, R0, method, k) for k in (1, 2, 4))
    d1, d2 = np.max(np.abs(r1 - r2)), np.max(np.abs(r2 - r4))
    if d2 == 0 or d1 < 1e-13:
        return np.inf
    return float(np.log2(d1 / d2))


# ---------------------------------------------------------------------------
# surfaces

@dataclass(frozen=True, eq=False)
class SurfaceData:
    """Immersion r sampled on the closed period cell ``(Nx + 1) x (Ny + 1)``.

    ``r_closed[i, j]`` is r at ``(i dx, j dy)`` for ``0 <= i <= Nx`` and
    ``0 <= j <= Ny``, so the last row/column hold the period-shifted values.
    """

    grid: TorusGrid
    r_closed: np.ndarray
    v: Solution
    R0: np.ndarray
    frames: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    @property
    def r(self) -> tuple[ComplexField, ComplexField, ComplexField]:
        cell = self.r_closed[: self.grid.Nx, : self.grid.Ny]
        return tuple(ComplexField(self.grid, cell[..., k]) for k in range(3))

    def r_array(self) -> np.ndarray:
        """r on the period cell, shape ``(Nx, Ny, 3)``."""
        return self.r_closed[: self.grid.Nx, : self.grid.Ny]

    def scaled(self, c: complex) -> "SurfaceData":
        return SurfaceData(self.grid, c * self.r_closed, self.v, self.R0, None, dict(self.info))


def _check_su3(R0: np.ndarray, tol: float = 1e-12) -> None:
    if np.max(np.abs(R0.conj().T @ R0 - np.eye(3))) > tol or abs(np.linalg.det(R0) - 1) > tol:
        raise ValueError("R0 must lie in SU(3)")


def _frame_samplers(sol: Solution, F: float, G: float):
    g = sol.grid
    v = sol.v.values
    vx = spectral_derivative(v, g, 0)
    vy = spectral_derivative(v, g, 1)

    def make(axis):
        ax = 0 if axis == "x" else 1
        which = 0 if axis == "x" else 1

        def sample(offsets, t):
            vals = [sample_lines(f, g, ax, offsets, t).T for f in (v, vx, vy)]
            A, B = frame_from_values(vals[0], vals[1], vals[2], 0.0, 0.0, 0.0, F, G)
            return (A, B)[which]
        return sample

    return {"x": make("x"), "y": make("y")}


def reconstruct_surface(sol: Solution, R0=None, F: float = 1.0, G: float = 0.0,
                        steps_per_period: int | None = None, method: str = "cf4") -> SurfaceData:
    """Integrate the frame over the period cell: a y-spine at x = 0, then rows in x.

    ``steps_per_period`` must be a multiple of both Nx and Ny (default 4 Nx).
    """
    g = sol.grid
    if sol.residual_norm >= CERTIFIED_RESIDUAL:
        raise ValueError(f"solution is not certified (residual {sol.residual_norm:.2e})")
    if abs(F * F + G * G - 1) > 1e-12:
        raise ValueError("the gauge (F, G) must satisfy F^2 + G^2 = 1")
    R0 = np.eye(3, dtype=complex) if R0 is None else np.asarray(R0, dtype=complex)
    _check_su3(R0)
    n = steps_per_period or 4 * max(g.Nx, g.Ny)
    if n % g.Nx or n % g.Ny:
        raise ValueError("steps_per_period must be a multiple of Nx and Ny")
    project = method == "cf4"
    S = _frame_samplers(sol, F, G)
    _, spine = propagate(S["y"], [0.0], 0.0, g.Ly, n, R0[None], method, project,
                         record_every=n // g.Ny)
    ys = np.arange(g.Ny + 1) * g.dy
    _, rows = propagate(S["x"], ys, 0.0, g.Lx, n, spine[:, 0], method, project,
                        record_every=n // g.Nx)
    frames = rows  # (Nx + 1, Ny + 1, 3, 3)
    info = {"steps_per_period": n, "method": method, "F": F, "G": G}
    return SurfaceData(g, frames[..., 0, :].copy(), sol, R0, frames, info)


def clifford_surface(grid: TorusGrid) -> SurfaceData:
    """Closed-form r_j = exp(i a_j . (x, y)) / sqrt(3), a_j = 2(cos 2pi j/3, sin 2pi j/3)."""
    from .tzitzeica import constant_solution

    a = clifford_wavevectors()
    xs = np.arange(grid.Nx + 1) * grid.dx
    ys = np.arange(grid.Ny + 1) * grid.dy
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    r = np.exp(1j * (X[..., None] * a[:, 0] + Y[..., None] * a[:, 1])) / np.sqrt(3)
    frames = np.stack([r, 1j * a[:, 0] * r / np.sqrt(2), 1j * a[:, 1] * r / np.sqrt(2)], axis=-2)
    return SurfaceData(grid, r, constant_solution(grid), frames[0, 0], frames, {"closed_form": True})


def clifford_wavevectors() -> np.ndarray:
    ang = 2 * np.pi * np.arange(3) / 3
    return 2 * np.stack([np.cos(ang), np.sin(ang)], axis=1)


def align_frames(numeric: SurfaceData, reference: SurfaceData) -> np.ndarray:
    """r of ``numeric`` moved by the constant frame change matching ``reference`` at the origin.

    Frames solving the system differ by a constant right factor, so the first
    rows are related by ``r_ref = r_num @ (R_num(0)^{-1} R_ref(0))``.
    """
    M = np.linalg.solve(numeric.frames[0, 0], reference.frames[0, 0])
    return numeric.r_closed @ M


def _herm(u, w):
    return np.sum(u * np.conj(w), axis=-1)


def verify_immersion(surface: SurfaceData, threshold: float = 1e-6) -> dict:
    """Max-norm defects of the conformal/Lagrangian identities and the Schrodinger equation.

    Derivatives are spectral on the period cell, so they are meaningful only
    for closed surfaces; the strict closure defect is reported alongside.
    """
    g = surface.grid
    r = surface.r_array()
    v = surface.v.v.values
    D = lambda f, ax, o=1: np.stack([spectral_derivative(f[..., k], g, ax, o) for k in range(3)], axis=-1)
    rx, ry = D(r, 0), D(r, 1)
    lap = D(r, 0, 2) + D(r, 1, 2)
    metric = 2 * np.exp(v)
    defects = {
        "r_rx": float(np.max(np.abs(_herm(r, rx)))),
        "r_ry": float(np.max(np.abs(_herm(r, ry)))),
        "rx_ry": float(np.max(np.abs(_herm(rx, ry)))),
        "rx_metric": float(np.max(np.abs(_herm(rx, rx).real - metric))),
        "ry_metric": float(np.max(np.abs(_herm(ry, ry).real - metric))),
        "schrodinger": float(np.max(np.abs(lap + 4 * np.exp(v)[..., None] * r))),
        "norm": float(np.max(np.abs(_herm(r, r).real - 1))),
    }
    strict, proj = closure_defect(surface)
    flagged = sorted(k for k, d in defects.items() if d >= threshold)
    return {"defects": defects, "threshold": threshold, "flagged": flagged,
            "passed": not flagged, "closure": {"strict": strict, "projective": proj}}


def closure_defect(surface: SurfaceData) -> tuple[float, float]:
    """(strict, projective) mismatch of r across the two period shifts."""
    r = surface.r_closed
    pairs = [(r[-1, :], r[0, :]), (r[:, -1], r[:, 0])]
    strict = max(float(np.max(np.abs(a - b))) for a, b in pairs)
    proj = 0.0
    for a, b in pairs:
        agg = np.sum(_herm(a, b))
        c = agg / abs(agg) if abs(agg) > 0 else 1.0
        proj = max(proj, float(np.max(np.abs(a - c * b))))
    return strict, min(strict, proj)


def hopf_project(r: Sequence[complex], tol: float = 1e-6) -> np.ndarray:
    """Canonical representative of the Hopf class of ``r``: first nonzero entry real positive."""
    r = np.asarray(r, dtype=complex)
    nrm = np.linalg.norm(r)
    if nrm == 0:
        raise ValueError("cannot project the zero vector")
    if abs(nrm - 1) > tol:
        raise ValueError(f"|r| = {nrm:.8f} is not on the unit sphere")
    k = int(np.argmax(np.abs(r) > 1e-12 * nrm))
    return r * (abs(r[k]) / r[k])

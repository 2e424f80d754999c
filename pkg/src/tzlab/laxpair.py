"""Frame matrices, spectral Lax matrices and their compatibility residuals.

Matrix fields are stored as arrays of shape ``(Nx, Ny, 3, 3)``. The builders
``frame_from_values`` and ``lax_from_values`` are node-local and accept any
leading shape, which is how the path integrators evaluate coefficients off
the grid.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import (ComplexField, FieldError, ScalarField, TorusGrid,
                     spectral_derivative)

SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class Matrix3Field:
    grid: TorusGrid
    values: np.ndarray  # (Nx, Ny, 3, 3) complex

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != self.grid.shape + (3, 3):
            raise FieldError(f"matrix field has shape {vals.shape}, expected {self.grid.shape + (3, 3)}")
        if not np.all(np.isfinite(vals)):
            raise FieldError("matrix field has non-finite entries")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def entry(self, i: int, j: int) -> ComplexField:
        return ComplexField(self.grid, self.values[..., i, j])


@dataclass(frozen=True, eq=False)
class LagrangianData:
    """Conformal factor v, Lagrangian angle beta and F = f e^v, G = h e^v."""

    v: ScalarField
    beta: ScalarField
    F: ScalarField
    G: ScalarField

    def __post_init__(self):
        g = self.v.grid
        for name in ("beta", "F", "G"):
            if getattr(self, name).grid != g:
                raise FieldError(f"{name} lives on a different grid than v")

    @classmethod
    def minimal(cls, v: ScalarField, F: float = 1.0, G: float = 0.0, beta: float = 0.0) -> "LagrangianData":
        """Constant angle and constant (F, G): the minimal case."""
        g = v.grid
        const = lambda c: ScalarField(g, np.full(g.shape, float(c)))
        return cls(v, const(beta), const(F), const(G))

    @property
    def grid(self) -> TorusGrid:
        return self.v.grid


def _check_lambda(lam) -> complex:
    lam = complex(lam)
    if lam == 0 or not np.isfinite(lam):
        raise ValueError("spectral parameter must be finite and nonzero")
    return lam


def frame_from_values(v, vx, vy, beta, bx, by, F, G):
    """(A, B) of the frame system R_x = A R, R_y = B R at arbitrary points."""
    v, vx, vy, beta, bx, by, F, G = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (v, vx, vy, beta, bx, by, F, G)))
    f = F * np.exp(-v)
    h = G * np.exp(-v)
    up = SQRT2 * np.exp(v / 2 + 0.5j * beta)
    dn = -SQRT2 * np.exp(v / 2 - 0.5j * beta)
    A = np.zeros(v.shape + (3, 3), dtype=complex)
    B = np.zeros_like(A)
    A[..., 0, 1] = up
    A[..., 1, 0] = dn
    A[..., 1, 1] = 1j * f
    A[..., 1, 2] = -vy / 2 + 1j * (h + by / 2)
    A[..., 2, 1] = vy / 2 + 1j * (h + by / 2)
    A[..., 2, 2] = -1j * f
    B[..., 0, 2] = up
    B[..., 1, 1] = 1j * h
    B[..., 1, 2] = vx / 2 + 1j * (-f + bx / 2)
    B[..., 2, 0] = dn
    B[..., 2, 1] = -vx / 2 + 1j * (-f + bx / 2)
    B[..., 2, 2] = -1j * h
    return A, B


def lax_from_values(v, vz, vzb, lam):
    """(A(lam), B(lam)) of  d_z R = A R,  d_zbar R = B R  at arbitrary points."""
    lam = _check_lambda(lam)
    v = np.asarray(v, dtype=float)
    ev, emv = np.exp(v), np.exp(-v)
    A = np.zeros(v.shape + (3, 3), dtype=complex)
    B = np.zeros_like(A)
    A[..., 0, 1] = 1.0
    A[..., 1, 1] = vz
    A[..., 1, 2] = -1j / lam * emv
    A[..., 2, 0] = -ev
    B[..., 0, 2] = 1.0
    B[..., 1, 0] = -ev
    B[..., 2, 1] = -1j * lam * emv
    B[..., 2, 2] = vzb
    return A, B


def frame_matrices(data: LagrangianData) -> tuple[Matrix3Field, Matrix3Field]:
    g = data.grid
    d = lambda f, ax: spectral_derivative(f.values, g, ax)
    A, B = frame_from_values(data.v.values, d(data.v, 0), d(data.v, 1),
                             data.beta.values, d(data.beta, 0), d(data.beta, 1),
                             data.F.values, data.G.values)
    return Matrix3Field(g, A), Matrix3Field(g, B)


def lax_matrices(v: ScalarField, lam) -> tuple[Matrix3Field, Matrix3Field]:
    g = v.grid
    vx = spectral_derivative(v.values, g, 0)
    vy = spectral_derivative(v.values, g, 1)
    A, B = lax_from_values(v.values, 0.5 * (vx - 1j * vy), 0.5 * (vx + 1j * vy), lam)
    return Matrix3Field(g, A), Matrix3Field(g, B)


def _mderiv(M: np.ndarray, grid: TorusGrid, axis: int) -> np.ndarray:
    flat = M.reshape(grid.shape + (9,))
    out = np.empty_like(flat)
    for k in range(9):
        out[..., k] = spectral_derivative(flat[..., k], grid, axis)
    return out.reshape(M.shape)


def zero_curvature_residual(A: Matrix3Field, B: Matrix3Field, coords: str = "xy") -> Matrix3Field:
    """A_y - B_x + [A,B]  (``xy``)  or  d_zbar A - d_z B + [A,B]  (``zbar``)."""
    if A.grid != B.grid:
        raise FieldError("A and B live on different grids")
    g = A.grid
    a, b = A.values, B.values
    comm = a @ b - b @ a
    if coords == "xy":
        res = _mderiv(a, g, 1) - _mderiv(b, g, 0) + comm
    elif coords == "zbar":
        ax, ay = _mderiv(a, g, 0), _mderiv(a, g, 1)
        bx, by = _mderiv(b, g, 0), _mderiv(b, g, 1)
        res = 0.5 * (ax + 1j * ay) - 0.5 * (bx - 1j * by) + comm
    else:
        raise ValueError("coords must be 'xy' or 'zbar'")
    return Matrix3Field(g, res)


def matrix_norm(M: Matrix3Field | np.ndarray) -> float:
    """Max entrywise modulus over all nodes."""
    vals = M.values if isinstance(M, Matrix3Field) else M
    return float(np.max(np.abs(vals)))


def compatibility_residuals(data: LagrangianData) -> tuple[ScalarField, ScalarField, ScalarField]:
    """Residuals of the three compatibility equations of the frame system.

    R1 = 2G_y + 2F_x - (beta_xx - beta_yy) e^v
    R2 = 2F_y - 2G_x - (beta_y v_x + beta_x v_y) e^v
    R3 = Lap v - 4(F^2 + G^2) e^{-2v} + 4 e^v + 2(F beta_x + G beta_y) e^{-v}
    """
    g = data.grid
    D = lambda f, ax, o=1: spectral_derivative(f.values, g, ax, o)
    v, F, G = data.v.values, data.F.values, data.G.values
    ev = np.exp(v)
    bx, by = D(data.beta, 0), D(data.beta, 1)
    r1 = 2 * D(data.G, 1) + 2 * D(data.F, 0) - (D(data.beta, 0, 2) - D(data.beta, 1, 2)) * ev
    r2 = 2 * D(data.F, 1) - 2 * D(data.G, 0) - (by * D(data.v, 0) + bx * D(data.v, 1)) * ev
    lap = D(data.v, 0, 2) + D(data.v, 1, 2)
    r3 = lap - 4 * (F ** 2 + G ** 2) * np.exp(-2 * v) + 4 * ev + 2 * (F * bx + G * by) / ev
    return ScalarField(g, r1), ScalarField(g, r2), ScalarField(g, r3)

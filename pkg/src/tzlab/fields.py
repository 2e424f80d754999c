"""Periodic grids, doubly periodic fields and Fourier calculus.

Arrays are indexed ``values[i, j]`` with ``i`` along x and ``j`` along y, so
node ``(i, j)`` sits at ``(i * Lx / Nx, j * Ly / Ny)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class FieldError(ValueError):
    """Raised for malformed grids or non-finite field data."""


@dataclass(frozen=True)
class TorusGrid:
    """Rectangular period lattice sampled on an ``Nx x Ny`` grid."""

    Lx: float
    Ly: float
    Nx: int = 64
    Ny: int = 64

    def __post_init__(self):
        if not (np.isfinite(self.Lx) and np.isfinite(self.Ly)) or self.Lx <= 0 or self.Ly <= 0:
            raise FieldError(f"periods must be positive, got Lx={self.Lx}, Ly={self.Ly}")
        for name, n in (("Nx", self.Nx), ("Ny", self.Ny)):
            if int(n) != n or n < 8 or n % 2:
                raise FieldError(f"{name} must be an even integer >= 8, got {n}")
        object.__setattr__(self, "Lx", float(self.Lx))
        object.__setattr__(self, "Ly", float(self.Ly))
        object.__setattr__(self, "Nx", int(self.Nx))
        object.__setattr__(self, "Ny", int(self.Ny))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.Nx, self.Ny)

    @property
    def dx(self) -> float:
        return self.Lx / self.Nx

    @property
    def dy(self) -> float:
        return self.Ly / self.Ny

    @property
    def area(self) -> float:
        return self.Lx * self.Ly

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.Nx) * self.dx

    @property
    def y(self) -> np.ndarray:
        return np.arange(self.Ny) * self.dy

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, indexing="ij")

    @property
    def kx(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.Nx, d=self.dx)

    @property
    def ky(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.Ny, d=self.dy)

    def k_squared(self) -> np.ndarray:
        """|k|^2 on the full (fft2) spectral grid."""
        return self.kx[:, None] ** 2 + self.ky[None, :] ** 2

    def scaled(self, s: float) -> "TorusGrid":
        """Same sample counts, periods multiplied by ``s`` (conformal type kept)."""
        return TorusGrid(self.Lx * s, self.Ly * s, self.Nx, self.Ny)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real doubly periodic function sampled on ``grid``."""

    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values)
        if np.iscomplexobj(vals):
            raise FieldError("ScalarField needs real values; use ComplexField")
        vals = vals.astype(float)
        _check(self.grid, vals)
        object.__setattr__(self, "values", _frozen(vals))

    @classmethod
    def from_function(cls, grid: TorusGrid, func) -> "ScalarField":
        X, Y = grid.mesh()
        return cls(grid, np.broadcast_to(func(X, Y), grid.shape))

    @classmethod
    def zeros(cls, grid: TorusGrid) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))

    def complexify(self) -> "ComplexField":
        return ComplexField(self.grid, self.values.astype(complex))


@dataclass(frozen=True, eq=False)
class ComplexField:
    """Complex doubly periodic function sampled on ``grid``."""

    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values).astype(complex)
        _check(self.grid, vals)
        object.__setattr__(self, "values", _frozen(vals))

    @classmethod
    def from_function(cls, grid: TorusGrid, func) -> "ComplexField":
        X, Y = grid.mesh()
        return cls(grid, np.broadcast_to(func(X, Y), grid.shape))

    def conj(self) -> "ComplexField":
        return ComplexField(self.grid, np.conj(self.values))


def _check(grid: TorusGrid, vals: np.ndarray) -> None:
    if vals.shape != grid.shape:
        raise FieldError(f"values have shape {vals.shape}, grid expects {grid.shape}")
    if not np.all(np.isfinite(vals)):
        bad = int(np.size(vals) - np.count_nonzero(np.isfinite(vals)))
        raise FieldError(f"field has {bad} non-finite values")


def _same_kind(field, values):
    if isinstance(field, ScalarField):
        return ScalarField(field.grid, np.real(values))
    return ComplexField(field.grid, values)


# ---------------------------------------------------------------------------
# array-level spectral calculus

def spectral_derivative(values: np.ndarray, grid: TorusGrid, axis: int, order: int = 1) -> np.ndarray:
    """Fourier derivative of an ``(Nx, Ny)`` array along ``axis`` (0 = x, 1 = y)."""
    if order < 1 or int(order) != order:
        raise FieldError(f"order must be a positive integer, got {order}")
    if np.ptp(values) == 0:
        return np.zeros_like(values)
    n = values.shape[axis]
    L = grid.Lx if axis == 0 else grid.Ly
    k = 2 * np.pi * np.fft.fftfreq(n, d=L / n)
    mult = (1j * k) ** order
    if order % 2:
        mult[n // 2] = 0.0
    shape = [1, 1]
    shape[axis] = n
    mult = mult.reshape(shape)
    if np.iscomplexobj(values):
        return np.fft.ifft(np.fft.fft(values, axis=axis) * mult, axis=axis)
    kr = k[: n // 2 + 1]
    mr = (1j * kr) ** order
    if order % 2:
        mr[-1] = 0.0
    rshape = [1, 1]
    rshape[axis] = n // 2 + 1
    spec = np.fft.rfft(values, axis=axis) * mr.reshape(rshape)
    return np.fft.irfft(spec, n=n, axis=axis)


def spectral_laplacian(values: np.ndarray, grid: TorusGrid) -> np.ndarray:
    if np.ptp(values) == 0:
        return np.zeros_like(values)
    if np.iscomplexobj(values):
        return np.fft.ifft2(-grid.k_squared() * np.fft.fft2(values))
    k2 = grid.kx[:, None] ** 2 + np.abs(np.fft.rfftfreq(grid.Ny, d=grid.dy) * 2 * np.pi)[None, :] ** 2
    return np.fft.irfft2(-k2 * np.fft.rfft2(values), s=grid.shape)


def fourier_shift(values: np.ndarray, grid: TorusGrid, sx: float, sy: float) -> np.ndarray:
    """Sample ``f(x + sx, y + sy)`` exactly for the band-limited interpolant of ``f``."""
    kx = grid.kx.copy()
    ky = grid.ky.copy()
    phase = np.exp(1j * kx[:, None] * sx) * np.exp(1j * ky[None, :] * sy)
    # Nyquist modes: cos-symmetric interpolation
    phase[grid.Nx // 2, :] *= np.cos(kx[grid.Nx // 2] * sx) / np.exp(1j * kx[grid.Nx // 2] * sx)
    phase[:, grid.Ny // 2] *= np.cos(ky[grid.Ny // 2] * sy) / np.exp(1j * ky[grid.Ny // 2] * sy)
    out = np.fft.ifft2(np.fft.fft2(values) * phase)
    return out if np.iscomplexobj(values) else out.real


def _interp_matrix(n: int, L: float, t: np.ndarray) -> np.ndarray:
    """Rows evaluate the degree-``n`` trigonometric interpolant at points ``t``."""
    k = 2 * np.pi * np.fft.fftfreq(n, d=L / n)
    E = np.exp(1j * np.outer(t, k)) / n
    E[:, n // 2] = np.cos(k[n // 2] * t) / n
    return E


def sample_lines(values: np.ndarray, grid: TorusGrid, axis: int, offsets, t) -> np.ndarray:
    """Evaluate the trigonometric interpolant along axis-aligned lines.

    Returns an array of shape ``(len(offsets), len(t))``: for ``axis=0`` the
    points are ``(t, offset)``, for ``axis=1`` they are ``(offset, t)``.
    """
    offsets = np.atleast_1d(np.asarray(offsets, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    spec = np.fft.fft2(values)
    Ex = _interp_matrix(grid.Nx, grid.Lx, t if axis == 0 else offsets)
    Ey = _interp_matrix(grid.Ny, grid.Ly, offsets if axis == 0 else t)
    out = Ex @ spec @ Ey.T
    if axis == 0:
        out = out.T
    return out if np.iscomplexobj(values) else out.real


# ---------------------------------------------------------------------------
# field-level operations

_AXES = {"x": 0, "y": 1, 0: 0, 1: 1}


def partial(field, axis="x", order: int = 1):
    """Spectral derivative of a Scalar/ComplexField; odd orders drop the Nyquist mode."""
    try:
        ax = _AXES[axis]
    except KeyError:
        raise FieldError(f"axis must be 'x' or 'y', got {axis!r}") from None
    return _same_kind(field, spectral_derivative(field.values, field.grid, ax, order))


def laplacian(field):
    return _same_kind(field, spectral_laplacian(field.values, field.grid))


def z_derivatives(field) -> tuple[ComplexField, ComplexField]:
    """Return ``(d/dz f, d/dzbar f)`` with ``d/dz = (d/dx - i d/dy) / 2``."""
    fx = spectral_derivative(field.values, field.grid, 0)
    fy = spectral_derivative(field.values, field.grid, 1)
    return (ComplexField(field.grid, 0.5 * (fx - 1j * fy)),
            ComplexField(field.grid, 0.5 * (fx + 1j * fy)))


def inner(u: np.ndarray, w: np.ndarray, grid: TorusGrid) -> float:
    """Grid L2 inner product, normalized as an integral over the torus."""
    return float(np.vdot(u, w).real) * grid.dx * grid.dy


def power_spectrum(values: np.ndarray) -> np.ndarray:
    """|c_k|^2 of the normalized DFT; sums to the grid mean of |f|^2."""
    c = np.fft.fft2(values) / values.size
    return np.abs(c) ** 2

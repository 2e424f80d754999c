"""Floquet holonomies of the spectral Lax system and the trigonal curve family.

The x-holonomy transports the identity along one x-period with coefficient
``C1 = A(lam) + B(lam)``, the y-holonomy along one y-period with
``C2 = i (A(lam) - B(lam))`` (from z = x + i y).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .fields import sample_lines, spectral_derivative
from .frame import propagate
from .tzitzeica import Solution

CERTIFIED_RESIDUAL = 1e-8
DEFAULT_STEPS_FACTOR = 32  # RK4 steps per period = factor * N


def default_lambdas(n: int = 24, radii=(0.5, 1.0, 2.0)) -> np.ndarray:
    """``n`` points spread over circles of the given radii, offset to avoid the real axis."""
    per = [n // len(radii) + (1 if i < n % len(radii) else 0) for i in range(len(radii))]
    out = []
    for r, m in zip(radii, per):
        ang = 2 * np.pi * (np.arange(m) + 0.5) / m
        out.append(r * np.exp(1j * ang))
    return np.concatenate(out)


def _check_lams(lams) -> np.ndarray:
    lams = np.atleast_1d(np.asarray(lams, dtype=complex))
    if np.any(lams == 0) or not np.all(np.isfinite(lams)):
        raise ValueError("spectral parameters must be finite and nonzero")
    return lams


def _coefficients(v, vx, vy, lams, axis):
    """Coefficient matrices for all (lam, line sample); v etc. have shape (T, B)."""
    lam = lams[None, :, None]  # (1, L, 1)
    v, vx, vy = (a[:, None, :] for a in (v, vx, vy))
    vz = 0.5 * (vx - 1j * vy)
    vzb = 0.5 * (vx + 1j * vy)
    ev, emv = np.exp(v), np.exp(-v)
    shape = np.broadcast_shapes(v.shape, lam.shape) + (3, 3)
    C = np.zeros(shape, dtype=complex)
    if axis == "x":
        C[..., 0, 1] = 1.0
        C[..., 0, 2] = 1.0
        C[..., 1, 0] = -ev
        C[..., 1, 1] = vz
        C[..., 1, 2] = -1j / lam * emv
        C[..., 2, 0] = -ev
        C[..., 2, 1] = -1j * lam * emv
        C[..., 2, 2] = vzb
    else:
        C[..., 0, 1] = 1j
        C[..., 0, 2] = -1j
        C[..., 1, 0] = 1j * ev
        C[..., 1, 1] = 1j * vz
        C[..., 1, 2] = emv / lam
        C[..., 2, 0] = -1j * ev
        C[..., 2, 1] = -lam * emv
        C[..., 2, 2] = -1j * vzb
    return C.reshape(C.shape[0], -1, 3, 3)


def holonomies(sol: Solution, lams, bases, axis: str, steps: int | None = None) -> np.ndarray:
    """Batched holonomies, shape ``(len(lams), len(bases), 3, 3)``."""
    if axis not in ("x", "y"):
        raise ValueError("axis must be 'x' or 'y'")
    lams = _check_lams(lams)
    bases = np.atleast_2d(np.asarray(bases, dtype=float))
    g = sol.grid
    vals = sol.v.values
    derivs = (vals, spectral_derivative(vals, g, 0), spectral_derivative(vals, g, 1))
    ax = 0 if axis == "x" else 1
    L = g.Lx if axis == "x" else g.Ly
    n = steps or DEFAULT_STEPS_FACTOR * (g.Nx if axis == "x" else g.Ny)
    h = L / n
    t_rel = h * 0.5 * np.arange(2 * n + 1)
    # all bases sampled at once: each base has its own line offset and start point
    lines = []
    for b in bases:
        off, start = (b[1], b[0]) if axis == "x" else (b[0], b[1])
        lines.append([sample_lines(f, g, ax, [off], start + t_rel)[0] for f in derivs])
    v, vx, vy = (np.stack([ln[k] for ln in lines], axis=1) for k in range(3))  # (T, B)
    C = _coefficients(v, vx, vy, lams, axis)  # (T, L*B, 3, 3)
    R0 = np.broadcast_to(np.eye(3, dtype=complex), (C.shape[1], 3, 3))
    sample = lambda offsets, t: C
    T = propagate(sample, None, 0.0, L, n, R0, "rk4", False)
    return T.reshape(len(lams), len(bases), 3, 3)


def holonomy(sol: Solution, lam: complex, direction: str = "x", base=(0.0, 0.0),
             steps: int | None = None) -> np.ndarray:
    """Transport of the identity once around the period in ``direction`` from ``base``."""
    if sol.residual_norm >= CERTIFIED_RESIDUAL:
        raise ValueError(f"solution is not certified (residual {sol.residual_norm:.2e})")
    return holonomies(sol, [lam], [base], direction, steps)[0, 0]


def char_poly(T: np.ndarray) -> np.ndarray:
    """(c2, c1, c0) with det(T - mu I) = -mu^3 + c2 mu^2 + c1 mu + c0; batched over leading axes."""
    T = np.asarray(T, dtype=complex)
    tr = np.trace(T, axis1=-2, axis2=-1)
    tr2 = np.trace(T @ T, axis1=-2, axis2=-1)
    return np.stack([tr, -0.5 * (tr * tr - tr2), np.linalg.det(T)], axis=-1)


def coefficient_spread(cp: np.ndarray) -> np.ndarray:
    """Per-lambda max deviation over bases, relative to max(1, |c|) at the first base.

    ``cp`` has shape ``(n_lam, n_base, 3)``.
    """
    ref = cp[:, :1, :]
    return np.max(np.abs(cp - ref) / np.maximum(1.0, np.abs(ref)), axis=(1, 2))


def commutator_defect(T1: np.ndarray, T2: np.ndarray) -> np.ndarray:
    """||T1 T2 - T2 T1|| / (||T1|| ||T2||) in max-entry norm; batched."""
    comm = T1 @ T2 - T2 @ T1
    n = lambda M: np.max(np.abs(M), axis=(-2, -1))
    return n(comm) / (n(T1) * n(T2))


@dataclass(frozen=True, eq=False)
class SpectralSample:
    lam: complex
    T1: np.ndarray
    T2: np.ndarray
    charpoly1: np.ndarray
    charpoly2: np.ndarray
    base: tuple[float, float]
    spread: float = 0.0
    commutator: float = 0.0
    det_spread: float = 0.0

    def __post_init__(self):
        if abs(np.linalg.det(self.T1) * np.linalg.det(self.T2)) == 0:
            raise ValueError("holonomies must be invertible")


def default_bases(grid, n: int = 8, seed: int = 7) -> np.ndarray:
    """Deterministic scattered base points, first one at the origin."""
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 1, size=(n, 2)) * [grid.Lx, grid.Ly]
    pts[0] = 0.0
    return pts


def spectral_scan(sol: Solution, lams=None, bases=None, steps: int | None = None) -> list[SpectralSample]:
    """Holonomies, char polys, base-point spread and commutator defect per lambda."""
    if sol.residual_norm >= CERTIFIED_RESIDUAL:
        raise ValueError(f"solution is not certified (residual {sol.residual_norm:.2e})")
    lams = default_lambdas() if lams is None else _check_lams(lams)
    bases = default_bases(sol.grid) if bases is None else np.atleast_2d(np.asarray(bases, float))
    T1 = holonomies(sol, lams, bases, "x", steps)
    T2 = holonomies(sol, lams, bases, "y", steps)
    cp1, cp2 = char_poly(T1), char_poly(T2)
    spread = np.maximum(coefficient_spread(cp1), coefficient_spread(cp2))
    comm = np.max(commutator_defect(T1, T2), axis=1)
    dets = np.abs(np.concatenate([cp1[..., 2], cp2[..., 2]], axis=1))
    det_spread = np.max(dets, axis=1) - np.min(dets, axis=1)
    b0 = tuple(bases[0])
    return [SpectralSample(complex(l), T1[i, 0], T2[i, 0], cp1[i, 0], cp2[i, 0], b0,
                           float(spread[i]), float(comm[i]), float(det_spread[i]))
            for i, l in enumerate(lams)]


def charpoly_table(sol: Solution, lams, bases=((0.0, 0.0),), steps: int | None = None) -> np.ndarray:
    """All six char-poly coefficients per (lambda, base): shape ``(n_lam, n_base, 6)``."""
    lams = _check_lams(lams)
    bases = np.atleast_2d(np.asarray(bases, float))
    cp1 = char_poly(holonomies(sol, lams, bases, "x", steps))
    cp2 = char_poly(holonomies(sol, lams, bases, "y", steps))
    return np.concatenate([cp1, cp2], axis=-1)


def clifford_exponents(lam: complex) -> np.ndarray:
    """Roots of mu^3 + 3 mu - i (lam + 1/lam): Floquet exponents at v = 0."""
    return np.roots([1.0, 0.0, 3.0, -1j * (lam + 1 / lam)])


def match_sets(a, b) -> float:
    """Max pointwise distance under the best permutation matching of two short lists."""
    a, b = np.asarray(a), np.asarray(b)
    return float(min(np.max(np.abs(a - b[list(p)])) for p in itertools.permutations(range(len(b)))))


# ---------------------------------------------------------------------------
# trigonal curves  mu^3 = mu Q1(lam) + Q2(lam)

REALITY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class TrigonalCurve:
    """Laurent data of mu^3 = mu Q1(lam) + Q2(lam).

    ``q[i]`` multiplies ``lam^(2i - 2k)`` (even powers -2k..2k) and ``p[i]``
    multiplies ``lam^(2i - 2n - 1)`` (odd powers -(2n+1)..2n+1). The reality
    conditions conj(q_{-j}) = q_j and conj(p_{-j}) = -p_j are enforced.
    """

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, dtype=complex))
        p = np.atleast_1d(np.asarray(self.p, dtype=complex))
        if len(q) % 2 != 1:
            raise ValueError("q needs 2k + 1 coefficients")
        if len(p) % 2 != 0 or len(p) == 0:
            raise ValueError("p needs 2n + 2 coefficients")
        scale = max(1.0, np.max(np.abs(q)), np.max(np.abs(p)))
        if np.max(np.abs(np.conj(q[::-1]) - q)) > REALITY_TOL * scale:
            raise ValueError("Q1 violates conj(q_{-j}) = q_j")
        if np.max(np.abs(np.conj(p[::-1]) + p)) > REALITY_TOL * scale:
            raise ValueError("Q2 violates conj(p_{-j}) = -p_j")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def k(self) -> int:
        return (len(self.q) - 1) // 2

    @property
    def n(self) -> int:
        return (len(self.p) - 2) // 2

    def Q1(self, lam):
        lam = np.asarray(lam, dtype=complex)
        powers = 2 * np.arange(len(self.q)) - 2 * self.k
        return np.sum(self.q * lam[..., None] ** powers, axis=-1)

    def Q2(self, lam):
        lam = np.asarray(lam, dtype=complex)
        powers = 2 * np.arange(len(self.p)) - (2 * self.n + 1)
        return np.sum(self.p * lam[..., None] ** powers, axis=-1)

    def roots(self, lam: complex) -> np.ndarray:
        """The three mu over ``lam`` (companion-matrix eigenvalues)."""
        if lam == 0:
            raise ValueError("lam = 0 is not on the affine curve")
        return np.roots([1.0, 0.0, -complex(self.Q1(lam)), -complex(self.Q2(lam))])

    @classmethod
    def clifford(cls) -> "TrigonalCurve":
        """Q1 = -3, Q2 = i (lam + 1/lam): the curve of the constant solution."""
        return cls([-3.0], [1j, 1j])

    @classmethod
    def random(cls, k: int, n: int, rng: np.random.Generator) -> "TrigonalCurve":
        """Random coefficients satisfying the reality conditions."""
        qh = rng.standard_normal(k) + 1j * rng.standard_normal(k)
        q = np.concatenate([np.conj(qh[::-1]), [rng.standard_normal()], qh])
        ph = rng.standard_normal(n + 1) + 1j * rng.standard_normal(n + 1)
        p = np.concatenate([-np.conj(ph[::-1]), ph])
        return cls(q, p)


def curve_eval(curve: TrigonalCurve, lam, mu):
    """mu^3 - mu Q1(lam) - Q2(lam)."""
    lam = np.asarray(lam, dtype=complex)
    if np.any(lam == 0):
        raise ValueError("lam = 0 is not on the affine curve")
    mu = np.asarray(mu, dtype=complex)
    return mu ** 3 - mu * curve.Q1(lam) - curve.Q2(lam)


def sigma(lam, mu):
    """Holomorphic involution (lam, mu) -> (-lam, -mu)."""
    return -np.asarray(lam), -np.asarray(mu)


def tau(lam, mu):
    """Antiholomorphic involution (lam, mu) -> (-1/conj(lam), conj(mu)).

    Under conj(q_{-j}) = q_j, conj(p_{-j}) = -p_j one has
    Q1(-1/conj lam) = conj Q1(lam) and Q2(-1/conj lam) = conj Q2(lam), so the
    curve is preserved with mu -> conj(mu); mu -> -conj(mu) is not.
    """
    lam = np.asarray(lam, dtype=complex)
    return -1 / np.conj(lam), np.conj(np.asarray(mu))


def involution_check(curve: TrigonalCurve, samples: int = 20, seed: int = 0,
                     radii=(0.5, 2.0)) -> dict:
    """Residuals of curve_eval at sigma/tau images of random curve points."""
    rng = np.random.default_rng(seed)
    r = rng.uniform(*radii, size=samples)
    lams = r * np.exp(2j * np.pi * rng.uniform(size=samples))
    res = {"sigma": 0.0, "tau": 0.0, "on_curve": 0.0, "sigma_match": 0.0, "tau_match": 0.0}
    for lam in lams:
        mus = curve.roots(lam)
        res["on_curve"] = max(res["on_curve"], float(np.max(np.abs(curve_eval(curve, lam, mus)))))
        for name, inv in (("sigma", sigma), ("tau", tau)):
            l2, m2 = inv(lam, mus)
            res[name] = max(res[name], float(np.max(np.abs(curve_eval(curve, l2, m2)))))
            res[name + "_match"] = max(res[name + "_match"], match_sets(m2, curve.roots(complex(l2))))
    res["samples"] = samples
    return res

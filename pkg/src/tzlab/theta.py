"""Prym theta series, its quasi-periodicity and Baker-Akhiezer phase assembly.

    theta(z) = sum_{n in Z^g} exp(1/2 <Omega n, n> + <z, n>)

with ``<a, b> = sum a_j b_j`` (bilinear) and Re Omega negative definite.
Abelian integrals and period data are inputs; nothing here computes them.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

SYMMETRY_TOL = 1e-12


class ThetaDomainError(ValueError):
    """Period matrix outside the convergence region."""


def _cvec(x, n=None, name="vector") -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=complex))
    if arr.ndim != 1 or (n is not None and arr.shape[0] != n):
        raise ValueError(f"{name} must be a complex vector of length {n}, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class PrymData:
    """Period matrix plus optional flow vectors V_k, Vt_k and constants alpha_k, e.

    ``V[k]`` holds the b-periods of the k-th normalized second-kind
    differential at the first infinity, ``Vt[k]`` the same at the second.
    """

    omega: np.ndarray
    V: tuple = ()
    Vt: tuple = ()
    alpha: tuple = ()
    e: np.ndarray | None = None

    def __post_init__(self):
        om = np.atleast_2d(np.asarray(self.omega, dtype=complex))
        if om.ndim != 2 or om.shape[0] != om.shape[1]:
            raise ValueError(f"Omega must be square, got shape {om.shape}")
        if np.max(np.abs(om - om.T)) > SYMMETRY_TOL:
            raise ThetaDomainError("Omega is not symmetric")
        top = float(np.max(np.linalg.eigvalsh(om.real)))
        if not top < 0:
            raise ThetaDomainError(f"Re Omega must be negative definite (largest eigenvalue {top:.3g})")
        g = om.shape[0]
        object.__setattr__(self, "omega", om)
        object.__setattr__(self, "V", tuple(_cvec(v, g, "V_k") for v in self.V))
        object.__setattr__(self, "Vt", tuple(_cvec(v, g, "Vt_k") for v in self.Vt))
        object.__setattr__(self, "alpha", tuple(complex(a) for a in self.alpha))
        e = np.zeros(g, dtype=complex) if self.e is None else _cvec(self.e, g, "e")
        object.__setattr__(self, "e", e)

    @property
    def g0(self) -> int:
        return self.omega.shape[0]

    @property
    def kappa(self) -> float:
        """-(largest eigenvalue of Re Omega): the Gaussian decay rate."""
        return -float(np.max(np.linalg.eigvalsh(self.omega.real)))

    @classmethod
    def random(cls, g0: int, rng: np.random.Generator, spread=(0.5, 1.5)) -> "PrymData":
        """Random admissible Omega: Re part with eigenvalues in -spread, arbitrary Im part."""
        Q = np.linalg.qr(rng.standard_normal((g0, g0)))[0]
        re = -(Q * rng.uniform(*spread, g0)) @ Q.T
        im = rng.standard_normal((g0, g0))
        return cls(0.5 * (re + re.T) + 0.5j * (im + im.T))


@dataclass(frozen=True)
class ThetaValue:
    value: complex
    radius: int
    tail_bound: float


def _shell_bound(kappa: float, b: float, g: int, r: int, log_scale: float) -> float:
    count = (2 * r + 1) ** g - (2 * r - 1) ** g
    return count * math.exp(-0.5 * kappa * r * r + b * r - log_scale)


def tail_bound(data: PrymData, z, R: int, log_scale: float = 0.0) -> float:
    """Bound on sum_{|n|_inf > R} |term|, in units of exp(log_scale).

    Uses Re <Omega n, n> <= -kappa |n|^2 <= -kappa |n|_inf^2 and
    |Re <z, n>| <= |Re z|_1 |n|_inf, summed shell by shell.
    """
    z = _cvec(z, data.g0, "z")
    kappa, b, g = data.kappa, float(np.sum(np.abs(z.real))), data.g0
    total, r = 0.0, R + 1
    while True:
        term = _shell_bound(kappa, b, g, r, log_scale)
        total += term
        # past the peak, the remaining shells form a decreasing sequence
        # bounded by a geometric series
        if r > b / kappa + 1:
            ratio = _shell_bound(kappa, b, g, r + 1, log_scale) / term if term > 0 else 0.0
            if ratio < 0.5:
                return total + term * ratio / (1 - ratio)
        r += 1


def truncation_radius(data: PrymData, z, tol: float, log_scale: float = 0.0) -> int:
    R = 0
    while tail_bound(data, z, R, log_scale) > tol:
        R += 1
    return R


def _box(g: int, R: int) -> np.ndarray:
    return np.array(list(itertools.product(range(-R, R + 1), repeat=g)), dtype=float)


def theta_eval(data: PrymData, z, tol: float = 1e-14, radius: int | None = None) -> ThetaValue:
    """Truncated theta series over |n|_inf <= R with a certified tail bound.

    ``tol`` is absolute. Terms are summed with ``math.fsum`` over the real and
    imaginary parts (deterministic, order independent).
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    z = _cvec(z, data.g0, "z")
    R = truncation_radius(data, z, tol) if radius is None else int(radius)
    n = _box(data.g0, R)
    expo = 0.5 * np.einsum("ki,ij,kj->k", n, data.omega, n) + n @ z
    terms = np.exp(expo)
    value = complex(math.fsum(terms.real), math.fsum(terms.imag))
    return ThetaValue(value, R, tail_bound(data, z, R))


def periodicity_factor(data: PrymData, z, m) -> complex:
    """exp(-1/2 <Omega m, m> - <z, m>), the factor with theta(z + Omega m) = factor * theta(z)."""
    z = _cvec(z, data.g0, "z")
    m = np.asarray(m, dtype=float).reshape(data.g0)
    return complex(np.exp(-0.5 * m @ data.omega @ m - z @ m))


def quasi_periodicity_defect(data: PrymData, z, m, tol: float = 1e-15) -> float:
    """|theta(z + Omega m) - factor * theta(z)| / (1 + |theta(z)|)."""
    z = _cvec(z, data.g0, "z")
    m = np.asarray(m, dtype=int).reshape(data.g0)
    if not np.any(m):
        return 0.0
    base = theta_eval(data, z, tol).value
    factor = periodicity_factor(data, z, m)
    shifted = theta_eval(data, z + data.omega @ m, tol * max(1.0, abs(factor))).value
    return abs(shifted - factor * base) / (1 + abs(base))


# ---------------------------------------------------------------------------
# Baker-Akhiezer phase

@dataclass(frozen=True, eq=False)
class AbelianIntegrals:
    """Values at a point P: eta(P), int Omega_k from P0, int Omega~_k from the first infinity."""

    eta: np.ndarray
    omega: tuple = ()
    omega_tilde: tuple = ()


@dataclass(frozen=True, eq=False)
class BAPhase:
    exponent: complex
    exponent_terms: dict = field(default_factory=dict)
    theta_argument: np.ndarray | None = None
    argument_terms: dict = field(default_factory=dict)
    denominator_arguments: tuple = ()


def ba_phase(data: PrymData, integrals: AbelianIntegrals, z: complex, t=()) -> BAPhase:
    """Assemble the exponential factor and theta arguments of the BA function.

    Exponent: z (I_0 - alpha_0) + zbar It_0 + sum_n [t'_n (I_n - alpha_n) + conj(t'_n) It_n]
    Theta argument: eta(P) + z V_0 + zbar Vt_0 + sum_n [t'_n V_n + conj(t'_n) Vt_n] - e
    with t'_n = t_n + i t_n for real times t_1, t_2, ...
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    need = len(t) + 1
    missing = [name for name, seq in (("V", data.V), ("Vt", data.Vt), ("alpha", data.alpha),
                                      ("Omega integrals", integrals.omega),
                                      ("Omega~ integrals", integrals.omega_tilde))
               if len(seq) < need]
    if missing:
        raise ValueError(f"need {need} entries (orders 0..{need - 1}) of: {', '.join(missing)}")
    z = complex(z)
    zb = z.conjugate()
    eta = _cvec(integrals.eta, data.g0, "eta(P)")
    I = [complex(x) for x in integrals.omega]
    It = [complex(x) for x in integrals.omega_tilde]
    tp = t + 1j * t

    ex = {"z": z * (I[0] - data.alpha[0]), "zbar": zb * It[0],
          "t": [tp[k] * (I[k + 1] - data.alpha[k + 1]) + np.conj(tp[k]) * It[k + 1]
                for k in range(len(t))]}
    arg = {"eta": eta, "z": z * data.V[0], "zbar": zb * data.Vt[0],
           "t": [tp[k] * data.V[k + 1] + np.conj(tp[k]) * data.Vt[k + 1] for k in range(len(t))],
           "e": -data.e}
    flow = arg["z"] + arg["zbar"] + sum(arg["t"], np.zeros(data.g0, dtype=complex))
    exponent = ex["z"] + ex["zbar"] + sum(ex["t"], 0j)
    return BAPhase(complex(exponent), ex, eta + flow - data.e, arg, (eta - data.e, flow - data.e))

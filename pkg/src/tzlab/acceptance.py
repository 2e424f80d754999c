"""The acceptance suite: ten numbered checks with closed-form or independent oracles.

Each check returns a :class:`CheckResult`; :func:`run_all` prints one line per
check. Reference solutions are cached per process, so the suite pays for
each continuation and deformation run once.
"""
from __future__ import annotations

import functools
import inspect
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import frame, io, laxpair, nvflow, spectral, theta
from . import tzitzeica as tz
from .fields import ScalarField, TorusGrid, fourier_shift, spectral_derivative

RESONANT_L = 4 * np.pi / np.sqrt(12.0)
CLIFFORD_GRID = TorusGrid(2 * np.pi, 2 * np.pi / np.sqrt(3.0), 64, 64)
SAMPLE_LAMBDAS = (1.0, 2.0, 1j, 1 + 1j, np.exp(1j * np.pi / 5))


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.number:2d} {self.name} ({self.seconds:.1f} s)"


# ---------------------------------------------------------------------------
# reference solutions

def lattice5_grid(N: int) -> TorusGrid:
    """Square lattice with |k|^2 = 12 on the shell (1, 2): eight resonant modes."""
    L = 2 * np.pi * np.sqrt(5 / 12)
    return TorusGrid(L, L, N, N)


def lattice5_direction(grid: TorusGrid) -> ScalarField:
    """Kernel element at v = 0 with the square's full symmetry."""
    a = 2 * np.pi / grid.Lx
    return ScalarField.from_function(
        grid, lambda x, y: np.cos(a * x) * np.cos(2 * a * y) + np.cos(2 * a * x) * np.cos(a * y))


@functools.lru_cache(maxsize=None)
def nontrivial_solution(N: int = 64, steps: int = 2, ds: float = 0.05) -> tz.Solution:
    """Doubly periodic, non-constant solution continued from v = 0."""
    g = lattice5_grid(N)
    branch = tz.continue_branch(tz.constant_solution(g), lattice5_direction(g), ds, steps)
    if branch.failed or len(branch) < steps + 1:
        raise RuntimeError(f"reference continuation failed: {branch.message}")
    return branch[-1]


@functools.lru_cache(maxsize=None)
def one_dimensional_solution(N: int = 64, steps: int = 3, ds: float = 0.1) -> tz.Solution:
    """y-independent branch solution from the resonant mode cos(sqrt(12) x)."""
    g = TorusGrid(RESONANT_L, RESONANT_L, N, N)
    w = ScalarField.from_function(g, lambda x, y: np.cos(np.sqrt(12.0) * x) + 0 * y)
    branch = tz.continue_branch(tz.constant_solution(g), w, ds, steps)
    if branch.failed:
        raise RuntimeError(f"1D continuation failed: {branch.message}")
    return branch[-1]


@functools.lru_cache(maxsize=None)
def deformation_runs(N: int = 40, steps: int = 50):
    """(kernel path, translation path, kernel basis) on the nontrivial solution."""
    sol = nontrivial_solution(N)
    K = nvflow.kernel_basis(sol)
    trans, other = K[0], K[2]
    kpath = nvflow.deform(sol, other, 0.01 / np.max(np.abs(other.values)), steps)
    tpath = nvflow.deform(sol, trans, 0.01 / np.max(np.abs(trans.values)), 10)
    return kpath, tpath, K


# ---------------------------------------------------------------------------
# checks

def check_constant_identity() -> dict:
    g = TorusGrid(2 * np.pi, 2 * np.pi, 64, 64)
    res = tz.tzitzeica_residual(ScalarField.zeros(g)).values
    data = laxpair.LagrangianData.minimal(ScalarField.zeros(g), F=1.0, G=0.0, beta=0.0)
    compat = [r.values for r in laxpair.compatibility_residuals(data)]
    ok = bool(np.all(res == 0) and all(np.all(r == 0) for r in compat))
    return {"passed": ok, "residual_max": float(np.max(np.abs(res))),
            "compatibility_max": [float(np.max(np.abs(r))) for r in compat]}


def check_zero_curvature() -> dict:
    sols = {"constant": tz.constant_solution(CLIFFORD_GRID),
            "nontrivial": nontrivial_solution(64),
            "one_dimensional": one_dimensional_solution(64)}
    worst = {}
    certified = all(s.residual_norm < 1e-10 for s in sols.values())
    for name, s in sols.items():
        worst[name] = max(laxpair.matrix_norm(laxpair.zero_curvature_residual(
            *laxpair.lax_matrices(s.v, lam), coords="zbar")) for lam in SAMPLE_LAMBDAS)
    g = lattice5_grid(64)
    bad = ScalarField.from_function(g, lambda x, y: 0.3 * np.cos(x) * np.sin(2 * y))
    bad_res = min(laxpair.matrix_norm(laxpair.zero_curvature_residual(
        *laxpair.lax_matrices(bad, lam), coords="zbar")) for lam in SAMPLE_LAMBDAS)
    ok = certified and max(worst.values()) < 1e-8 and bad_res > 1e-3
    return {"passed": ok, "certified": worst, "non_solution": bad_res}


def check_clifford_reconstruction() -> dict:
    g = CLIFFORD_GRID
    sol = tz.constant_solution(g)
    surf = frame.reconstruct_surface(sol, steps_per_period=256, method="cf4")
    ref = frame.clifford_surface(g)
    err = float(np.max(np.abs(frame.align_frames(surf, ref) - ref.r_closed)))
    # self-convergence of the classical RK4 integrator at 64, 128, 256 steps
    runs = [frame.reconstruct_surface(sol, steps_per_period=n, method="rk4").r_closed
            for n in (64, 128, 256)]
    d1 = np.max(np.abs(runs[0] - runs[1]))
    d2 = np.max(np.abs(runs[1] - runs[2]))
    order = float(np.log2(d1 / d2))
    report = frame.verify_immersion(surf)
    ok = err < 1e-6 and abs(order - 4) <= 0.5 and max(report["defects"].values()) < 1e-6
    return {"passed": ok, "alignment_error": err, "rk4_order": order, "defects": report["defects"]}


def _annulus_lambdas(n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.exp(rng.uniform(-1, 1, n)) * np.exp(1j * rng.uniform(0, 2 * np.pi, n))


def check_clifford_spectrum(seed: int = 0) -> dict:
    g = CLIFFORD_GRID
    sol = tz.constant_solution(g)
    lams = _annulus_lambdas(20, seed)
    T = spectral.holonomies(sol, lams, [(0.0, 0.0)], "x")[:, 0]
    errs, abs_errs = [], []
    for lam, M in zip(lams, T):
        expected = np.exp(g.Lx * spectral.clifford_exponents(lam))
        got = np.linalg.eigvals(M)
        abs_errs.append(spectral.match_sets(got, expected))
        # multipliers reach e^{9} here; compare on the multipliers' own scale
        errs.append(abs_errs[-1] / max(1.0, np.max(np.abs(expected))))
    return {"passed": max(errs) < 1e-8, "max_error": float(max(errs)),
            "max_abs_error": float(max(abs_errs))}


def check_floquet(include_deformation: bool = True) -> dict:
    sols = {"constant": tz.constant_solution(CLIFFORD_GRID),
            "one_dimensional": one_dimensional_solution(64),
            "nontrivial": nontrivial_solution(64)}
    if include_deformation:
        kpath, _, _ = deformation_runs()
        sols["deformed_end"] = kpath.solutions[-1]
    out = {}
    for name, s in sols.items():
        scan = spectral.spectral_scan(s)
        out[name] = {"spread": max(x.spread for x in scan),
                     "commutator": max(x.commutator for x in scan)}
    ok = all(d["spread"] < 1e-8 and d["commutator"] < 1e-8 for d in out.values())
    return {"passed": ok, "solutions": out}


def check_linearized_operator(seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    sol = nontrivial_solution(64)
    g = sol.grid
    v = sol.v.values
    u = ScalarField(g, rng.standard_normal(g.shape))
    w = ScalarField(g, rng.standard_normal(g.shape))
    Ju, Jw = nvflow.linearized_apply(sol, u), nvflow.linearized_apply(sol, w)
    a, b = np.sum(Ju.values * w.values), np.sum(u.values * Jw.values)
    selfadj = float(abs(a - b) / (np.linalg.norm(Ju.values) * np.linalg.norm(w.values)))
    # central finite differences of the residual along a smooth direction
    smooth = ScalarField(g, np.real(fourier_shift(lattice5_direction(g).values, g, 0.3, 0.1)))
    Jd = nvflow.linearized_apply(sol, smooth).values
    fd = []
    for eps in (1e-2, 5e-3):
        d = (tz.residual_array(v + eps * smooth.values, g) - tz.residual_array(v - eps * smooth.values, g)) / (2 * eps)
        fd.append(float(np.max(np.abs(d - Jd))))
    fd_order = float(np.log2(fd[0] / fd[1]))
    dims = {}
    for name, L in (("resonant", RESONANT_L), ("generic", 2 * np.pi)):
        grid = TorusGrid(L, L, 64, 64)
        dims[name] = len(nvflow.kernel_basis(tz.constant_solution(grid)))
    K = nvflow.kernel_basis(sol)
    Q = np.column_stack([k.values.ravel() for k in K])
    trans_res = []
    for ax in (0, 1):
        t = spectral_derivative(v, g, ax).ravel()
        proj = Q @ (Q.T @ t) / t.size
        trans_res.append(float(np.sqrt(np.mean((t - proj) ** 2)) / np.sqrt(np.mean(t ** 2))))
    ok = (selfadj < 1e-10 and abs(fd_order - 2) < 0.3 and dims == {"resonant": 4, "generic": 0}
          and max(trans_res) < 1e-6)
    return {"passed": ok, "self_adjointness": selfadj, "fd_errors": fd, "fd_order": fd_order,
            "kernel_dimensions": dims, "nontrivial_kernel_dimension": len(K),
            "translation_residuals": trans_res}


def check_isospectrality() -> dict:
    kpath, tpath, K = deformation_runs()
    lams = spectral.default_lambdas()
    rep_t = nvflow.isospectrality_report(tpath, lams)
    rep_k = nvflow.isospectrality_report(kpath, lams)
    moved = nvflow.translation_distance(kpath.solutions[-1].v, kpath.solutions[0].v)
    lattices = {(s.grid.Lx, s.grid.Ly, s.grid.Nx, s.grid.Ny) for s in kpath.solutions + tpath.solutions}
    certified = max(s.residual_norm for s in kpath.solutions) < 1e-10
    ok = (rep_t["max_drift"] < 1e-10 and rep_k["max_drift"] < 1e-6 and moved > 1e-3
          and len(lattices) == 1 and certified and len(kpath) >= 51 and not kpath.flags)
    return {"passed": ok, "translation_drift": rep_t["max_drift"],
            "kernel_drift": rep_k["max_drift"], "noise_floor": rep_k["max_baseline"],
            "moved_modulo_translation": moved, "steps": len(kpath) - 1,
            "max_residual": max(s.residual_norm for s in kpath.solutions),
            "kernel_dimension": len(K), "flags": list(kpath.flags)}


def check_one_dimensional() -> dict:
    v0 = 0.5
    period = tz.period_1d(v0)
    prof = tz.integrate_1d(v0, 0.0, 10 * period, 20000)
    small = tz.period_1d(1e-3)
    target = np.pi / np.sqrt(3.0)
    # the 2D branch solution against the 1D ODE started from its own data at x = 0
    sol = one_dimensional_solution(64)
    g = sol.grid
    row = sol.v.values[:, 0]
    y_spread = float(np.max(np.ptp(sol.v.values, axis=1)))
    vx0 = spectral_derivative(sol.v.values, g, 0)[0, 0]
    ode = tz.integrate_1d(row[0], vx0, g.Lx, 64 * g.Nx)
    match = float(np.max(np.abs(ode.v[::64][: g.Nx] - row)))
    ok = (prof.energy_drift < 1e-10 and abs(small - target) / target < 1e-3
          and match < 1e-6 and y_spread < 1e-10)
    return {"passed": ok, "energy_drift": prof.energy_drift, "small_period": small,
            "period_relative_error": abs(small - target) / target,
            "profile_mismatch": match, "y_spread": y_spread, "amplitude": float(np.ptp(row))}


def check_theta(seed: int = 0) -> dict:
    d1 = theta.PrymData([[-2 * np.pi]])
    th0 = theta.theta_eval(d1, [0.0]).value
    ref = 1.086434811213308
    rng = np.random.default_rng(seed)
    worst, even = {}, 0.0
    for g0, mr in ((1, 2), (2, 2), (3, 1)):
        w = 0.0
        for _ in range(100):
            data = theta.PrymData.random(g0, rng)
            z = rng.uniform(-0.5, 0.5, g0) + 1j * rng.uniform(-3, 3, g0)
            m = rng.integers(-mr, mr + 1, g0)
            w = max(w, theta.quasi_periodicity_defect(data, z, m))
            a, b = theta.theta_eval(data, z).value, theta.theta_eval(data, -z).value
            even = max(even, abs(a - b) / max(1.0, abs(a)))
        worst[g0] = w
    ok = abs(th0 - ref) < 1e-12 and max(worst.values()) < 1e-11 and even < 1e-12
    return {"passed": ok, "theta0": th0, "theta0_error": abs(th0 - ref),
            "quasi_periodicity": worst, "evenness": even}


def check_trigonal_curve(seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    try:
        spectral.TrigonalCurve(q=[1j], p=[1.0, 1.0])
        rejects = False
    except ValueError:
        rejects = True
    worst = {"sigma": 0.0, "tau": 0.0}
    for k, n in ((0, 0), (1, 0), (1, 1), (2, 1)):
        for _ in range(3):
            rep = spectral.involution_check(spectral.TrigonalCurve.random(k, n, rng), samples=20,
                                            seed=int(rng.integers(1 << 30)))
            worst["sigma"] = max(worst["sigma"], rep["sigma"])
            worst["tau"] = max(worst["tau"], rep["tau"])
    cliff = spectral.TrigonalCurve.clifford()
    crep = spectral.involution_check(cliff, samples=20)
    lams = _annulus_lambdas(20, 0)
    root_err = max(spectral.match_sets(cliff.roots(l), spectral.clifford_exponents(l)) for l in lams)
    ok = (rejects and max(worst.values()) < 1e-10 and max(crep["sigma"], crep["tau"]) < 1e-10
          and root_err < 1e-10)
    return {"passed": ok, "rejects_nonreal": rejects, "random_curves": worst,
            "clifford": {"sigma": crep["sigma"], "tau": crep["tau"]}, "root_error": root_err}


def check_checksum() -> dict:
    """A corrupted container is reported, not silently read."""
    with tempfile.TemporaryDirectory() as tmp:
        p = Path(tmp) / "field.bin"
        io.write_field(p, ScalarField.zeros(TorusGrid(1.0, 1.0, 8, 8)))
        raw = bytearray(p.read_bytes())
        raw[-1] ^= 0xFF
        p.write_bytes(bytes(raw))
        try:
            io.read_field(p)
            caught = False
        except io.ChecksumError:
            caught = True
    return {"passed": caught}


CHECKS = [
    (1, "constant-solution identity", check_constant_identity),
    (2, "zero curvature <-> Tzitzeica", check_zero_curvature),
    (3, "Clifford reconstruction", check_clifford_reconstruction),
    (4, "Clifford spectral curve", check_clifford_spectrum),
    (5, "Floquet well-definedness", check_floquet),
    (6, "linearized operator", check_linearized_operator),
    (7, "isospectral deformation", check_isospectrality),
    (8, "1D reduction", check_one_dimensional),
    (9, "theta suite", check_theta),
    (10, "trigonal curve", check_trigonal_curve),
]


def run_check(number: int, seed: int = 0) -> CheckResult:
    num, name, fn = CHECKS[number - 1]
    t0 = time.perf_counter()
    try:
        details = fn(seed=seed) if "seed" in inspect.signature(fn).parameters else fn()
        passed = bool(details.pop("passed"))
    except Exception as exc:  # noqa: BLE001 - reported as a failure, suite continues
        details, passed = {"error": f"{type(exc).__name__}: {exc}"}, False
    return CheckResult(num, name, passed, details, time.perf_counter() - t0)


def run_all(numbers=None, echo=print, seed: int = 0) -> list[CheckResult]:
    """Run the checks (all, or those in ``numbers``); randomized ones use ``seed``."""
    results = []
    for num, _, _ in CHECKS:
        if numbers and num not in numbers:
            continue
        r = run_check(num, seed)
        results.append(r)
        if echo:
            echo(r.line())
    t0 = time.perf_counter()
    io_ok = check_checksum()["passed"]
    if echo:
        echo(f"[{'PASS' if io_ok else 'FAIL'}] -- corrupted container detected "
             f"({time.perf_counter() - t0:.1f} s)")
    return results

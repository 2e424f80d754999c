"""Command-line front end: ``tzlab <command> [options]``.

Settings resolve as flags > ``--config`` JSON file > built-in defaults. Each
command writes its artifacts plus ``manifest.json`` (file names and sha256)
into ``--out``. Errors go to stderr as one JSON object and to stdout as text.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import io as tio

log = logging.getLogger("tzlab")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


class ConfigError(ValueError):
    """Invalid command line or configuration."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


# ---------------------------------------------------------------------------
# spec parsers

def parse_grid(spec: str):
    """``NxxNy:LxxLy`` (e.g. ``64x64:6.2832x6.2832``) or ``NxxNy:name``.

    Names: ``clifford`` (2pi x 2pi/sqrt3), ``resonant`` (4pi/sqrt12 square),
    ``lattice5`` (2pi sqrt(5/12) square).
    """
    from .fields import TorusGrid

    try:
        sizes, periods = spec.split(":")
        Nx, Ny = (int(s) for s in sizes.lower().split("x"))
        named = {"clifford": (2 * np.pi, 2 * np.pi / np.sqrt(3.0)),
                 "resonant": (4 * np.pi / np.sqrt(12.0),) * 2,
                 "lattice5": (2 * np.pi * np.sqrt(5 / 12),) * 2}
        if periods.lower() in named:
            Lx, Ly = named[periods.lower()]
        else:
            Lx, Ly = (float(s) for s in periods.lower().split("x"))
    except ValueError:
        raise ConfigError(f"bad grid spec {spec!r}; expected e.g. 64x64:6.2832x6.2832") from None
    return TorusGrid(Lx, Ly, Nx, Ny)


def parse_lambdas(spec: str) -> np.ndarray:
    """``circle:R:N``, ``default`` (24 points on three circles) or a comma list like ``1,2j,1+1j``."""
    from .spectral import default_lambdas

    try:
        if spec == "default":
            return default_lambdas()
        if spec.startswith("circle:"):
            _, r, n = spec.split(":")
            n = int(n)
            return float(r) * np.exp(2j * np.pi * (np.arange(n) + 0.5) / n)
        lams = np.array([complex(s.replace(" ", "").replace("i", "j")) for s in spec.split(",")])
    except ValueError:
        raise ConfigError(f"bad lambda spec {spec!r}") from None
    if np.any(lams == 0):
        raise ConfigError("spectral parameters must be nonzero")
    return lams


def _cjson(x):
    """Nested JSON with [re, im] pairs -> complex ndarray."""
    if isinstance(x, list) and len(x) == 2 and all(isinstance(v, (int, float)) for v in x):
        return tio.as_complex(x)
    if isinstance(x, list):
        return [_cjson(v) for v in x]
    return complex(x)


def _load_json_arg(text: str):
    p = Path(text)
    try:
        return json.loads(p.read_text() if p.exists() else text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"not valid JSON: {text!r} ({exc})") from None


# ---------------------------------------------------------------------------
# context

class Run:
    """Resolved settings plus the manifest of produced files."""

    def __init__(self, command: str, settings: dict):
        self.command = command
        self.s = settings
        self.out = Path(settings["out"])
        self.out.mkdir(parents=True, exist_ok=True)
        self.files: list[Path] = []
        self.summary: dict = {}

    def __getitem__(self, key):
        return self.s[key]

    def path(self, name: str) -> Path:
        p = self.out / name
        self.files.append(p)
        return p

    def add_sidecar(self, p: Path):
        self.files.append(tio.sidecar_path(p))

    def write_manifest(self):
        files = []
        for p in sorted(set(self.files)):
            if p.is_file():
                files.append({"file": str(p.relative_to(self.out)), "sha256": tio.sha256_file(p)})
        cfg = {k: v for k, v in self.s.items() if k not in ("config", "out")}
        tio.dump_json({"command": self.command, "version": __version__, "settings": cfg,
                       "files": files, "summary": self.summary}, self.out / "manifest.json")


def _need(run: Run, key: str):
    if run.s.get(key) in (None, ""):
        raise ConfigError(f"{run.command}: --{key.replace('_', '-')} is required")
    return run.s[key]


# ---------------------------------------------------------------------------
# commands

def cmd_solve(run: Run) -> int:
    from .fields import ScalarField
    from .tzitzeica import constant_solution, solve_newton

    grid = parse_grid(run["grid"])
    if run["constant"]:
        sol = constant_solution(grid)
    else:
        guess = run["guess"]
        if guess is None:
            raise ConfigError("solve: give --constant or --guess (a number or a field file)")
        try:
            field = ScalarField(grid, np.full(grid.shape, float(guess)))
        except ValueError:
            field = tio.read_field(guess)
        sol = solve_newton(field, tol=run["tol"], max_iter=run["max_iter"])
    p = run.path(run["name"] or "solution.bin")
    tio.write_solution(p, sol)
    run.add_sidecar(p)
    run.summary = {"residual_norm": sol.residual_norm, "lineage": sol.lineage, "ptp": float(np.ptp(sol.v.values))}
    print(f"solution written to {p} (residual {sol.residual_norm:.3e})")
    return EXIT_OK


def parse_modes(spec: str, grid):
    """``modes:p,q;p2,q2;...`` -> sum of cos(2 pi p x / Lx) cos(2 pi q y / Ly)."""
    from .fields import ScalarField

    try:
        pairs = [tuple(int(t) for t in item.split(",")) for item in spec[len("modes:"):].split(";")]
        if any(len(pq) != 2 for pq in pairs):
            raise ValueError
    except ValueError:
        raise ConfigError(f"bad mode spec {spec!r}; expected e.g. modes:1,2;2,1") from None
    a, b = 2 * np.pi / grid.Lx, 2 * np.pi / grid.Ly
    return ScalarField.from_function(
        grid, lambda x, y: sum(np.cos(p * a * x) * np.cos(q * b * y) for p, q in pairs))


def _direction(run: Run, sol):
    from .nvflow import kernel_basis

    if run.s.get("direction"):
        if str(run["direction"]).startswith("modes:"):
            return parse_modes(run["direction"], sol.grid)
        return tio.read_field(run["direction"])
    K = kernel_basis(sol)
    k = int(run["direction_index"])
    if not 0 <= k < len(K):
        raise ConfigError(f"direction index {k} out of range: kernel dimension is {len(K)}")
    return K[k]


def cmd_continue(run: Run) -> int:
    from .tzitzeica import continue_branch

    sol = tio.read_solution(_need(run, "solution"))
    w = _direction(run, sol)
    branch = continue_branch(sol, w, run["step"], run["steps"], tol=run["tol"])
    for k, s in enumerate(branch):
        p = run.path(f"branch_{k:04d}.bin")
        tio.write_solution(p, s)
        run.add_sidecar(p)
    run.summary = {"entries": len(branch), "failed": branch.failed, "message": branch.message,
                   "ptp": [float(np.ptp(s.v.values)) for s in branch],
                   "scale": [s.stats.get("scale", 1.0) for s in branch]}
    print(f"{len(branch)} branch solutions written to {run.out}" + (f" ({branch.message})" if branch.failed else ""))
    return EXIT_FAIL if branch.failed else EXIT_OK


def cmd_reconstruct(run: Run) -> int:
    from .frame import reconstruct_surface, verify_immersion

    sol = tio.read_solution(_need(run, "solution"))
    surf = reconstruct_surface(sol, steps_per_period=run["steps_per_period"], method=run["method"])
    report = verify_immersion(surf)
    p = run.path(run["name"] or "surface.bin")
    tio.write_surface(p, surf, report)
    run.add_sidecar(p)
    run.summary = report
    print(f"surface written to {p}; closure defect {report['closure']['strict']:.2e}")
    return EXIT_OK


def cmd_verify(run: Run) -> int:
    from .frame import verify_immersion

    surf = tio.read_surface(_need(run, "surface"))
    report = verify_immersion(surf, threshold=run["threshold"])
    tio.dump_json(report, run.path("verify.json"))
    run.summary = {"passed": report["passed"], "flagged": report["flagged"]}
    for k, d in report["defects"].items():
        print(f"{k:12s} {d:.3e}")
    print("all defects below threshold" if report["passed"] else f"flagged: {', '.join(report['flagged'])}")
    return EXIT_OK if report["passed"] else EXIT_FAIL


def cmd_spectrum(run: Run) -> int:
    from .spectral import default_bases, spectral_scan

    sol = tio.read_solution(_need(run, "solution"))
    lams = parse_lambdas(run["lambdas"])
    bases = default_bases(sol.grid, n=run["bases"], seed=run["seed"])
    scan = spectral_scan(sol, lams, bases)
    p = run.path("spectrum.csv")
    head = ["lam_re", "lam_im"]
    for h in (1, 2):
        for c in ("c2", "c1", "c0"):
            head += [f"{c}_{h}_re", f"{c}_{h}_im"]
    head += ["spread", "commutator"]
    rows = []
    for s in scan:
        row = [s.lam.real, s.lam.imag]
        for c in (*s.charpoly1, *s.charpoly2):
            row += [c.real, c.imag]
        rows.append(row + [s.spread, s.commutator])
    np.savetxt(p, np.array(rows), delimiter=",", header=",".join(head), comments="", fmt="%.17g")
    run.summary = {"max_spread": max(s.spread for s in scan),
                   "max_commutator": max(s.commutator for s in scan)}
    print(f"{len(scan)} spectral samples written to {p}; max spread {run.summary['max_spread']:.2e}")
    return EXIT_OK


def cmd_deform(run: Run) -> int:
    from .nvflow import deform

    sol = tio.read_solution(_need(run, "solution"))
    w = _direction(run, sol)
    dt = run["dt"] or 0.01 / max(float(np.max(np.abs(w.values))), 1e-300)
    path = deform(sol, w, dt, run["steps"])
    manifest = tio.write_path(run.out / "path", path)
    run.files += [manifest] + [run.out / "path" / f"step_{k:04d}.bin" for k in range(len(path))]
    run.files += [tio.sidecar_path(run.out / "path" / f"step_{k:04d}.bin") for k in range(len(path))]
    run.summary = {"entries": len(path), "dt": dt, "flags": path.flags, "failed": path.failed}
    print(f"deformation path with {len(path)} entries written to {run.out / 'path'}")
    for f in path.flags:
        print(f"flag: {f}")
    return EXIT_FAIL if path.failed else EXIT_OK


def cmd_isospec(run: Run) -> int:
    from .nvflow import isospectrality_report

    src = Path(_need(run, "path"))
    if (src / "path" / "manifest.json").exists():
        src = src / "path"
    path = tio.read_path(src)
    lams = parse_lambdas(run["lambdas"])
    rep = isospectrality_report(path, lams)
    p = run.path("isospec.csv")
    rows = np.column_stack([lams.real, lams.imag, rep["drift"], rep["baseline"]])
    np.savetxt(p, rows, delimiter=",", header="lam_re,lam_im,drift,baseline", comments="", fmt="%.17g")
    tio.dump_json(rep, run.path("isospec.json"))
    run.summary = {"max_drift": rep["max_drift"], "max_baseline": rep["max_baseline"]}
    print(f"max drift {rep['max_drift']:.3e} (translation noise floor {rep['max_baseline']:.3e}) over {rep['entries']} entries")
    return EXIT_OK


def cmd_theta(run: Run) -> int:
    from .theta import PrymData, theta_eval

    raw = _load_json_arg(_need(run, "data"))
    if isinstance(raw, dict):
        data = PrymData(np.array(_cjson(raw["omega"])), tuple(np.array(_cjson(v)) for v in raw.get("V", [])),
                        tuple(np.array(_cjson(v)) for v in raw.get("Vt", [])),
                        tuple(_cjson(a) for a in raw.get("alpha", [])),
                        None if raw.get("e") is None else np.array(_cjson(raw["e"])))
    else:
        data = PrymData(np.array(_cjson(raw)))
    z = np.atleast_1d(np.array(_cjson(_load_json_arg(run["z"])))) if run["z"] else np.zeros(data.g0)
    val = theta_eval(data, z, run["theta_tol"])
    out = {"value": val.value, "radius": val.radius, "tail_bound": val.tail_bound, "z": z}
    tio.dump_json(out, run.path("theta.json"))
    run.summary = out
    print(f"theta = {val.value.real:.16g} {val.value.imag:+.16g}i  (R = {val.radius}, tail <= {val.tail_bound:.2e})")
    return EXIT_OK


def cmd_curve_check(run: Run) -> int:
    from .spectral import TrigonalCurve, involution_check

    if run["curve"]:
        raw = _load_json_arg(run["curve"])
        curve = TrigonalCurve(np.array(_cjson(raw["q"])), np.array(_cjson(raw["p"])))
    else:
        curve = TrigonalCurve.clifford()
    rep = involution_check(curve, samples=run["samples"], seed=run["seed"])
    tio.dump_json(rep, run.path("curve_check.json"))
    run.summary = {"sigma": rep["sigma"], "tau": rep["tau"]}
    ok = max(rep["sigma"], rep["tau"]) < 1e-10
    print(f"sigma residual {rep['sigma']:.2e}, tau residual {rep['tau']:.2e}: {'ok' if ok else 'FAILED'}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_selftest(run: Run) -> int:
    from .acceptance import run_all

    only = [int(x) for x in run["only"].split(",")] if run["only"] else None
    results = run_all(only, seed=run["seed"])
    rep = [{"number": r.number, "name": r.name, "passed": r.passed, "details": r.details}
           for r in results]
    tio.dump_json(rep, run.path("selftest.json"))
    n_ok = sum(r.passed for r in results)
    run.summary = {"passed": n_ok, "total": len(results)}
    print(f"{n_ok}/{len(results)} criteria passed")
    return EXIT_OK if n_ok == len(results) else EXIT_FAIL


COMMANDS = {
    "solve": cmd_solve, "continue": cmd_continue, "reconstruct": cmd_reconstruct,
    "verify": cmd_verify, "spectrum": cmd_spectrum, "deform": cmd_deform,
    "isospec": cmd_isospec, "theta": cmd_theta, "curve-check": cmd_curve_check,
    "selftest": cmd_selftest,
}

DEFAULTS = {
    "out": ".", "seed": 0, "log_level": "warning",
    "grid": "64x64:6.283185307179586x6.283185307179586", "constant": False, "guess": None,
    "tol": 1e-10, "max_iter": 30, "name": None,
    "solution": None, "direction": None, "direction_index": 2, "step": 0.05, "steps": 4,
    "steps_per_period": None, "method": "cf4", "surface": None, "threshold": 1e-6,
    "lambdas": "default", "bases": 8, "dt": None, "path": None,
    "data": None, "z": None, "theta_tol": 1e-14, "curve": None, "samples": 20, "only": None,
}


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file of settings (overridden by flags)")
    common.add_argument("--out", default=S, help="output directory (default: .)")
    common.add_argument("--seed", type=int, default=S, help="seed for randomized parts")
    common.add_argument("--log-level", default=S, choices=["debug", "info", "warning", "error"])

    p = _Parser(prog="tzlab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"tzlab {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, help_):
        return sub.add_parser(name, parents=[common], help=help_, description=help_)

    a = add("solve", "Newton solve for a doubly periodic solution")
    a.add_argument("--grid", default=S, help="NxxNy:LxxLy or NxxNy:{clifford,resonant,lattice5}")
    a.add_argument("--constant", action="store_true", default=S, help="write the constant solution v = 0")
    a.add_argument("--guess", default=S, help="constant initial value or a field container")
    a.add_argument("--tol", type=float, default=S)
    a.add_argument("--max-iter", type=int, default=S)
    a.add_argument("--name", default=S, help="output file name (default solution.bin)")

    a = add("continue", "continue a branch from a solution along a kernel direction")
    a.add_argument("--solution", default=S)
    a.add_argument("--direction", default=S, help="field container, or modes:p,q;... (cosine products)")
    a.add_argument("--direction-index", type=int, default=S, help="index into the kernel basis")
    a.add_argument("--step", type=float, default=S)
    a.add_argument("--steps", type=int, default=S)
    a.add_argument("--tol", type=float, default=S)

    a = add("reconstruct", "integrate the frame and write the immersion")
    a.add_argument("--solution", default=S)
    a.add_argument("--steps-per-period", type=int, default=S)
    a.add_argument("--method", choices=["cf4", "rk4"], default=S)
    a.add_argument("--name", default=S, help="output file name (default surface.bin)")

    a = add("verify", "check the immersion identities of a surface file")
    a.add_argument("--surface", default=S)
    a.add_argument("--threshold", type=float, default=S)

    a = add("spectrum", "holonomy characteristic polynomials over lambda samples")
    a.add_argument("--solution", default=S)
    a.add_argument("--lambdas", default=S, help="circle:R:N, default, or a comma list")
    a.add_argument("--bases", type=int, default=S)

    a = add("deform", "flow a solution along a kernel direction")
    a.add_argument("--solution", default=S)
    a.add_argument("--direction", default=S)
    a.add_argument("--direction-index", type=int, default=S)
    a.add_argument("--dt", type=float, default=S)
    a.add_argument("--steps", type=int, default=S)

    a = add("isospec", "drift of the spectral samples along a deformation path")
    a.add_argument("--path", default=S)
    a.add_argument("--lambdas", default=S)

    a = add("theta", "evaluate the theta series")
    a.add_argument("--data", default=S, help="JSON (file or inline): Omega, or {omega, V, Vt, alpha, e}")
    a.add_argument("--z", default=S, help="JSON vector, complex as [re, im]")
    a.add_argument("--tol", dest="theta_tol", type=float, default=S)

    a = add("curve-check", "involution residuals of a trigonal curve")
    a.add_argument("--curve", default=S, help="JSON {q: [...], p: [...]}; default Clifford curve")
    a.add_argument("--samples", type=int, default=S)

    a = add("selftest", "run the acceptance suite")
    a.add_argument("--only", default=S, help="comma list of criterion numbers")
    return p


def resolve(argv=None) -> tuple[str, dict]:
    """Parse argv and merge flags > config file > defaults."""
    args = vars(build_parser().parse_args(argv))
    command = args.pop("command")
    if not command:
        raise ConfigError("no command given; see tzlab --help")
    settings = dict(DEFAULTS)
    cfg_path = args.pop("config", None)
    if cfg_path:
        try:
            cfg = json.loads(Path(cfg_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {cfg_path}: {exc}") from None
        if not isinstance(cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = sorted(set(k.replace("-", "_") for k in cfg) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        settings.update({k.replace("-", "_"): v for k, v in cfg.items()})
    settings.update(args)
    for key in ("tol", "threshold", "theta_tol"):
        if settings[key] is not None and not settings[key] > 0:
            raise ConfigError(f"{key} must be positive")
    if settings["dt"] is not None and settings["dt"] <= 0:
        raise ConfigError("dt must be positive")
    return command, settings


def _fail(code: int, kind: str, message: str, command=None) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "command": command}) + "\n")
    print(f"error: {message}")
    return code


def main(argv=None) -> int:
    command = None
    try:
        command, settings = resolve(argv)
        logging.basicConfig(level=settings["log_level"].upper(), format="%(levelname)s %(name)s: %(message)s")
        run = Run(command, settings)
        code = COMMANDS[command](run)
        run.write_manifest()
        return code
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", str(exc), command)
    except (OSError, ValueError, RuntimeError) as exc:
        return _fail(EXIT_RUNTIME, type(exc).__name__, str(exc), command)


if __name__ == "__main__":
    sys.exit(main())

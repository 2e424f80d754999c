"""File formats: binary field containers, JSON sidecars, CSV export, path archives.

Container layout::

    uint64 LE   header length H
    H bytes     UTF-8 JSON header
    payload     little-endian float64, blocks back to back

Every block is stored with x varying fastest; complex data is interleaved
(re, im); 3x3 matrix entries are row-major within a node. The header carries
the sha256 of the payload, checked on read.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .fields import ComplexField, FieldError, ScalarField, TorusGrid
from .laxpair import Matrix3Field
from .tzitzeica import Solution

FORMAT = "tzlab-container"
VERSION = 1
KINDS = ("real", "complex", "complex3x3", "surface")


class ChecksumError(IOError):
    """Payload does not match the checksum recorded in its header."""


# ---------------------------------------------------------------------------
# JSON helpers

def jsonable(obj):
    """Convert numpy scalars/arrays and complex numbers ([re, im]) for json."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n")


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def as_complex(pair) -> complex:
    """Inverse of the [re, im] convention; plain numbers pass through."""
    if isinstance(pair, (list, tuple)):
        if len(pair) != 2:
            raise ValueError(f"complex numbers are [re, im] pairs, got {pair!r}")
        return complex(float(pair[0]), float(pair[1]))
    return complex(pair)


# ---------------------------------------------------------------------------
# container

def _to_disk(arr: np.ndarray) -> np.ndarray:
    # (Nx, Ny, ...) -> x fastest
    arr = np.asarray(arr)
    arr = np.swapaxes(arr, 0, 1)
    if np.iscomplexobj(arr):
        arr = np.stack([arr.real, arr.imag], axis=-1)
    return np.ascontiguousarray(arr, dtype="<f8").ravel()


def _from_disk(flat: np.ndarray, shape, complex_: bool) -> np.ndarray:
    disk_shape = [shape[1], shape[0], *shape[2:]]
    if complex_:
        pairs = flat.reshape(disk_shape + [2])
        arr = pairs[..., 0] + 1j * pairs[..., 1]
    else:
        arr = flat.reshape(disk_shape)
    return np.ascontiguousarray(np.swapaxes(arr, 0, 1))


def write_container(path, grid: TorusGrid, kind: str, blocks: dict, meta: dict | None = None) -> str:
    """Write named arrays (first two axes = grid axes); returns the payload sha256."""
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    parts, layout = [], []
    for name, arr in blocks.items():
        arr = np.asarray(arr)
        parts.append(_to_disk(arr))
        layout.append({"name": name, "shape": list(arr.shape), "complex": bool(np.iscomplexobj(arr))})
    payload = np.concatenate(parts).tobytes() if parts else b""
    digest = hashlib.sha256(payload).hexdigest()
    header = {"format": FORMAT, "version": VERSION, "Lx": grid.Lx, "Ly": grid.Ly,
              "Nx": grid.Nx, "Ny": grid.Ny, "kind": kind, "blocks": layout,
              "sha256": digest, "meta": jsonable(meta or {})}
    raw = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(raw)))
        fh.write(raw)
        fh.write(payload)
    return digest


def read_container(path) -> tuple[dict, TorusGrid, dict]:
    """Return ``(header, grid, blocks)``; raises ChecksumError on a corrupted payload."""
    data = Path(path).read_bytes()
    if len(data) < 8:
        raise FieldError(f"{path}: truncated container")
    (hlen,) = struct.unpack("<Q", data[:8])
    try:
        header = json.loads(data[8:8 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FieldError(f"{path}: unreadable header ({exc})") from None
    if header.get("format") != FORMAT:
        raise FieldError(f"{path}: not a {FORMAT} file")
    payload = data[8 + hlen:]
    if hashlib.sha256(payload).hexdigest() != header["sha256"]:
        raise ChecksumError(f"{path}: payload checksum mismatch")
    grid = TorusGrid(header["Lx"], header["Ly"], header["Nx"], header["Ny"])
    flat = np.frombuffer(payload, dtype="<f8")
    blocks, pos = {}, 0
    for b in header["blocks"]:
        n = int(np.prod(b["shape"])) * (2 if b["complex"] else 1)
        blocks[b["name"]] = _from_disk(flat[pos:pos + n], b["shape"], b["complex"])
        pos += n
    if pos != flat.size:
        raise FieldError(f"{path}: payload size does not match header")
    return header, grid, blocks


# ---------------------------------------------------------------------------
# fields and solutions

def write_field(path, field: ScalarField | ComplexField, meta: dict | None = None) -> str:
    kind = "real" if isinstance(field, ScalarField) else "complex"
    return write_container(path, field.grid, kind, {"values": field.values}, meta)


def read_field(path) -> ScalarField | ComplexField:
    header, grid, blocks = read_container(path)
    if header["kind"] == "real":
        return ScalarField(grid, blocks["values"])
    if header["kind"] == "complex":
        return ComplexField(grid, blocks["values"])
    raise FieldError(f"{path}: kind {header['kind']!r} is not a scalar field")


def write_matrix_field(path, M: Matrix3Field, meta: dict | None = None) -> str:
    return write_container(path, M.grid, "complex3x3", {"values": M.values}, meta)


def read_matrix_field(path) -> Matrix3Field:
    header, grid, blocks = read_container(path)
    if header["kind"] != "complex3x3":
        raise FieldError(f"{path}: kind {header['kind']!r} is not a matrix field")
    return Matrix3Field(grid, blocks["values"])


def sidecar_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".json")


def write_solution(path, sol: Solution) -> str:
    """Container with v plus the sidecar {residual_norm, lineage, stats}."""
    digest = write_field(path, sol.v, {"lineage": sol.lineage})
    dump_json({"residual_norm": sol.residual_norm, "lineage": sol.lineage, "stats": sol.stats},
              sidecar_path(path))
    return digest


def read_solution(path) -> Solution:
    """Load and re-certify: the residual is recomputed from the stored field."""
    v = read_field(path)
    if not isinstance(v, ScalarField):
        raise FieldError(f"{path}: a solution must be a real field")
    side = sidecar_path(path)
    info = json.loads(side.read_text()) if side.exists() else {}
    lineage = info.get("lineage", "newton")
    return Solution.certify(v, lineage, **info.get("stats", {}))


def export_csv(path, field: ScalarField | ComplexField) -> None:
    """Rows x, y, value (or x, y, re, im), x varying fastest."""
    g = field.grid
    X, Y = g.mesh()
    cols = [X, Y]
    if isinstance(field, ScalarField):
        head = "x,y,value"
        cols.append(field.values)
    else:
        head = "x,y,re,im"
        cols += [field.values.real, field.values.imag]
    table = np.column_stack([c.T.ravel() for c in cols])
    np.savetxt(path, table, delimiter=",", header=head, comments="", fmt="%.17g")


# ---------------------------------------------------------------------------
# surfaces

def write_surface(path, surface, report: dict | None = None) -> str:
    """Three complex components on the closed cell plus v; sidecar holds R0 and reports."""
    from .frame import closure_defect

    blocks = {f"r{k + 1}": surface.r_closed[..., k] for k in range(3)}
    blocks["v"] = surface.v.v.values
    meta = {"R0": surface.R0, "info": surface.info, "lineage": surface.v.lineage}
    digest = write_container(path, surface.grid, "surface", blocks, meta)
    strict, proj = closure_defect(surface)
    side = {"closure": {"strict": strict, "projective": proj}, "R0": surface.R0,
            "info": surface.info}
    if report is not None:
        side["verification"] = report
    dump_json(side, sidecar_path(path))
    return digest


def read_surface(path):
    from .frame import SurfaceData

    header, grid, blocks = read_container(path)
    if header["kind"] != "surface":
        raise FieldError(f"{path}: kind {header['kind']!r} is not a surface")
    r = np.stack([blocks[f"r{k + 1}"] for k in range(3)], axis=-1)
    meta = header["meta"]
    R0 = np.array([[as_complex(x) for x in row] for row in meta["R0"]])
    sol = Solution.certify(ScalarField(grid, blocks["v"]), meta.get("lineage", "newton"))
    return SurfaceData(grid, r, sol, R0, None, dict(meta.get("info", {})))


# ---------------------------------------------------------------------------
# deformation path archives

def write_path(directory, path, report: dict | None = None) -> Path:
    """Directory of solution containers plus manifest.json (times, checksums, drifts)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    entries = []
    for k, (sol, t) in enumerate(zip(path.solutions, path.times)):
        name = f"step_{k:04d}.bin"
        write_solution(d / name, sol)
        entries.append({"file": name, "time": t, "sha256": sha256_file(d / name),
                        "residual_norm": sol.residual_norm})
    manifest = {"kind": "deformation-path", "Lx": path.grid.Lx, "Ly": path.grid.Ly,
                "Nx": path.grid.Nx, "Ny": path.grid.Ny, "entries": entries,
                "flags": list(path.flags), "failed": path.failed}
    if report is not None:
        manifest["isospectrality"] = report
    dump_json(manifest, d / "manifest.json")
    return d / "manifest.json"


def read_path(directory):
    from .nvflow import DeformationPath

    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text())
    sols, times = [], []
    for e in manifest["entries"]:
        if sha256_file(d / e["file"]) != e["sha256"]:
            raise ChecksumError(f"{d / e['file']}: file checksum does not match the manifest")
        sols.append(read_solution(d / e["file"]))
        times.append(float(e["time"]))
    zero = [ScalarField.zeros(sols[0].grid)] * len(sols)
    return DeformationPath(sols, times, zero, list(manifest.get("flags", [])),
                           bool(manifest.get("failed", False)))

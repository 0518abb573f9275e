"""File formats: dataset container, model document, curve CSV, field VTK.

Every writer stamps the config hash and seed it is given, and writes nothing
time-dependent, so identical inputs give byte-identical files.
"""

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .constitutive import FiberProperties, MatrixProperties
from .errors import ContractError
from .micromodel import SnapshotDataset, properties_hash
from .pathgen import LoadPath
from .prnn import PrnnLayout, PrnnParams

DATASET_MAGIC = b"PRNNDS01"
MODEL_FORMAT = "feprnn-model"
MODEL_VERSION = 1
CURVE_COLUMNS = ("time_s", "eps_yy_eng", "sig_yy_eng", "sig_xy_eng")


class FormatError(ContractError):
    """Malformed or version-mismatched file."""


def config_hash(obj):
    """sha256 of a canonical JSON rendering (dicts, lists, numbers, strings)."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------- dataset


def save_dataset(path, ds, config_sha=""):
    """Single binary file: magic, uint32 header length, JSON header, float64 LE arrays.

    Per sample the payload holds dt (T,), U (T+1, 9) row-major and stress (T+1, 6).
    """
    steps = [p.n_steps for p in ds.paths]
    header = {
        "count": len(ds.paths),
        "steps": steps,
        "level": ds.level,
        "properties_hash": ds.properties_hash,
        "seed": ds.seed,
        "skipped": ds.skipped,
        "config_sha256": config_sha,
        "layout": "per sample: dt[T], U[T+1,3,3], stress[T+1,6]; float64 little-endian",
    }
    head = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<I", len(head)))
        fh.write(head)
        for p, s in zip(ds.paths, ds.stress):
            for arr in (p.dt, p.U, s):
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_dataset(path):
    raw = Path(path).read_bytes()
    if raw[:8] != DATASET_MAGIC:
        raise FormatError(f"{path}: not a dataset file")
    (n,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12 : 12 + n])
    data = np.frombuffer(raw[12 + n :], dtype="<f8")
    need = sum(T + 9 * (T + 1) + 6 * (T + 1) for T in header["steps"])
    if data.size != need:
        raise FormatError(f"{path}: payload has {data.size} values, header implies {need}")
    paths, stress, k = [], [], 0
    for T in header["steps"]:
        dt = data[k : k + T].copy()
        k += T
        U = data[k : k + 9 * (T + 1)].reshape(T + 1, 3, 3).copy()
        k += 9 * (T + 1)
        s = data[k : k + 6 * (T + 1)].reshape(T + 1, 6).copy()
        k += 6 * (T + 1)
        paths.append(LoadPath(U, dt))
        stress.append(s)
    ds = SnapshotDataset(paths, stress, header["level"], header["properties_hash"], header["seed"], header["skipped"])
    return ds, header


# ---------------------------------------------------------------- model


def save_model(path, params, layout, meta=None):
    doc = {
        "format": MODEL_FORMAT,
        "format_version": MODEL_VERSION,
        "n_points": layout.n_points,
        "n_fiber": layout.n_fiber,
        "fiber": layout.fiber_props.to_dict(),
        "matrix": layout.matrix_props.to_dict(),
        "properties_hash": properties_hash(layout.fiber_props, layout.matrix_props),
        "W": params.W.tolist(),
        "d": params.d.tolist(),
        "meta": meta or {},
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_model(path):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    if doc.get("format") != MODEL_FORMAT:
        raise FormatError(f"{path}: not a model file")
    if doc.get("format_version") != MODEL_VERSION:
        raise FormatError(f"{path}: model format version {doc.get('format_version')} != {MODEL_VERSION}")
    fp = FiberProperties(**doc["fiber"])
    m = dict(doc["matrix"])
    mp = MatrixProperties(**{k: tuple(v) if isinstance(v, list) else v for k, v in m.items()})
    layout = PrnnLayout(doc["n_points"], doc["n_fiber"], fp, mp)
    params = PrnnParams(np.array(doc["W"]), np.array(doc["d"]))
    if params.n_points != layout.n_points:
        raise FormatError(f"{path}: parameter rows do not match n_points")
    return params, layout, doc.get("meta", {})


# ---------------------------------------------------------------- curves and fields


def write_curve(path, curve, config_sha="", seed=None):
    """``curve`` maps the four column names to equal-length arrays."""
    cols = [np.asarray(curve[c], dtype=float) for c in CURVE_COLUMNS]
    with open(path, "w") as fh:
        fh.write(f"# config_sha256={config_sha}, seed={seed}\n")
        fh.write(", ".join(CURVE_COLUMNS) + "\n")
        for row in zip(*cols):
            fh.write(", ".join(repr(float(v)) for v in row) + "\n")


def read_curve(path):
    lines = Path(path).read_text().splitlines()
    body = [ln for ln in lines if not ln.startswith("#")]
    names = [c.strip() for c in body[0].split(",")]
    if tuple(names) != CURVE_COLUMNS:
        raise FormatError(f"{path}: unexpected header {names}")
    data = np.array([[float(v) for v in ln.split(",")] for ln in body[1:]]).reshape(-1, len(names))
    return {n: data[:, i] for i, n in enumerate(names)}


VTK_WEDGE = 13


def write_vtk(path, mesh, frame, config_sha=""):
    """Legacy ASCII unstructured grid with per-cell field data."""
    lines = [
        "# vtk DataFile Version 3.0",
        f"coupon t={frame.time!r} config_sha256={config_sha}",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_nodes} double",
    ]
    lines += [" ".join(repr(float(c)) for c in X) for X in mesh.nodes]
    ne = mesh.n_elements
    lines.append(f"CELLS {ne} {7 * ne}")
    lines += ["6 " + " ".join(str(int(i)) for i in el) for el in mesh.elements]
    lines.append(f"CELL_TYPES {ne}")
    lines += [str(VTK_WEDGE)] * ne
    lines.append(f"CELL_DATA {ne}")
    for name, arr in (
        ("eps_yy_eng", frame.eps_yy),
        ("sig_yy_eng", frame.sig_yy),
        ("sig_xy_eng", frame.sig_xy),
        ("phi_deg", frame.phi),
    ):
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines += [repr(float(v)) for v in arr]
    Path(path).write_text("\n".join(lines) + "\n")


def write_table(path, header, rows, config_sha="", seed=None):
    """Plain CSV table with the same provenance comment as curves."""
    with open(path, "w") as fh:
        fh.write(f"# config_sha256={config_sha}, seed={seed}\n")
        fh.write(", ".join(header) + "\n")
        for r in rows:
            fh.write(", ".join(_cell(v) for v in r) + "\n")


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.generic):
        return str(v.item())
    return str(v)

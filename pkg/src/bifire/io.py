"""Snapshot persistence.

Binary layout (all little-endian)::

    b"PYRO"                     magic
    u32 version, dim, nx, ny, n_fields, n_params
    n_params x (u32 name length, utf-8 name, f64 value)
    n_fields x nx*ny f64        T, S_e, S_x, row-major (y outer, x inner)

A JSON sidecar (same stem, ``.json``) carries the grid, parameters, fidelity tag
and provenance.
"""
from __future__ import annotations

import csv
import json
import os
import struct
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .solver import Grid, Snapshot

MAGIC = b"PYRO"
VERSION = 1
FIELD_NAMES = ("T", "S_e", "S_x")


def _sidecar(path):
    return Path(path).with_suffix(".json")


def write_snapshot(snap, path, provenance=None):
    """Write ``snap`` atomically to ``path`` plus its JSON sidecar."""
    path = Path(path)
    g = snap.grid
    names = list(snap.z)
    parts = [MAGIC, struct.pack("<6I", VERSION, g.dim, g.nx, g.ny, 3, len(names))]
    for name in names:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw + struct.pack("<d", float(snap.z[name])))
    for f in snap.fields:
        parts.append(np.ascontiguousarray(f, dtype="<f8").tobytes())
    meta = {
        "grid": g.to_dict(),
        "params": {k: float(v) for k, v in snap.z.items()},
        "fidelity": snap.fidelity,
        "fields": list(FIELD_NAMES),
        "provenance": provenance or {},
    }
    tmp = path.with_suffix(".pyro.tmp")
    tmp.write_bytes(b"".join(parts))
    side_tmp = path.with_suffix(".json.tmp")
    side_tmp.write_text(json.dumps(meta, indent=1, sort_keys=True))
    os.replace(side_tmp, _sidecar(path))
    os.replace(tmp, path)


def read_header(path):
    """Return ``(version, dim, nx, ny, n_fields, params, offset)``."""
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ConfigError(f"{path}: not a snapshot file (bad magic)")
    version, dim, nx, ny, n_fields, n_params = struct.unpack_from("<6I", data, 4)
    if version != VERSION:
        raise ConfigError(f"{path}: unsupported snapshot version {version}")
    off = 4 + 24
    params = {}
    for _ in range(n_params):
        (n,) = struct.unpack_from("<I", data, off)
        off += 4
        name = data[off:off + n].decode("utf-8")
        off += n
        (val,) = struct.unpack_from("<d", data, off)
        off += 8
        params[name] = val
    return version, dim, nx, ny, n_fields, params, off


def read_snapshot(path):
    path = Path(path)
    try:
        meta = json.loads(_sidecar(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"{path}: missing sidecar manifest {_sidecar(path)}") from None
    _, dim, nx, ny, n_fields, params, off = read_header(path)
    grid = Grid(**meta["grid"])
    if (grid.dim, grid.nx, grid.ny) != (dim, nx, ny):
        raise ConfigError(f"{path}: header and sidecar grids disagree")
    n = nx * ny
    data = np.frombuffer(path.read_bytes(), dtype="<f8", count=n_fields * n, offset=off)
    fields = data.reshape(n_fields, ny, nx).astype(np.float64)
    return Snapshot(grid, fields[0], fields[1], fields[2], params, meta.get("fidelity", "LF"))


def read_provenance(path):
    try:
        return json.loads(_sidecar(path).read_text()).get("provenance", {})
    except (OSError, json.JSONDecodeError):
        return {}


def is_valid_snapshot(path):
    """Cheap integrity check used when resuming ensembles."""
    path = Path(path)
    if not path.exists() or not _sidecar(path).exists():
        return False
    try:
        _, _, nx, ny, n_fields, _, off = read_header(path)
    except (ConfigError, struct.error):
        return False
    return path.stat().st_size == off + 8 * n_fields * nx * ny


def export_csv(snap, path):
    """Cell-centre table ``x[,y],T,S_e,S_x`` for plotting."""
    g = snap.grid
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if g.dim == 1:
            w.writerow(["x", *FIELD_NAMES])
            for i, x in enumerate(g.x):
                w.writerow([f"{x:.17g}"] + [f"{f[0, i]:.17g}" for f in snap.fields])
        else:
            w.writerow(["x", "y", *FIELD_NAMES])
            for j, y in enumerate(g.y):
                for i, x in enumerate(g.x):
                    w.writerow([f"{x:.17g}", f"{y:.17g}"] + [f"{f[j, i]:.17g}" for f in snap.fields])

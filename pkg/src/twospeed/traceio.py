"""Binary trace files with a JSON provenance sidecar.

Layout (little-endian)::

    offset  size  field
    0       8     magic  b"MSWL1\\0\\0\\0"
    8       4     version (uint32)
    12      4     parity code (int32: 0 none, 1 odd, 2 even)
    16      8     nx (uint64)
    24      8     nt_stored (uint64)
    32      8     stride (uint64)
    40      8     dx (float64)
    48      8     dt (float64, solver step, not the stored spacing)
    56      8     t_start (float64)
    64      8     c (float64, NaN for derived fields)
    72      ...   nt_stored * nx float64 samples, t-major

The sidecar ``<path>.json`` carries the grid extent, provenance (data family,
epsilon, seed, scheme, CFL) and, for derived traces, the operator word.
"""

from __future__ import annotations

import json
import math
import struct
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .geometry import Grid
from .waveop import PARITY_CODES, SpaceTimeTrace

MAGIC = b"MSWL1\0\0\0"
VERSION = 1
HEADER = struct.Struct("<8sIiQQQdddd")
PARITY_NAMES = {v: k for k, v in PARITY_CODES.items()}


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_trace(path, trace: SpaceTimeTrace, provenance: dict | None = None) -> Path:
    path = Path(path)
    g = trace.grid
    c = math.nan if trace.c is None else float(trace.c)
    header = HEADER.pack(MAGIC, VERSION, PARITY_CODES[trace.parity], g.nx, trace.n_levels,
                         trace.store_stride, g.dx, g.dt, g.t_start, c)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(trace.samples, dtype="<f8").tobytes())
    meta = {
        "grid": g.signature(),
        "stagger": g.stagger,
        "blowup_time": trace.blowup_time,
        "provenance": {**trace.provenance, **(provenance or {})},
    }
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True, default=str))
    return path


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        raw = fh.read(HEADER.size)
    if len(raw) < HEADER.size:
        raise ValidationError("truncated trace header")
    magic, version, parity, nx, nt, stride, dx, dt, t0, c = HEADER.unpack(raw)
    if magic != MAGIC:
        raise ValidationError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ValidationError(f"unsupported trace version {version}")
    return {"parity": PARITY_NAMES[parity], "nx": nx, "nt_stored": nt, "stride": stride,
            "dx": dx, "dt": dt, "t_start": t0, "c": None if math.isnan(c) else c}


def read_trace(path) -> SpaceTimeTrace:
    head = read_header(path)
    meta = json.loads(sidecar_path(path).read_text())
    gs = meta["grid"]
    grid = Grid(x_max=gs["x_max"], nx=gs["nx"], t_end=gs["t_end"], nsteps=gs["nsteps"],
                t_start=gs["t_start"], stagger=meta.get("stagger", True))
    count = head["nx"] * head["nt_stored"]
    data = np.fromfile(path, dtype="<f8", count=count, offset=HEADER.size)
    if data.size != count:
        raise ValidationError("trace file shorter than its header claims")
    return SpaceTimeTrace(grid, data.reshape(head["nt_stored"], head["nx"]), head["c"],
                          head["stride"], head["parity"], blowup_time=meta.get("blowup_time"),
                          provenance=meta.get("provenance", {}))

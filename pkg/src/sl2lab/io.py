"""File formats: binary field snapshots, CSV tables, JSON reports and SVG.

Binary layout (all little-endian)::

    magic      4s   b"SL2F"
    version    u32  format version (1)
    dim        u32
    n          u32
    L          f64
    degree     u32
    kind       u32  0 real, 1 su2, 2 su2c
    nfields    u32  1 for a single form, 2 for a gauge pair (a, alpha)
    r          f64  gauge-pair scale (nan for single forms)
    tag        32s  artifact version and config hash, NUL padded
    payload         row-major f64 of each field's component array in turn;
                    su2c values are stored as interleaved (re, im) pairs

CSV files start with '#'-prefixed header lines and then one comma-separated
row per record; JSON is UTF-8 with sorted keys.
"""

from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import math
import struct
from pathlib import Path

import numpy as np

from . import __version__
from .gauge import GaugePair
from .grid import DiscreteForm, Grid

MAGIC = b"SL2F"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIIdIIId32s")
_KINDS = ("real", "su2", "su2c")


class FormatError(ValueError):
    pass


def config_hash(cfg: dict) -> str:
    """First 16 hex digits of the SHA-256 of the canonical JSON of ``cfg``."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=_jsonable).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def header_line(chash: str) -> str:
    return f"sl2lab {__version__} config_hash={chash}"


# ---------------------------------------------------------------------------
# binary snapshots
# ---------------------------------------------------------------------------

def _payload(w: DiscreteForm) -> bytes:
    data = np.asarray(w.data)
    if w.kind == "su2c":
        data = np.stack([data.real, data.imag], axis=-1)
    return np.ascontiguousarray(data, dtype="<f8").tobytes()


def write_field(path, field, tag: str = "") -> None:
    """Write a DiscreteForm or a GaugePair."""
    if isinstance(field, GaugePair):
        forms, r = [field.a, field.alpha], float(field.r)
    elif isinstance(field, DiscreteForm):
        forms, r = [field], math.nan
    else:
        raise TypeError("write_field expects a DiscreteForm or a GaugePair")
    w0 = forms[0]
    g = w0.grid
    head = _HEADER.pack(MAGIC, FORMAT_VERSION, g.dim, g.n, float(g.L), w0.degree, _KINDS.index(w0.kind),
                        len(forms), r, tag.encode()[:32])
    with open(path, "wb") as fh:
        fh.write(head)
        for w in forms:
            fh.write(_payload(w))


def read_field(path):
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError("file shorter than the header")
    magic, ver, dim, n, L, degree, kind, nfields, r, tag = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError("bad magic")
    if ver != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {ver}")
    grid = Grid(dim, n, L)
    kname = _KINDS[kind]
    shape = DiscreteForm.zeros(grid, degree, kname).data.shape
    per = int(np.prod(shape)) * (2 if kname == "su2c" else 1)
    expected = _HEADER.size + 8 * per * nfields
    if len(raw) != expected:
        raise FormatError(f"payload size {len(raw)} does not match header ({expected})")
    forms = []
    for i in range(nfields):
        arr = np.frombuffer(raw, dtype="<f8", count=per, offset=_HEADER.size + 8 * per * i)
        if kname == "su2c":
            arr = arr.reshape(shape + (2,))
            arr = arr[..., 0] + 1j * arr[..., 1]
        else:
            arr = arr.reshape(shape)
        forms.append(DiscreteForm(grid, degree, np.array(arr), kname))
    if nfields == 2:
        return GaugePair(forms[0], forms[1], r)
    return forms[0]


def field_tag(path) -> str:
    raw = Path(path).read_bytes()[: _HEADER.size]
    return _HEADER.unpack(raw)[-1].rstrip(b"\0").decode()


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return repr(float(x))


def csv_text(columns, rows, header_lines=()) -> str:
    buf = _io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def write_csv(path, columns, rows, header_lines=()) -> None:
    Path(path).write_text(csv_text(columns, rows, header_lines), encoding="utf-8")


def read_csv(path):
    """(header lines without '# ', column names, float array of rows)."""
    header, body = [], []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            header.append(line[1:].strip())
        elif line.strip():
            body.append(line)
    if not body:
        raise FormatError("CSV without a column row")
    reader = csv.reader(body)
    columns = next(reader)
    rows = [[float(x) for x in r] for r in reader]
    return header, columns, np.array(rows, dtype=float).reshape(-1, len(columns))


def field_csv_rows(w: DiscreteForm):
    """(columns, rows) listing every site: indices then component values."""
    g = w.grid
    comp = np.moveaxis(np.asarray(w.data), 0, g.dim)  # sites first
    flat = comp.reshape(g.shape + (-1,))
    idx_cols = [f"i{a}" for a in range(g.dim)]
    ncols = flat.shape[-1]
    if w.kind == "su2c":
        val_cols = [f"c{j}_{part}" for j in range(ncols) for part in ("re", "im")]
    else:
        val_cols = [f"c{j}" for j in range(ncols)]
    rows = []
    for idx in np.ndindex(*g.shape):
        vals = flat[idx]
        if w.kind == "su2c":
            vals = [v for z in vals for v in (z.real, z.imag)]
        rows.append(list(idx) + [float(v) for v in vals])
    return idx_cols + val_cols, rows


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------

def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, Path):
        return str(x)
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def _clean(x):
    """Replace non-finite floats by None so the output stays strict JSON."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (float, np.floating)):
        return float(x) if math.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def json_text(obj, chash: str | None = None) -> str:
    doc = _clean(obj)
    if chash is not None:
        doc = {"header": {"artifact": "sl2lab", "version": __version__, "config_hash": chash}, **doc}
    return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False, default=_jsonable) + "\n"


def write_json(path, obj, chash: str | None = None) -> None:
    Path(path).write_text(json_text(obj, chash), encoding="utf-8")

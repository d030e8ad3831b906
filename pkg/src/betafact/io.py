"""Matrix files, run-config files and CSV helpers.

BFMAT1 layout (all integers little-endian)::

    offset  size  field
    0       6     magic b"BFMAT1"
    6       1     layout tag, b"F" (column-major) or b"C" (row-major)
    7       1     reserved, zero
    8       8     rows   (uint64)
    16      8     cols   (uint64)
    24      8*r*c payload, float64 little-endian in the tagged order

Writers always emit column-major. Readers sniff the magic and fall back to
plain comma-separated text for hand-made fixtures.
"""

import csv
import json
import math
import struct
from pathlib import Path

import numpy as np

MAGIC = b"BFMAT1"
_HEADER = struct.Struct("<6scxQQ")


class FormatError(ValueError):
    pass


def write_matrix(path, array):
    arr = np.asarray(array, dtype="<f8")
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {arr.shape}")
    rows, cols = arr.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, b"F", rows, cols))
        fh.write(arr.tobytes(order="F"))


def read_matrix(path):
    """Read a BFMAT1 file, or a comma-separated text matrix."""
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        return _read_csv_matrix(path)
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    _, layout, rows, cols = _HEADER.unpack_from(data)
    if layout not in (b"F", b"C"):
        raise FormatError(f"{path}: unknown layout tag {layout!r}")
    payload = data[_HEADER.size:]
    if len(payload) != 8 * rows * cols:
        raise FormatError(f"{path}: expected {rows * cols} values, found {len(payload) / 8:g}")
    flat = np.frombuffer(payload, dtype="<f8")
    return flat.reshape((rows, cols), order=layout.decode()).astype(np.float64)


def _read_csv_matrix(path):
    try:
        arr = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2, comments="#")
    except ValueError as exc:
        raise FormatError(f"{path}: not a BFMAT1 file and not numeric CSV ({exc})") from exc
    if arr.size == 0:
        raise FormatError(f"{path}: empty matrix")
    return arr


def format_float(x):
    """Shortest repr that round-trips; infinities as ``inf`` / ``-inf``."""
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_float(v) if isinstance(v, float) else v for v in row])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_manifest(path, manifest):
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, allow_nan=False, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def read_manifest(path):
    with open(path) as fh:
        return json.load(fh)


def read_run_config(path):
    """Parse a ``key = value`` run-config file.

    Blank lines and lines starting with ``#`` are skipped. Keys use the CLI
    flag spelling with underscores or dashes (``max_iter`` == ``max-iter``).
    Returns an ordered dict of raw string values.
    """
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("_", "-")
        if not key:
            raise FormatError(f"{path}:{lineno}: empty key")
        if key in out:
            raise FormatError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out

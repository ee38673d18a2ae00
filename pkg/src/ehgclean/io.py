"""Record and result file formats.

CSV records: first line ``fs=<Hz>``, then one row per sample with one
comma-separated column per channel.  Binary records: raw little-endian
float64 in sample-major order (sample 0 of every channel first) with a JSON
sidecar ``<stem>.json`` holding fs, channels, samples and labels.
Floats are written with 17 significant digits so files round-trip exactly.
"""
import json
import os

import numpy as np

from .errors import ValidationError
from .synth import MultichannelRecord


def _fmt(x):
    return f"{x:.17g}"


def record_format(path, fmt=None):
    if fmt:
        if fmt not in ("csv", "binary"):
            raise ValidationError(f"unknown record format {fmt!r}")
        return fmt
    return "csv" if str(path).lower().endswith(".csv") else "binary"


def sidecar_path(path):
    return os.path.splitext(str(path))[0] + ".json"


def save_record(record, path, fmt=None):
    fmt = record_format(path, fmt)
    if fmt == "csv":
        with open(path, "w") as fh:
            fh.write(f"fs={_fmt(record.fs)}\n")
            for row in record.data.T:
                fh.write(",".join(_fmt(v) for v in row))
                fh.write("\n")
    else:
        record.data.T.astype("<f8").tofile(path)
        meta = {"fs": record.fs, "channels": record.channels, "samples": record.n_samples,
                "dtype": "<f8", "layout": "sample-major",
                "channel_labels": list(record.channel_labels)}
        with open(sidecar_path(path), "w") as fh:
            json.dump(meta, fh, indent=2)
            fh.write("\n")


def _parse_fs(text, where):
    try:
        fs = float(text)
    except ValueError:
        raise ValidationError(f"{where}: cannot parse sampling rate {text!r}") from None
    if not (np.isfinite(fs) and fs > 0):
        raise ValidationError(f"{where}: sampling rate must be positive and finite, got {fs}")
    return fs


def _scan_csv(lines):
    """Slow path reporting the first malformed cell by data row (1-based) and column."""
    width = None
    rows = []
    for r, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        cells = line.strip().split(",")
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise ValidationError(
                f"row {r} (line {r + 1}): expected {width} columns, found {len(cells)}")
        vals = []
        for c, cell in enumerate(cells, start=1):
            try:
                v = float(cell)
            except ValueError:
                raise ValidationError(
                    f"row {r} (line {r + 1}), column {c}: cannot parse {cell!r}") from None
            if not np.isfinite(v):
                raise ValidationError(f"row {r} (line {r + 1}), column {c}: non-finite value {cell!r}")
            vals.append(v)
        rows.append(vals)
    return np.array(rows, dtype=float)


def load_record(path, fmt=None):
    """Read a CSV or binary record, rejecting ragged rows and non-finite values."""
    fmt = record_format(path, fmt)
    if fmt == "csv":
        with open(path) as fh:
            header = fh.readline().strip()
            if not header.startswith("fs="):
                raise ValidationError(f"{path}: line 1 must be 'fs=<Hz>', got {header!r}")
            fs = _parse_fs(header[3:], f"{path}: line 1")
            lines = fh.read().splitlines()
        if not any(line.strip() for line in lines):
            raise ValidationError(f"{path}: no samples")
        try:
            data = np.loadtxt(lines, delimiter=",", ndmin=2, dtype=float)
            if not np.all(np.isfinite(data)):
                raise ValueError
        except ValueError:
            try:
                data = _scan_csv(lines)
            except ValidationError as e:
                raise ValidationError(f"{path}: {e}") from None
        if data.size == 0:
            raise ValidationError(f"{path}: no samples")
        return MultichannelRecord(fs=fs, data=data.T.copy())

    side = sidecar_path(path)
    try:
        with open(side) as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"{path}: missing sidecar {side}") from None
    for key in ("fs", "channels", "samples"):
        if key not in meta:
            raise ValidationError(f"{side}: missing key {key!r}")
    fs = _parse_fs(meta["fs"], side)
    C, K = int(meta["channels"]), int(meta["samples"])
    raw = np.fromfile(path, dtype="<f8")
    if raw.size != C * K:
        raise ValidationError(f"{path}: expected {C * K} values ({C} x {K}), found {raw.size}")
    data = raw.reshape(K, C)
    bad = np.argwhere(~np.isfinite(data))
    if bad.size:
        r, c = bad[0]
        raise ValidationError(f"{path}: row {r + 1}, column {c + 1}: non-finite value")
    labels = meta.get("channel_labels")
    return MultichannelRecord(fs=fs, data=data.T.astype(float),
                              channel_labels=tuple(labels) if labels else None)


def _plain(o):
    # numpy scalars and arrays from the numeric code
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"{type(o).__name__} is not JSON serializable")


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, allow_nan=True, default=_plain)
        fh.write("\n")


def write_jsonl(path, rows):
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row, default=_plain))
            fh.write("\n")


def read_jsonl(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else _fmt(v) for v in row))
            fh.write("\n")

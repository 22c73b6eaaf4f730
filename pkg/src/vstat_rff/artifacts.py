"""Deterministic CSV and JSON artifact writers."""

from __future__ import annotations

import csv
import json
import math
import os

import numpy as np

from . import __version__


def fmt(value):
    """Text form shared by CSV cells and printed summaries."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def header_lines(config_sha=None, seed=None, extra=()):
    lines = [f"vstat-rff {__version__}"]
    if config_sha is not None:
        lines.append(f"config-sha256 {config_sha}")
    if seed is not None:
        lines.append(f"seed {seed}")
    lines.extend(extra)
    return lines


def write_csv(path, columns, rows, header=()):
    """Write ``rows`` under ``#``-prefixed header lines with LF endings."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, doc, header=()):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    body = dict(_clean(doc))
    if header:
        body = {"_header": list(header), **body}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(body, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path

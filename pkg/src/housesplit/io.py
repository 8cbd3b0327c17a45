"""File formats shared by the command line: features, reports, CSV tables.

Every JSON artifact carries ``schema_version``; floats written to reports
and tables use ``%.10g`` so reruns are byte-identical.
"""
from __future__ import annotations

import csv
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .data_model import MovieFeatures
from .errors import InputError, MalformedRowError, SchemaError

SCHEMA_VERSION = 1
FEATURES_CSV = "features.csv"
FEATURES_JSON = "features.json"


def fmt(x) -> str:
    return "%.10g" % float(x)


def _atomic_write(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return fmt(v)
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows):
    """Write rows atomically; float cells are formatted with :func:`fmt`."""
    lines = [",".join(header)]
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} cells, header {len(header)}")
        lines.append(",".join(_cell(v) for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def read_csv(path, header=None) -> list:
    """Rows of a CSV as dicts; checks the header when given."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: no such file")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if header is not None and tuple(reader.fieldnames or ()) != tuple(header):
            raise MalformedRowError(path, 1, f"expected header {','.join(header)}")
        return list(reader)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return float(fmt(x)) if np.isfinite(x) else None
    return obj


def write_json(path, obj: dict):
    body = {"schema_version": SCHEMA_VERSION, **_jsonable(obj)}
    _atomic_write(path, json.dumps(body, sort_keys=True, indent=1) + "\n")


def read_json(path, require_version: bool = True) -> dict:
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: no such file")
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(obj, dict):
        raise SchemaError(f"{path}: expected a JSON object")
    if "schema_version" not in obj:
        if require_version:
            raise SchemaError(f"{path}: missing schema_version")
        return obj
    if obj["schema_version"] != SCHEMA_VERSION:
        raise SchemaError(
            f"{path}: schema_version {obj['schema_version']!r}, this build reads {SCHEMA_VERSION}"
        )
    return obj


def save_features(out_dir, feats: MovieFeatures):
    """``features.csv`` (``movie,f0..f{d-1}``, exact round-trip floats) plus sidecar."""
    out_dir = Path(out_dir)
    header = ["movie"] + [f"f{k}" for k in range(feats.d)]
    lines = [",".join(header)]
    for name, row in zip(feats.movies, feats.vectors):
        lines.append(",".join([name] + [repr(float(x)) for x in row]))
    _atomic_write(out_dir / FEATURES_CSV, "\n".join(lines) + "\n")
    meta = dict(feats.meta)
    meta.update(d=feats.d, sigma2=feats.sigma2)
    meta["cold"] = [feats.movies[j] for j in np.flatnonzero(feats.cold)] if feats.cold is not None else []
    write_json(out_dir / FEATURES_JSON, meta)


def load_features(in_dir) -> MovieFeatures:
    in_dir = Path(in_dir)
    meta = read_json(in_dir / FEATURES_JSON)
    for key in ("d", "sigma2"):
        if key not in meta:
            raise SchemaError(f"{in_dir / FEATURES_JSON}: missing {key!r}")
    rows = read_csv(in_dir / FEATURES_CSV)
    d = int(meta["d"])
    cols = [f"f{k}" for k in range(d)]
    if rows and list(rows[0]) != ["movie"] + cols:
        raise SchemaError(f"{in_dir / FEATURES_CSV}: columns do not match d={d}")
    movies = tuple(r["movie"] for r in rows)
    try:
        V = np.array([[float(r[c]) for c in cols] for r in rows], dtype=float).reshape(-1, d)
    except ValueError as exc:
        raise SchemaError(f"{in_dir / FEATURES_CSV}: {exc}") from None
    cold_set = set(meta.get("cold", []))
    cold = np.array([m in cold_set for m in movies], dtype=bool)
    extra = {k: v for k, v in meta.items() if k not in ("schema_version", "cold")}
    return MovieFeatures(V, float(meta["sigma2"]), movies, cold, extra)

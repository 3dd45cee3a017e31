"""Ensemble files and deterministic JSON/CSV output.

An ensemble is stored as a raw payload of little-endian float64 values
(sample-major, sites row-major) next to a JSON sidecar ``<payload>.json``
holding the geometry, measure tag, count and a SHA-256 of the payload.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .ensemble import MEASURES, FieldEnsemble
from .errors import ConfigurationError, CorruptionError
from .lattice import build_geometry

FORMAT_VERSION = 1
DTYPE = "<f8"


def format_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    text = format(x, ".17g")
    return text if any(ch in text for ch in ".en") else text + ".0"


def _plain(obj):
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def canonical_json(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with sorted keys and floats written to 17 significant digits."""
    obj = _plain(obj)
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {canonical_json(obj[k], indent, _level + 1)}"
                 for k in sorted(obj, key=str)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [pad + canonical_json(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if hasattr(obj, "to_dict"):
        return canonical_json(obj.to_dict(), indent, _level)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(canonical_json(obj) + "\n", encoding="utf-8")
    return path


def read_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_float(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def sidecar(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_ensemble(path, ensemble: FieldEnsemble, model: dict | None = None) -> Path:
    """Write payload and sidecar; returns the payload path."""
    if ensemble.measure not in MEASURES:
        raise ConfigurationError(f"unknown measure tag {ensemble.measure!r}", field="measure")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = np.ascontiguousarray(ensemble.samples, dtype=DTYPE).tobytes()
    path.write_bytes(payload)
    geom = ensemble.geometry
    meta = {
        "format_version": FORMAT_VERSION,
        "dtype": DTYPE,
        "layout": "sample-major, sites row-major",
        "geometry": {"d": geom.d, "L": geom.L, "eps": geom.eps, "N": geom.N},
        "num_sites": geom.num_sites,
        "count": ensemble.count,
        "measure": ensemble.measure,
        "seed": ensemble.seed,
        "n_blocks": ensemble.n_blocks,
        "model": model or {},
        "parameters": ensemble.metadata,
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    write_json(sidecar(path), meta)
    return path


def read_ensemble(path) -> FieldEnsemble:
    path = Path(path)
    meta = read_json(sidecar(path))
    if meta.get("format_version") != FORMAT_VERSION:
        raise CorruptionError(f"unsupported format version {meta.get('format_version')!r}")
    payload = path.read_bytes()
    expected = meta["count"] * meta["num_sites"] * 8
    if len(payload) != expected:
        raise CorruptionError(f"payload has {len(payload)} bytes, expected {expected}")
    if hashlib.sha256(payload).hexdigest() != meta["sha256"]:
        raise CorruptionError("payload hash mismatch")
    g = meta["geometry"]
    geom = build_geometry(g["d"], g["L"], g["eps"])
    samples = np.frombuffer(payload, dtype=DTYPE).reshape(meta["count"], meta["num_sites"]).copy()
    return FieldEnsemble(samples, geom, meta["measure"], seed=meta["seed"],
                         metadata=meta.get("parameters", {}), n_blocks=meta.get("n_blocks"))

"""Deterministic CSV/JSON writers and the run manifest."""
from __future__ import annotations

import hashlib
import json
import platform
import time
from pathlib import Path

import numpy as np

FLOAT_FMT = "%.17g"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT % float(v)
    if v is None:
        return ""
    return str(v)


def _kind(values) -> str:
    for v in values:
        if isinstance(v, (bool, np.bool_)):
            return "bool"
        if isinstance(v, (int, np.integer)):
            return "int"
        if isinstance(v, (float, np.floating)):
            return "float"
        if v is not None:
            return "str"
    return "float"


def write_csv(path, columns: list[str], rows, units: dict | None = None) -> Path:
    """Comma-separated, header row, '\\n' endings, 17 significant digits, plus schema sidecar."""
    path = Path(path)
    rows = [list(r) for r in rows]
    with path.open("w", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(v) for v in r) + "\n")
    units = units or {}
    schema = {
        "file": path.name,
        "delimiter": ",",
        "float_format": FLOAT_FMT,
        "columns": [
            {"name": c, "type": _kind([r[i] for r in rows]), "unit": units.get(c, "")}
            for i, c in enumerate(columns)
        ],
    }
    write_json(path.with_suffix(".schema.json"), schema)
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else None
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def write_json(path, data) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")
    return path


def write_statevector(path, state: np.ndarray, layout: dict) -> Path:
    """Little-endian interleaved (re, im) float64 plus a JSON sidecar."""
    path = Path(path)
    arr = np.asarray(state, dtype=np.complex128)
    inter = np.empty(2 * arr.size, dtype="<f8")
    inter[0::2] = arr.real.ravel()
    inter[1::2] = arr.imag.ravel()
    path.write_bytes(inter.tobytes())
    meta = dict(layout)
    meta.update({"dtype": "float64", "byte_order": "little", "interleaved": "re,im",
                 "n_amplitudes": int(arr.size)})
    write_json(path.with_suffix(".json"), meta)
    return path


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def versions() -> dict:
    import scipy

    from . import __version__

    return {"python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "hrsim": __version__}


class Manifest:
    """Collects output files and writes manifest.json with content digests."""

    def __init__(self, out_dir, command: str, cfg_hash: str, seed: int, t0: float | None = None):
        self.out_dir = Path(out_dir)
        self.command = command
        self.cfg_hash = cfg_hash
        self.seed = seed
        self.files: list[Path] = []
        self.t0 = time.perf_counter() if t0 is None else t0

    def add(self, *paths):
        for p in paths:
            p = Path(p)
            self.files.append(p)
            side = [p.with_suffix(".schema.json")] if p.suffix == ".csv" else []
            if p.suffix == ".bin":
                side.append(p.with_suffix(".json"))
            for s in side:
                if s.exists() and s not in self.files:
                    self.files.append(s)

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "config_hash": self.cfg_hash,
            "seed": self.seed,
            "files": [
                {"path": str(p.relative_to(self.out_dir)), "sha256": sha256_file(p),
                 "bytes": p.stat().st_size}
                for p in sorted(set(self.files))
            ],
            "wall_clock_s": time.perf_counter() - self.t0,
            "versions": versions(),
        }

    def write(self) -> dict:
        data = self.to_dict()
        write_json(self.out_dir / "manifest.json", data)
        return data

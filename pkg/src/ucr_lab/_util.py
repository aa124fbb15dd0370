"""RNG streams, categorical sampling and reproducible serialization."""

from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

# stream ids for trial_rng; outputs depend only on (seed, stream, counter)
STREAM_SOURCE = 0
STREAM_CHANNEL = 1
STREAM_CODEBOOK = 2
STREAM_TXCODE = 3
STREAM_SPECTRUM = 4
STREAM_FIXTURE = 5
STREAM_ASCENT = 6

PMF_TOL = 1e-12
FLOAT_DIGITS = 12


def trial_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator keyed by ``(seed, *keys)``."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys)))


def categorical(rng: np.random.Generator, pmf: np.ndarray, size) -> np.ndarray:
    """Inverse-CDF draws from a 1-D pmf."""
    cdf = np.cumsum(pmf)
    u = rng.random(size)
    return np.searchsorted(cdf[:-1], u, side="right")


def conditional_draw(rng: np.random.Generator, cum_kernel: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Draw one column per entry of ``rows`` from a row-cumulated kernel."""
    u = rng.random(rows.shape)
    return (u[..., None] >= cum_kernel[rows][..., :-1]).sum(axis=-1)


def check_pmf(p: np.ndarray, name: str = "pmf") -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if np.any(~np.isfinite(p)) or np.any(p < 0):
        raise ValueError(f"{name} has negative or non-finite entries")
    if abs(p.sum() - 1.0) > PMF_TOL:
        raise ValueError(f"{name} sums to {p.sum()!r}, not 1")
    return p


def check_stochastic(k: np.ndarray, name: str = "kernel") -> np.ndarray:
    k = np.asarray(k, dtype=float)
    if k.ndim != 2:
        raise ValueError(f"{name} must be a 2-D row-stochastic matrix")
    if np.any(~np.isfinite(k)) or np.any(k < 0):
        raise ValueError(f"{name} has negative or non-finite entries")
    if np.any(np.abs(k.sum(axis=1) - 1.0) > PMF_TOL):
        raise ValueError(f"{name} rows must sum to 1")
    return k


def log2_or_neginf(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return np.log2(x)


def normalize_floats(obj):
    """Round floats to a fixed number of decimals; map non-finite to strings."""
    if isinstance(obj, dict):
        return {str(k): normalize_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [normalize_floats(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return normalize_floats(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        x = round(x, FLOAT_DIGITS)
        return 0.0 if x == 0 else x
    return obj


def dumps(obj) -> str:
    return json.dumps(normalize_floats(obj), indent=2, sort_keys=True) + "\n"


def atomic_write(path: str | os.PathLike, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def fmt(x: float) -> str:
    """Fixed-precision text for CSV cells."""
    x = float(x)
    if math.isinf(x) or math.isnan(x):
        return repr(x)
    return f"{x:.{FLOAT_DIGITS}g}"

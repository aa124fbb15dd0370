"""Finite-alphabet joint sources, types and strong joint typicality."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._util import STREAM_SOURCE, categorical, check_pmf, trial_rng

DEFAULT_DELTA = 0.05


@dataclass(frozen=True, eq=False)
class JointSource:
    """Joint pmf ``P_XY`` of a discrete memoryless two-component source.

    ``pmf[x, y]`` is the probability of the pair ``(x, y)``.
    """

    pmf: np.ndarray

    def __post_init__(self):
        p = np.array(self.pmf, dtype=float)
        if p.ndim != 2 or 0 in p.shape:
            raise ValueError("JointSource pmf must be a non-empty 2-D array")
        check_pmf(p, "JointSource pmf")
        p.setflags(write=False)
        object.__setattr__(self, "pmf", p)

    @property
    def alphabet_x(self) -> int:
        return self.pmf.shape[0]

    @property
    def alphabet_y(self) -> int:
        return self.pmf.shape[1]

    @property
    def px(self) -> np.ndarray:
        return self.pmf.sum(axis=1)

    @property
    def py(self) -> np.ndarray:
        return self.pmf.sum(axis=0)

    @classmethod
    def dsbs(cls, p: float) -> "JointSource":
        """Doubly symmetric binary source: uniform X, Y = X xor Bern(p)."""
        return cls(np.array([[1 - p, p], [p, 1 - p]]) / 2)

    @classmethod
    def identical(cls, px) -> "JointSource":
        """X = Y with marginal ``px``."""
        return cls(np.diag(np.asarray(px, dtype=float)))

    @classmethod
    def independent(cls, px, py) -> "JointSource":
        return cls(np.outer(px, py))

    def to_dict(self) -> dict:
        return {
            "alphabet_x": self.alphabet_x,
            "alphabet_y": self.alphabet_y,
            "pmf": self.pmf.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "JointSource":
        ax, ay = int(d["alphabet_x"]), int(d["alphabet_y"])
        flat = np.asarray(d["pmf"], dtype=float)
        if flat.size != ax * ay:
            raise ValueError(f"pmf has {flat.size} entries, expected {ax * ay}")
        return cls(flat.reshape(ax, ay))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "JointSource":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class EmpiricalType:
    """Joint histogram of equal-length sequences."""

    counts: dict
    n: int

    def pmf(self, shape: Sequence[int]) -> np.ndarray:
        out = np.zeros(tuple(shape))
        for cell, c in self.counts.items():
            out[cell] = c
        return out / self.n


@dataclass(frozen=True)
class TypicalityParams:
    delta: float = DEFAULT_DELTA
    n: int | None = None

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("typicality slack delta must be positive")


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return trial_rng(int(seed), STREAM_SOURCE)


def sample_pair(src: JointSource, n: int, seed: int, trial: int) -> tuple[np.ndarray, np.ndarray]:
    """One i.i.d. block ``(x^n, y^n)``; depends only on ``(seed, trial)``."""
    rng = trial_rng(seed, STREAM_SOURCE, trial)
    flat = categorical(rng, src.pmf.ravel(), n)
    return flat // src.alphabet_y, flat % src.alphabet_y


def sample_pairs(src: JointSource, n: int, trials: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """``trials`` independent blocks of length ``n`` drawn from ``src``.

    Trial ``t`` uses its own stream keyed by ``(seed, t)``, so any subset
    of trials can be regenerated independently.
    """
    if n < 1 or trials < 1:
        raise ValueError("n and trials must be >= 1")
    check_pmf(src.pmf, "JointSource pmf")
    return [sample_pair(src, n, seed, t) for t in range(trials)]


def joint_type(seqs: Sequence[Sequence[int]]) -> EmpiricalType:
    """Exact joint histogram of a tuple of equal-length sequences."""
    seqs = [np.asarray(s).ravel() for s in seqs]
    if not seqs:
        raise ValueError("need at least one sequence")
    n = len(seqs[0])
    if any(len(s) != n for s in seqs):
        raise ValueError("sequences have different lengths")
    counts = Counter(zip(*(s.tolist() for s in seqs)))
    return EmpiricalType(dict(counts), n)


def _within_box(freq: np.ndarray, pmf: np.ndarray, delta: float) -> np.ndarray:
    # freq (..., cells), pmf (cells,)
    dev_ok = np.all(np.abs(freq - pmf) <= delta + 1e-12, axis=-1)
    support_ok = ~np.any((freq > 0) & (pmf <= 0), axis=-1)
    return dev_ok & support_ok


def is_jointly_typical(seqs: Sequence[Sequence[int]], reference_pmf, params: TypicalityParams | float = DEFAULT_DELTA) -> bool:
    """Strong joint typicality: every cell frequency within ``delta`` of the
    reference pmf, and no occurrence of a zero-probability cell."""
    delta = params.delta if isinstance(params, TypicalityParams) else float(params)
    ref = np.asarray(reference_pmf, dtype=float)
    seqs = [np.asarray(s, dtype=np.int64).ravel() for s in seqs]
    if ref.ndim != len(seqs):
        raise ValueError(f"reference pmf has {ref.ndim} axes for {len(seqs)} sequences")
    n = len(seqs[0])
    if any(len(s) != n for s in seqs):
        raise ValueError("sequences have different lengths")
    for s, size in zip(seqs, ref.shape):
        if s.size and (s.min() < 0 or s.max() >= size):
            raise ValueError("symbol outside the reference alphabet")
    flat = np.ravel_multi_index(seqs, ref.shape)
    freq = np.bincount(flat, minlength=ref.size) / n
    return bool(_within_box(freq, ref.ravel(), delta))


def typical_matrix(words: np.ndarray, seqs: np.ndarray, pair_pmf: np.ndarray, delta: float) -> np.ndarray:
    """Pairwise typicality of codewords against observed sequences.

    Parameters
    ----------
    words : ndarray, shape (N, n)
        Sequences over the first alphabet of ``pair_pmf``.
    seqs : ndarray, shape (B, n)
        Sequences over the second alphabet.
    pair_pmf : ndarray, shape (|U|, |X|)
    delta : float

    Returns
    -------
    ndarray of bool, shape (B, N)
        Entry ``[b, w]`` is ``is_jointly_typical((words[w], seqs[b]), pair_pmf, delta)``.
    """
    words = np.atleast_2d(words)
    seqs = np.atleast_2d(seqs)
    nw, n = words.shape
    nb = seqs.shape[0]
    cells = pair_pmf.size
    if nw == 0:
        return np.zeros((nb, 0), dtype=bool)
    idx = words[None, :, :] * pair_pmf.shape[1] + seqs[:, None, :]
    offsets = (np.arange(nb * nw) * cells).reshape(nb, nw, 1)
    counts = np.bincount((idx + offsets).ravel(), minlength=nb * nw * cells)
    freq = counts.reshape(nb, nw, cells) / n
    return _within_box(freq, pair_pmf.ravel(), delta)


def round_to_type(pmf, n: int) -> np.ndarray:
    """Nearest type with denominator ``n`` in total variation.

    Largest-remainder rounding: floors of ``n * pmf``, then the leftover
    units go to the largest fractional parts, ties to the lowest index.
    """
    p = check_pmf(np.asarray(pmf, dtype=float).ravel())
    scaled = n * p
    base = np.floor(scaled + 1e-9)
    frac = np.where(scaled - base > 0, scaled - base, 0.0)
    left = int(round(n - base.sum()))
    order = sorted(range(p.size), key=lambda i: (-frac[i], i))
    for i in order[:left]:
        base[i] += 1
    return base / n


def type_counts(pmf, n: int) -> np.ndarray:
    """Integer symbol counts ``n * pmf``; raises unless every count is integral."""
    scaled = n * np.asarray(pmf, dtype=float).ravel()
    counts = np.round(scaled)
    if np.any(np.abs(scaled - counts) > 1e-9) or counts.sum() != n:
        raise ValueError(f"{np.asarray(pmf).tolist()} is not a type for blocklength {n}")
    return counts.astype(np.int64)


def sample_fixed_type(pmf, n: int, seed) -> np.ndarray:
    """Uniformly random sequence with exactly ``n * pmf[u]`` copies of ``u``."""
    counts = type_counts(pmf, n)
    rng = _as_rng(seed)
    return rng.permutation(np.repeat(np.arange(counts.size), counts))


def source_from_dict(d: dict) -> JointSource:
    """Source from its JSON description: the explicit form or the
    shorthands ``{"type": "dsbs", "p"}``, ``{"type": "identical", "px"}``
    and ``{"type": "independent", "px", "py"}``."""
    kind = d.get("type", "explicit")
    if kind == "explicit":
        return JointSource.from_dict(d)
    if kind == "dsbs":
        return JointSource.dsbs(float(d["p"]))
    if kind == "identical":
        return JointSource.identical(d["px"])
    if kind == "independent":
        return JointSource.independent(d["px"], d["py"])
    raise ValueError(f"unknown source type {kind!r}")

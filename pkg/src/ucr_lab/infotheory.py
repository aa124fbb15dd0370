"""Entropy and mutual information on explicit pmf arrays (base-2 logs).

Joint distributions are plain numpy arrays with one axis per random
variable. Functions that take axis groups accept any iterable of axis
indices; the remaining axes are summed out.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np


def _xlog2x(p: np.ndarray) -> np.ndarray:
    out = np.zeros_like(p, dtype=float)
    mask = p > 0
    out[mask] = p[mask] * np.log2(p[mask])
    return out


def entropy(p) -> float:
    """Shannon entropy in bits of a pmf of any shape (0 log 0 = 0)."""
    p = np.asarray(p, dtype=float)
    return float(-_xlog2x(p).sum())


def binary_entropy(p: float) -> float:
    return entropy([p, 1.0 - p])


def binary_convolution(a: float, b: float) -> float:
    """Crossover probability of two cascaded binary symmetric channels."""
    return a * (1.0 - b) + (1.0 - a) * b


def marginal(p: np.ndarray, axes: Iterable[int]) -> np.ndarray:
    """Marginal over ``axes`` (kept in the given order)."""
    axes = tuple(axes)
    drop = tuple(i for i in range(p.ndim) if i not in axes)
    m = p.sum(axis=drop) if drop else p
    kept = [i for i in range(p.ndim) if i in axes]
    return np.transpose(m, [kept.index(a) for a in axes])


def joint_entropy(p: np.ndarray, axes: Iterable[int]) -> float:
    axes = tuple(axes)
    if not axes:
        return 0.0
    return entropy(marginal(p, axes))


def conditional_entropy(p: np.ndarray, a: Iterable[int], given: Iterable[int] = ()) -> float:
    """H(A | C) = H(A, C) - H(C)."""
    a, given = tuple(a), tuple(given)
    return joint_entropy(p, a + given) - joint_entropy(p, given)


def conditional_mutual_information(
    p: np.ndarray, a: Iterable[int], b: Iterable[int], given: Iterable[int] = ()
) -> float:
    """I(A; B | C) in bits, from the entropy expansion.

    Axis groups must be disjoint.
    """
    a, b, given = tuple(a), tuple(b), tuple(given)
    if set(a) & set(b) or set(a) & set(given) or set(b) & set(given):
        raise ValueError("axis groups must be disjoint")
    return (
        joint_entropy(p, a + given)
        + joint_entropy(p, b + given)
        - joint_entropy(p, a + b + given)
        - joint_entropy(p, given)
    )


def mutual_information(pxy) -> float:
    """I(X;Y) in bits for a 2-D joint pmf, summed directly as
    sum p log(p / (p_row p_col)) with 0 log 0 = 0."""
    pxy = np.asarray(pxy, dtype=float)
    if pxy.ndim != 2:
        raise ValueError("expected a 2-D joint pmf")
    px = pxy.sum(axis=1, keepdims=True)
    py = pxy.sum(axis=0, keepdims=True)
    mask = pxy > 0
    # divide one marginal at a time; px * py can underflow for subnormal masses
    ratio = (pxy / np.where(px > 0, px, 1.0)) / np.where(py > 0, py, 1.0)
    return float(np.sum(pxy[mask] * np.log2(ratio[mask])))


def relative_entropy(p, q) -> float:
    """D(p || q) in bits; +inf when p is not absolutely continuous w.r.t. q."""
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    mask = p > 0
    if np.any(q[mask] <= 0):
        return float("inf")
    return float(np.sum(p[mask] * np.log2(p[mask] / q[mask])))


def blahut_arimoto(kernel, tol: float = 1e-12, max_iter: int = 10_000) -> tuple[float, np.ndarray]:
    """Capacity (bits) and an optimal input pmf of a DMC ``kernel[t, z]``."""
    w = np.asarray(kernel, dtype=float)
    m = w.shape[0]
    r = np.full(m, 1.0 / m)
    logw = np.where(w > 0, np.log2(np.where(w > 0, w, 1.0)), 0.0)
    for _ in range(max_iter):
        q = r @ w
        logq = np.where(q > 0, np.log2(np.where(q > 0, q, 1.0)), 0.0)
        d = np.sum(w * (logw - logq), axis=1)  # D(W(.|t) || q)
        new = r * np.exp2(d)
        new /= new.sum()
        lower = float(np.log2(np.sum(r * np.exp2(d))))
        upper = float(d.max())
        r = new
        if upper - lower < tol:
            break
    q = r @ w
    cap = float(np.sum(r[:, None] * w * np.where(w > 0, logw - np.log2(np.where(q > 0, q, 1.0)), 0.0)))
    return cap, r

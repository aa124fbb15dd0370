"""Single-letter common-randomness bounds.

``cr_bound`` solves

    maximize  I(U;X)  over P_{U|X}   (U - X - Y Markov)
    subject to  I(U;X) - I(U;Y) <= budget

either by exhaustive search on a simplex lattice (``grid``) or by
multi-restart projected gradient ascent with a quadratic penalty
(``ascent``). ``epsilon_ucr_bounds`` plugs the spectrum thresholds in as
budgets.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from ._util import STREAM_ASCENT, check_stochastic, trial_rng
from .infotheory import conditional_mutual_information, entropy, mutual_information
from .source import JointSource
from .spectrum import (
    ChannelFamily,
    InputProcess,
    SpectrumEstimate,
    default_input_candidates,
    estimate_spectrum,
    thresholds_from_spectrum,
)

FEAS_TOL = 1e-9
TIE_TOL = 1e-12
GRID_MAX_POINTS = 20_000_000
_CHUNK = 1_000_000

__all__ = [
    "AuxiliaryChannel",
    "BoundResult",
    "mutual_information",
    "induced_joint",
    "aux_informations",
    "cr_bound",
    "cardinality_sweep",
    "SpectrumConfig",
    "UCRBounds",
    "estimate_candidate_spectra",
    "sup_thresholds",
    "epsilon_ucr_bounds",
]


@dataclass(frozen=True, eq=False)
class AuxiliaryChannel:
    """Test channel ``pu_given_x[x, u] = P(U=u | X=x)``."""

    pu_given_x: np.ndarray

    def __post_init__(self):
        m = check_stochastic(np.array(self.pu_given_x, dtype=float), "auxiliary channel")
        m.setflags(write=False)
        object.__setattr__(self, "pu_given_x", m)

    @property
    def card_u(self) -> int:
        return self.pu_given_x.shape[1]

    @classmethod
    def identity(cls, card_x: int, card_u: int | None = None) -> "AuxiliaryChannel":
        card_u = card_x if card_u is None else card_u
        if card_u < card_x:
            raise ValueError("identity auxiliary needs card_u >= |X|")
        return cls(np.eye(card_x, card_u))

    @classmethod
    def constant(cls, card_x: int, card_u: int = 2) -> "AuxiliaryChannel":
        m = np.zeros((card_x, card_u))
        m[:, 0] = 1.0
        return cls(m)

    @classmethod
    def bsc(cls, a: float) -> "AuxiliaryChannel":
        return cls(np.array([[1 - a, a], [a, 1 - a]]))


def induced_joint(aux: AuxiliaryChannel, src: JointSource) -> np.ndarray:
    """P(u, x, y) = P(u | x) P(x, y), axes (U, X, Y)."""
    if aux.pu_given_x.shape[0] != src.alphabet_x:
        raise ValueError("auxiliary channel rows must match |X|")
    return np.einsum("xu,xy->uxy", aux.pu_given_x, src.pmf)


def aux_informations(aux: AuxiliaryChannel, src: JointSource) -> tuple[float, float]:
    """(I(U;X), I(U;Y)) for the induced joint."""
    p = induced_joint(aux, src)
    return mutual_information(p.sum(axis=2)), mutual_information(p.sum(axis=1))


@dataclass
class BoundResult:
    value: float
    argmax: AuxiliaryChannel
    budget: float
    budget_used: float
    method: str
    card_u: int
    info: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "value_bits": self.value,
            "budget": self.budget,
            "budget_used": self.budget_used,
            "card_u": self.card_u,
            "method": self.method,
            "argmax_matrix": self.argmax.pu_given_x.tolist(),
        }


# ---------------------------------------------------------------------------
# vectorized objective pieces; q has shape (..., |X|, |U|)


def _h_rows(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(p > 0, p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return -t.sum(axis=-1)


def _objectives(q: np.ndarray, px: np.ndarray, py_x: np.ndarray, py: np.ndarray):
    """Batched (I(U;X), I(U;X) - I(U;Y)).

    ``py_x[y, x] = P(x | y)``.
    """
    pu = np.einsum("x,...xu->...u", px, q)
    h_u = _h_rows(pu)
    h_u_x = np.einsum("x,...x->...", px, _h_rows(q))
    pu_y = np.einsum("yx,...xu->...yu", py_x, q)
    h_u_y = np.einsum("y,...y->...", py, _h_rows(pu_y))
    return h_u - h_u_x, h_u_y - h_u_x


def _source_parts(src: JointSource):
    px, py = src.px, src.py
    with np.errstate(divide="ignore", invalid="ignore"):
        px_given_y = np.where(py[None, :] > 0, src.pmf / np.where(py > 0, py, 1.0)[None, :], 0.0).T
    return px, px_given_y, py


# ---------------------------------------------------------------------------
# grid oracle


def simplex_lattice(dim: int, step: float) -> np.ndarray:
    """All points of the ``dim``-simplex with coordinates on multiples of
    ``step``, in ascending lexicographic order."""
    k = round(1.0 / step)
    if not math.isclose(k * step, 1.0, rel_tol=0, abs_tol=1e-9):
        raise ValueError(f"grid step {step} must divide 1")
    pts = []
    for bars in itertools.combinations(range(k + dim - 1), dim - 1):
        prev, parts = -1, []
        for b in bars:
            parts.append(b - prev - 1)
            prev = b
        parts.append(k + dim - 1 - prev - 1)
        pts.append(parts)
    pts = np.array(sorted(pts), dtype=float) / k
    return pts


class _GridTable:
    """Objective values over every lattice matrix, in lexicographic order."""

    def __init__(self, pmf_bytes: bytes, shape: tuple, card_u: int, step: float):
        src = JointSource(np.frombuffer(pmf_bytes).reshape(shape))
        self.lattice = simplex_lattice(card_u, step)
        nl, nx = self.lattice.shape[0], src.alphabet_x
        total = nl**nx
        if total > GRID_MAX_POINTS:
            raise ValueError(f"grid has {total} points (> {GRID_MAX_POINTS}); use a coarser step or method='ascent'")
        self.nx = nx
        px, py_x, py = _source_parts(src)
        self.ixu = np.empty(total)
        self.gap = np.empty(total)
        for lo in range(0, total, _CHUNK):
            idx = np.unravel_index(np.arange(lo, min(total, lo + _CHUNK)), (nl,) * nx)
            q = np.stack([self.lattice[i] for i in idx], axis=1)  # (chunk, X, U)
            a, g = _objectives(q, px, py_x, py)
            self.ixu[lo : lo + a.size] = a
            self.gap[lo : lo + a.size] = g

    def matrix(self, flat: int) -> np.ndarray:
        idx = np.unravel_index(flat, (self.lattice.shape[0],) * self.nx)
        return np.stack([self.lattice[i] for i in idx])

    def best(self, budget: float) -> tuple[float, int]:
        vals = np.where(self.gap <= budget + FEAS_TOL, self.ixu, -np.inf)
        top = vals.max()
        return float(top), int(np.flatnonzero(vals >= top - TIE_TOL)[0])


@lru_cache(maxsize=32)
def _grid_table(pmf_bytes: bytes, shape: tuple, card_u: int, step: float) -> _GridTable:
    return _GridTable(pmf_bytes, shape, card_u, step)


def _grid(src: JointSource, budget: float, card_u: int, step: float) -> BoundResult:
    table = _grid_table(src.pmf.tobytes(), src.pmf.shape, card_u, round(step, 12))
    value, flat = table.best(budget)
    return BoundResult(value, AuxiliaryChannel(table.matrix(flat)), budget, float(table.gap[flat]), "grid", card_u, {"step": step})


# ---------------------------------------------------------------------------
# projected gradient ascent


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of each last-axis vector onto the probability simplex."""
    u = np.sort(v, axis=-1)[..., ::-1]
    css = np.cumsum(u, axis=-1) - 1.0
    k = np.arange(1, v.shape[-1] + 1)
    cond = u - css / k > 0
    rho = v.shape[-1] - 1 - np.argmax(cond[..., ::-1], axis=-1)
    theta = np.take_along_axis(css, rho[..., None], axis=-1) / (rho[..., None] + 1)
    return np.maximum(v - theta, 0.0)


def _gradients(q, px, py_x, pxy):
    qc = np.maximum(q, 1e-300)
    pu = np.maximum(np.einsum("x,...xu->...u", px, q), 1e-300)
    pu_y = np.maximum(np.einsum("yx,...xu->...yu", py_x, q), 1e-300)
    g_ux = px[:, None] * np.log2(qc / pu[..., None, :])
    g_uy = np.einsum("xy,...yu->...xu", pxy, np.log2(pu_y / pu[..., None, :]))
    return g_ux, g_uy


def _penalized(q, px, py_x, py, budget, rho):
    ixu, gap = _objectives(q, px, py_x, py)
    viol = np.maximum(gap - budget, 0.0)
    return ixu - rho * viol**2, ixu, gap


def _repair(q, px, py_x, py, budget):
    """Shrink infeasible matrices toward U independent of X until feasible."""
    pu = np.einsum("x,xu->u", px, q)
    target = np.broadcast_to(pu, q.shape)
    _, gap = _objectives(q, px, py_x, py)
    if gap <= budget + FEAS_TOL:
        return q
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        _, g = _objectives((1 - mid) * q + mid * target, px, py_x, py)
        if g <= budget + FEAS_TOL / 2:
            hi = mid
        else:
            lo = mid
    out = (1 - hi) * q + hi * target
    _, g = _objectives(out, px, py_x, py)
    return out if g <= budget + FEAS_TOL else target.copy()


def _ascent(
    src: JointSource,
    budget: float,
    card_u: int,
    restarts: int = 20,
    rounds: int = 5,
    rho0: float = 10.0,
    growth: float = 10.0,
    iters: int = 150,
    seed: int = 0,
) -> BoundResult:
    px, py_x, py = _source_parts(src)
    nx = src.alphabet_x
    rng = trial_rng(seed, STREAM_ASCENT, card_u)
    q = rng.dirichlet(np.ones(card_u), size=(restarts, nx))
    rho = rho0
    step = np.full(restarts, 0.5)
    for _ in range(rounds):
        f, _, _ = _penalized(q, px, py_x, py, budget, rho)
        step = np.maximum(step, 1e-3)
        for _ in range(iters):
            g_ux, g_uy = _gradients(q, px, py_x, src.pmf)
            _, _, gap = _penalized(q, px, py_x, py, budget, rho)
            viol = np.maximum(gap - budget, 0.0)
            grad = g_ux - (2 * rho * viol)[:, None, None] * (g_ux - g_uy)
            cand = project_simplex(q + step[:, None, None] * grad)
            f_new, _, _ = _penalized(cand, px, py_x, py, budget, rho)
            ok = f_new >= f - 1e-15
            q = np.where(ok[:, None, None], cand, q)
            f = np.where(ok, f_new, f)
            step = np.where(ok, np.minimum(step * 1.5, 10.0), step * 0.5)
        rho *= growth

    candidates = [_repair(qi, px, py_x, py, budget) for qi in q]
    if card_u >= nx:
        candidates.append(np.eye(nx, card_u))
    candidates.append(AuxiliaryChannel.constant(nx, card_u).pu_given_x.copy())
    best = None
    for c in candidates:
        ixu, gap = _objectives(c, px, py_x, py)
        if gap <= budget + FEAS_TOL and (best is None or ixu > best[0] + TIE_TOL):
            best = (float(ixu), float(gap), c)
    value, gap, mat = best
    mat = np.clip(mat, 0.0, None)
    mat /= mat.sum(axis=1, keepdims=True)
    return BoundResult(value, AuxiliaryChannel(mat), budget, gap, "ascent", card_u,
                       {"restarts": restarts, "rounds": rounds, "seed": seed})


def cr_bound(
    src: JointSource,
    budget: float,
    card_u: int | None = None,
    method: str = "grid",
    step: float = 0.05,
    seed: int = 0,
    **ascent_opts,
) -> BoundResult:
    """Max I(U;X) over U - X - Y with I(U;X) - I(U;Y) <= ``budget``.

    Parameters
    ----------
    src : JointSource
    budget : float
        Non-negative constraint level in bits.
    card_u : int, optional
        Auxiliary alphabet size, default ``|X| + 1``.
    method : {"grid", "ascent"}
    step : float
        Lattice step for ``grid``.
    seed : int
        Restart seed for ``ascent``.

    Returns
    -------
    BoundResult
        The best feasible value with its maximizer.
    """
    if budget < 0:
        raise ValueError("budget must be non-negative")
    card_u = src.alphabet_x + 1 if card_u is None else int(card_u)
    if card_u < 2:
        raise ValueError("card_u must be >= 2")
    if method == "grid":
        return _grid(src, float(budget), card_u, step)
    if method == "ascent":
        return _ascent(src, float(budget), card_u, seed=seed, **ascent_opts)
    raise ValueError(f"unknown method {method!r}")


def cardinality_sweep(
    src: JointSource,
    budget: float,
    cards: Sequence[int] | None = None,
    method: str = "ascent",
    warn_tol: float = 1e-3,
    **kwargs,
) -> dict[int, BoundResult]:
    """``cr_bound`` for each auxiliary cardinality; warns when the largest
    cardinality beats the next one by more than ``warn_tol`` bits."""
    cards = list(cards) if cards is not None else list(range(2, src.alphabet_x + 3))
    out = {c: cr_bound(src, budget, c, method, **kwargs) for c in cards}
    if len(cards) >= 2:
        last, prev = sorted(cards)[-1], sorted(cards)[-2]
        if out[last].value > out[prev].value + warn_tol:
            warnings.warn(
                f"|U|={last} improves the bound by {out[last].value - out[prev].value:.4g} bits over |U|={prev}",
                RuntimeWarning,
                stacklevel=2,
            )
    return out


# ---------------------------------------------------------------------------
# composition with the spectrum thresholds


@dataclass
class SpectrumConfig:
    blocklengths: Sequence[int] = (500, 2000)
    trials: int = 10_000
    seed: int = 0
    band: float = 0.0
    limsup: str = "largest"
    threads: int = 1


@dataclass
class UCRBounds:
    epsilon: float
    l_hat: float
    u_hat: float
    lower: float
    upper: float
    lower_result: BoundResult
    upper_result: BoundResult

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "l_hat": self.l_hat,
            "u_hat": self.u_hat,
            "lower_bits": self.lower,
            "upper_bits": self.upper,
        }


def estimate_candidate_spectra(
    inputs: Sequence[InputProcess] | None, ch: ChannelFamily, cfg: SpectrumConfig
) -> list[SpectrumEstimate]:
    inputs = default_input_candidates(ch) if inputs is None else list(inputs)
    return [estimate_spectrum(inp, ch, cfg.blocklengths, cfg.trials, cfg.seed, cfg.threads) for inp in inputs]


def sup_thresholds(spectra: Sequence[SpectrumEstimate], epsilon: float, band: float = 0.0, limsup: str = "largest") -> tuple[float, float]:
    """Thresholds maximized over the candidate inputs, floored at 0.

    A constant input has density identically 0, so both thresholds of the
    supremum over all inputs are non-negative.
    """
    pairs = [thresholds_from_spectrum(s, epsilon, band, limsup) for s in spectra]
    return max(0.0, max(p[0] for p in pairs)), max(0.0, max(p[1] for p in pairs))


def epsilon_ucr_bounds(
    src: JointSource,
    inputs: Sequence[InputProcess] | None,
    ch: ChannelFamily,
    epsilon: float,
    spectrum_config: SpectrumConfig | None = None,
    card_u: int | None = None,
    method: str = "grid",
    step: float = 0.05,
    spectra: Sequence[SpectrumEstimate] | None = None,
) -> UCRBounds:
    """Lower and upper single-letter bounds at level ``epsilon``."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    cfg = spectrum_config or SpectrumConfig()
    if spectra is None:
        spectra = estimate_candidate_spectra(inputs, ch, cfg)
    l_hat, u_hat = sup_thresholds(spectra, epsilon, cfg.band, cfg.limsup)
    lo = cr_bound(src, l_hat, card_u, method, step)
    hi = cr_bound(src, u_hat, card_u, method, step)
    return UCRBounds(epsilon, l_hat, u_hat, lo.value, hi.value, lo, hi)


def markov_gap(aux: AuxiliaryChannel, src: JointSource) -> float:
    """I(U;Y|X) of the induced joint (zero for a valid auxiliary)."""
    return conditional_mutual_information(induced_joint(aux, src), [0], [2], [1])


def conditional_entropy_x_given_y(src: JointSource) -> float:
    return entropy(src.pmf) - entropy(src.py)

"""Two-terminal common-randomness protocol built from a binned codebook.

Alice observes ``x^n`` and picks the first codeword jointly typical with it
(``encode_phi``); she sends the row of that word over the channel
(``bin_index``, ``transmit_index``). Bob, who sees ``y^n``, looks in the
received row for the unique word jointly typical with ``y^n``
(``decode_psi``). Keys are flat codeword indices: row-major ``(i, j)`` for
the ``N1 x N2`` words and ``N1 * N2`` for the fallback word ``u0``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._util import STREAM_CHANNEL, STREAM_CODEBOOK, trial_rng
from .capacity import AuxiliaryChannel, aux_informations, induced_joint
from .source import DEFAULT_DELTA, JointSource, round_to_type, sample_fixed_type, sample_pair, source_from_dict, typical_matrix
from .spectrum import ChannelFamily, TransmissionCode, build_random_code, channel_from_dict

CODEBOOK_CAP = 2**16
U0_ATTEMPTS = 100
_TYPICAL_BUDGET = 4_000_000

Transmitter = Callable[[int, np.random.Generator], int]


@dataclass(frozen=True, eq=False)
class Codebook:
    """``words[i, j]`` is the length-``n`` sequence ``u_{i+1, j+1}``."""

    words: np.ndarray
    u0: np.ndarray
    mu: float
    pu: np.ndarray
    pux: np.ndarray  # reference joint P(u, x)
    puy: np.ndarray  # reference joint P(u, y)

    @property
    def n1(self) -> int:
        return self.words.shape[0]

    @property
    def n2(self) -> int:
        return self.words.shape[1]

    @property
    def n(self) -> int:
        return self.words.shape[2]

    @property
    def key_size(self) -> int:
        return self.n1 * self.n2 + 1

    @property
    def fallback(self) -> int:
        """Key index of ``u0``."""
        return self.n1 * self.n2

    def flat(self) -> np.ndarray:
        return self.words.reshape(-1, self.n)

    def word(self, k: int) -> np.ndarray:
        return self.u0 if k == self.fallback else self.flat()[k]


def codebook_sizes(iux: float, iuy: float, n: int, mu: float) -> tuple[int, int]:
    """Auto sizes ``floor(2^{n(I(U;X) - I(U;Y) + 3 mu)})`` and
    ``floor(2^{n(I(U;Y) - 2 mu)})``."""
    n1 = math.floor(2.0 ** (n * (iux - iuy + 3 * mu)))
    n2 = math.floor(2.0 ** (n * (iuy - 2 * mu)))
    return n1, n2


@dataclass
class ProtocolConfig:
    src: JointSource
    aux: AuxiliaryChannel
    ch: ChannelFamily
    n: int
    trials: int
    seed: int
    mu: float = 0.02
    delta: float = DEFAULT_DELTA
    n1: int | None = None
    n2: int | None = None
    cap: int = CODEBOOK_CAP
    tx_n: int | None = None
    tx_input: np.ndarray | None = None
    rate_budget: float | None = None
    epsilon: float = 0.1
    beta: float = 0.05
    entropy_slack: float = 0.1
    c: float = 1.0
    entropy_target: float = 0.0
    event_log: bool = False

    def __post_init__(self):
        if self.n < 1 or self.trials < 1:
            raise ValueError("n and trials must be >= 1")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.delta <= 0:
            raise ValueError("typicality slack must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "ProtocolConfig":
        tx = d.get("transmission", {})
        targets = d.get("targets", {})
        return cls(
            src=source_from_dict(d["source"]),
            aux=AuxiliaryChannel(np.asarray(d["aux"], dtype=float)),
            ch=channel_from_dict(d["channel"]),
            n=int(d["n"]),
            trials=int(d["trials"]),
            seed=int(d["seed"]),
            mu=float(d.get("mu", 0.02)),
            delta=float(d.get("delta", DEFAULT_DELTA)),
            n1=d.get("N1"),
            n2=d.get("N2"),
            cap=int(d.get("cap", CODEBOOK_CAP)),
            tx_n=tx.get("n"),
            tx_input=None if tx.get("input_pmf") is None else np.asarray(tx["input_pmf"], dtype=float),
            rate_budget=tx.get("rate_budget"),
            epsilon=float(targets.get("epsilon", 0.1)),
            beta=float(targets.get("beta", 0.05)),
            entropy_slack=float(targets.get("delta", 0.1)),
            c=float(targets.get("c", 1.0)),
            entropy_target=float(targets.get("H", 0.0)),
            event_log=bool(d.get("event_log", False)),
        )


def build_codebook(cfg: ProtocolConfig) -> Codebook:
    """Random codebook of fixed-type words plus a distinct fallback ``u0``.

    Sizes come from ``cfg.n1``/``cfg.n2`` when both are given, otherwise from
    ``codebook_sizes``; either way ``N1 * N2`` must not exceed ``cfg.cap``.
    """
    joint = induced_joint(cfg.aux, cfg.src)
    pux, puy = joint.sum(axis=2), joint.sum(axis=1)
    pu = round_to_type(pux.sum(axis=1), cfg.n)
    if cfg.n1 is not None and cfg.n2 is not None:
        n1, n2 = int(cfg.n1), int(cfg.n2)
    else:
        iux, iuy = aux_informations(cfg.aux, cfg.src)
        n1, n2 = codebook_sizes(iux, iuy, cfg.n, cfg.mu)
    if n1 < 1 or n2 < 1:
        raise ValueError(f"degenerate codebook sizing N1={n1}, N2={n2}")
    if n1 * n2 > cfg.cap:
        raise ValueError(f"codebook has {n1 * n2} words, above the cap {cfg.cap}; give explicit N1, N2")
    rng = trial_rng(cfg.seed, STREAM_CODEBOOK)
    words = np.stack([sample_fixed_type(pu, cfg.n, rng) for _ in range(n1 * n2)])
    for _ in range(U0_ATTEMPTS):
        u0 = sample_fixed_type(pu, cfg.n, rng)
        if not np.any(np.all(words == u0, axis=1)):
            break
    else:
        raise RuntimeError(f"fallback word collides with the codebook after {U0_ATTEMPTS} draws")
    words = words.reshape(n1, n2, cfg.n)
    for a in (words, u0, pu, pux, puy):
        a.setflags(write=False)
    return Codebook(words, u0, cfg.mu, pu, pux, puy)


def _typical_with(words: np.ndarray, seqs: np.ndarray, ref: np.ndarray, delta: float) -> np.ndarray:
    seqs = np.atleast_2d(seqs)
    step = max(1, _TYPICAL_BUDGET // max(1, words.size))
    parts = [typical_matrix(words, seqs[lo : lo + step], ref, delta) for lo in range(0, seqs.shape[0], step)]
    return np.concatenate(parts, axis=0)


def encode_batch(x: np.ndarray, cb: Codebook, delta: float) -> np.ndarray:
    """Key index for each row of ``x`` (B, n)."""
    typ = _typical_with(cb.flat(), x, cb.pux, delta)
    hit = typ.any(axis=1)
    return np.where(hit, np.argmax(typ, axis=1), cb.fallback)


def encode_phi(x, cb: Codebook, delta: float = DEFAULT_DELTA) -> int:
    """First word in row-major ``(i, j)`` order jointly typical with ``x``,
    as a key index; ``cb.fallback`` when there is none."""
    return int(encode_batch(np.asarray(x)[None, :], cb, delta)[0])


def bin_index(x, cb: Codebook, delta: float = DEFAULT_DELTA) -> int:
    """Row ``i`` in 1..N1 of the chosen word, ``N1 + 1`` for ``u0``."""
    return _bin_of_key(encode_phi(x, cb, delta), cb)


def _bin_of_key(k, cb: Codebook):
    return np.where(np.asarray(k) == cb.fallback, cb.n1 + 1, np.asarray(k) // cb.n2 + 1)


def transmit_index(
    i: int,
    code: TransmissionCode,
    ch: ChannelFamily,
    seed: int | np.random.Generator,
    rate_budget: float | None = None,
    n_bins: int | None = None,
) -> int:
    """Send bin ``i`` once through ``ch`` and return the decoded bin.

    Warns when ``log2(n_bins) / n`` exceeds ``rate_budget``.
    """
    n_bins = code.size if n_bins is None else n_bins
    if code.size < n_bins:
        raise ValueError(f"transmission code has {code.size} messages, need {n_bins}")
    _rate_check(n_bins, code.n, rate_budget)
    rng = seed if isinstance(seed, np.random.Generator) else trial_rng(int(seed), STREAM_CHANNEL)
    z, _ = ch.sample(code.encode(i)[None, :], rng)
    return code.decode(z[0])


def _rate_check(n_bins: int, n: int, budget: float | None) -> None:
    if budget is not None and math.log2(n_bins) / n > budget:
        warnings.warn(
            f"bin rate log2({n_bins})/{n} = {math.log2(n_bins) / n:.4g} exceeds the channel budget {budget:.4g}",
            RuntimeWarning,
            stacklevel=3,
        )


def decode_batch(y: np.ndarray, bins: np.ndarray, cb: Codebook, delta: float) -> np.ndarray:
    """Key index at Bob for each row of ``y`` and received bin."""
    typ = _typical_with(cb.flat(), y, cb.puy, delta).reshape(-1, cb.n1, cb.n2)
    bins = np.asarray(bins)
    out = np.full(bins.shape, cb.fallback)
    valid = (bins >= 1) & (bins <= cb.n1)
    rows = typ[np.flatnonzero(valid), bins[valid] - 1]  # (V, N2)
    unique = rows.sum(axis=1) == 1
    out[np.flatnonzero(valid)[unique]] = (bins[valid][unique] - 1) * cb.n2 + np.argmax(rows[unique], axis=1)
    return out


def decode_psi(y, i_tilde: int, cb: Codebook, delta: float = DEFAULT_DELTA) -> int:
    """Unique word of row ``i_tilde`` jointly typical with ``y``; ``u0``
    when there is none, several, or ``i_tilde = N1 + 1``."""
    return int(decode_batch(np.asarray(y)[None, :], np.array([i_tilde]), cb, delta)[0])


# ---------------------------------------------------------------------------
# end-to-end simulation


def miller_madow_entropy(counts: np.ndarray) -> tuple[float, float]:
    """Bias-corrected plug-in entropy (bits) and its delta-method standard error."""
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    p = counts[counts > 0] / total
    logp = np.log2(p)
    plug = float(-(p * logp).sum())
    corrected = plug + (p.size - 1) / (2 * total * math.log(2))
    var = max(0.0, float((p * logp**2).sum()) - plug**2) / total
    return corrected, math.sqrt(var)


@dataclass
class ProtocolResult:
    p_disagree: float
    p_disagree_half_width: float
    entropy_rate: float
    entropy_rate_half_width: float
    uniformity_gap: float
    cardinality_rate: float
    key_size: int
    n1: int
    n2: int
    trials: int
    events: dict
    checks: dict
    warnings: list = field(default_factory=list)
    event_rows: list | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "p_disagree": self.p_disagree,
            "p_disagree_half_width": self.p_disagree_half_width,
            "entropy_rate": self.entropy_rate,
            "entropy_rate_half_width": self.entropy_rate_half_width,
            "uniformity_gap": self.uniformity_gap,
            "uniformity_gap_half_width": self.entropy_rate_half_width,
            "cardinality_rate": self.cardinality_rate,
            "key_size": self.key_size,
            "N1": self.n1,
            "N2": self.n2,
            "trials": self.trials,
            "events": self.events,
            "checks": self.checks,
            "warnings": self.warnings,
        }

    def event_csv(self) -> str:
        head = "trial,bin_sent,bin_decoded,K_index,L_index,encode_fail,typ_fail,row_collision,channel_error\n"
        return head + "".join(",".join(str(int(v)) for v in row) + "\n" for row in self.event_rows or [])


def _transmission_code(cfg: ProtocolConfig, n_bins: int) -> TransmissionCode:
    ch = cfg.ch
    tx_n = cfg.tx_n or cfg.n
    pmf = cfg.tx_input if cfg.tx_input is not None else np.full(ch.input_alphabet, 1.0 / ch.input_alphabet)
    return build_random_code(ch, tx_n, n_bins, pmf, cfg.seed)


def run_protocol(
    cfg: ProtocolConfig,
    cb: Codebook | None = None,
    transmitter: Transmitter | None = None,
    batch: int = 512,
) -> ProtocolResult:
    """Monte Carlo estimate of agreement, entropy and uniformity.

    Parameters
    ----------
    cfg : ProtocolConfig
    cb : Codebook, optional
        Built from ``cfg`` when omitted.
    transmitter : callable, optional
        ``(i, rng) -> i_tilde`` replacing the coded channel.
    batch : int
        Trials per vectorized block; does not affect results.
    """
    cb = build_codebook(cfg) if cb is None else cb
    n_bins = cb.n1 + 1
    caught = []
    if transmitter is None:
        code = _transmission_code(cfg, n_bins)
        with warnings.catch_warnings(record=True) as w:
            warnings.simplefilter("always")
            _rate_check(n_bins, code.n, cfg.rate_budget)
        caught += [str(x.message) for x in w]
    cols = {k: np.empty(cfg.trials, dtype=np.int64) for k in ("k", "l", "i", "it")}
    flags = {k: np.zeros(cfg.trials, dtype=bool) for k in ("encode_fail", "typ_fail", "row_collision", "channel_error")}

    for lo in range(0, cfg.trials, batch):
        ids = range(lo, min(cfg.trials, lo + batch))
        pairs = [sample_pair(cfg.src, cfg.n, cfg.seed, t) for t in ids]
        x = np.stack([p[0] for p in pairs])
        y = np.stack([p[1] for p in pairs])
        k = encode_batch(x, cb, cfg.delta)
        i = _bin_of_key(k, cb)
        if transmitter is None:
            t_blocks = code.codewords[i - 1]
            z = np.stack([cfg.ch.sample(t_blocks[r][None, :], trial_rng(cfg.seed, STREAM_CHANNEL, t))[0][0] for r, t in enumerate(ids)])
            it = code.decode_batch(z)
        else:
            it = np.array([int(transmitter(int(ii), trial_rng(cfg.seed, STREAM_CHANNEL, t))) for ii, t in zip(i, ids)])
        key_l = decode_batch(y, it, cb, cfg.delta)

        # event accounting against Bob's view of the word Alice chose
        typ_y = _typical_with(cb.flat(), y, cb.puy, cfg.delta).reshape(-1, cb.n1, cb.n2)
        sent = k != cb.fallback
        rows = np.where(sent, i - 1, 0)
        row_typ = typ_y[np.arange(k.size), rows]
        own = np.where(sent, row_typ[np.arange(k.size), np.where(sent, k % cb.n2, 0)], True)
        others = row_typ.sum(axis=1) - own.astype(int)
        sl = slice(lo, lo + k.size)
        cols["k"][sl], cols["l"][sl], cols["i"][sl], cols["it"][sl] = k, key_l, i, it
        flags["encode_fail"][sl] = ~sent
        flags["typ_fail"][sl] = sent & ~own
        flags["row_collision"][sl] = sent & (others > 0)
        flags["channel_error"][sl] = it != i

    disagree = cols["k"] != cols["l"]
    explained = flags["typ_fail"] | flags["row_collision"] | flags["channel_error"]
    if np.any(disagree & ~explained):
        raise AssertionError("disagreement without a typicality failure, row collision or channel error")

    trials = cfg.trials
    p_dis = float(disagree.mean())
    half = 1.96 * math.sqrt(p_dis * (1 - p_dis) / trials)
    h_k, se = miller_madow_entropy(np.bincount(cols["k"], minlength=cb.key_size))
    card_rate = math.log2(cb.key_size) / cfg.n
    rate = float(h_k / cfg.n)
    gap = float(abs(rate - card_rate))
    if trials < 30 * cb.key_size:
        caught.append(f"{trials} trials < 30*|K| = {30 * cb.key_size}: entropy and uniformity estimates are unreliable")
    events = {k: float(v.mean()) for k, v in flags.items()}
    events["disagree"] = p_dis
    # source-side failure rate of this codebook realization (channel excluded)
    events["zeta_hat"] = float((flags["typ_fail"] | flags["row_collision"]).mean())
    checks = {
        "agreement": bool(p_dis <= cfg.epsilon),
        "cardinality": bool(card_rate <= cfg.c),
        "uniformity": bool(gap <= cfg.beta),
        "entropy": bool(rate > cfg.entropy_target - cfg.entropy_slack),
    }
    rows = None
    if cfg.event_log:
        rows = np.column_stack(
            [np.arange(trials), cols["i"], cols["it"], cols["k"], cols["l"]] + [flags[k] for k in ("encode_fail", "typ_fail", "row_collision", "channel_error")]
        ).tolist()
    for msg in caught:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return ProtocolResult(p_dis, half, rate, 1.96 * se / cfg.n, gap, card_rate, cb.key_size, cb.n1, cb.n2, trials, events, checks, caught, rows)


def fixed_transmitter(value: int) -> Transmitter:
    """Transmitter that ignores its input and always delivers ``value``."""
    return lambda i, rng: value


__all__ = [
    "Codebook",
    "codebook_sizes",
    "ProtocolConfig",
    "ProtocolResult",
    "build_codebook",
    "encode_phi",
    "bin_index",
    "transmit_index",
    "decode_psi",
    "run_protocol",
    "miller_madow_entropy",
    "fixed_transmitter",
]

"""Channel families, information density and its empirical spectrum.

The normalized information density of an input/output block pair is

    (1/n) i(t^n; z^n) = (1/n) log2 W_n(z^n | t^n) / P_{Z^n}(z^n),

and the spectrum is the law of this quantity under the joint input/output
distribution. ``estimate_spectrum`` samples it per blocklength;
``thresholds_from_spectrum`` inverts the empirical CDF of the largest
blocklength into the strict / non-strict thresholds (l_hat, u_hat).
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._util import (
    STREAM_CHANNEL,
    STREAM_SPECTRUM,
    STREAM_TXCODE,
    categorical,
    check_pmf,
    check_stochastic,
    conditional_draw,
    fmt,
    log2_or_neginf,
    trial_rng,
)
from .infotheory import blahut_arimoto, mutual_information

MAX_CODE_MESSAGES = 4096
SPECTRUM_CHUNK = 250
_GATHER_BUDGET = 4_000_000


class ZeroProbabilityError(ValueError):
    """Raised when an input block has zero probability under the input process."""


def bsc(p: float) -> np.ndarray:
    return np.array([[1 - p, p], [p, 1 - p]], dtype=float)


def noiseless(k: int = 2) -> np.ndarray:
    return np.eye(k)


def _seq_index(seqs: np.ndarray, base: int) -> np.ndarray:
    """Flat index of sequences along the last axis (first symbol most significant)."""
    seqs = np.asarray(seqs, dtype=np.int64)
    n = seqs.shape[-1]
    weights = base ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return seqs @ weights


def _index_seq(idx: np.ndarray, base: int, n: int) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.int64)
    weights = base ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return (idx[..., None] // weights) % base


# ---------------------------------------------------------------------------
# input processes


@dataclass(frozen=True, eq=False)
class IID:
    """I.i.d. input process with single-letter pmf ``pmf``."""

    pmf: np.ndarray

    def __post_init__(self):
        p = check_pmf(np.array(self.pmf, dtype=float).ravel(), "input pmf")
        object.__setattr__(self, "pmf", p)

    @property
    def alphabet(self) -> int:
        return self.pmf.size

    def coordinate_pmfs(self, n: int) -> np.ndarray:
        return np.tile(self.pmf, (n, 1))

    def to_dict(self) -> dict:
        return {"type": "iid", "pmf": self.pmf.tolist()}


@dataclass(frozen=True, eq=False)
class PerN:
    """Independent, non-identical inputs: ``pmfs[n]`` is an (n, |T|) matrix
    whose row ``i`` is the law of the ``i``-th input symbol at blocklength ``n``."""

    pmfs: dict

    def __post_init__(self):
        clean = {}
        for n, m in self.pmfs.items():
            m = check_stochastic(np.atleast_2d(np.asarray(m, dtype=float)), f"input pmfs for n={n}")
            if m.shape[0] != int(n):
                raise ValueError(f"input pmfs for n={n} must have {n} rows")
            clean[int(n)] = m
        if len({m.shape[1] for m in clean.values()}) > 1:
            raise ValueError("inconsistent input alphabet across blocklengths")
        object.__setattr__(self, "pmfs", clean)

    @property
    def alphabet(self) -> int:
        return next(iter(self.pmfs.values())).shape[1]

    def coordinate_pmfs(self, n: int) -> np.ndarray:
        if n not in self.pmfs:
            raise ValueError(f"input process has no distribution for n={n}")
        return self.pmfs[n]

    def to_dict(self) -> dict:
        return {"type": "per_n", "pmfs": {str(n): m.tolist() for n, m in sorted(self.pmfs.items())}}


InputProcess = IID | PerN


def input_from_dict(d: dict) -> InputProcess:
    kind = d.get("type", "iid")
    if kind == "iid":
        return IID(d["pmf"])
    if kind == "uniform":
        k = int(d["alphabet"])
        return IID(np.full(k, 1.0 / k))
    if kind == "per_n":
        return PerN({int(n): m for n, m in d["pmfs"].items()})
    raise ValueError(f"unknown input process type {kind!r}")


def input_log_prob(inp: InputProcess, t: np.ndarray) -> np.ndarray:
    """log2 P_{T^n}(t^n) for blocks along the last axis."""
    t = np.asarray(t, dtype=np.int64)
    pm = inp.coordinate_pmfs(t.shape[-1])
    return _gather_coords(log2_or_neginf(pm), t).sum(-1)


def _gather_coords(table: np.ndarray, seqs: np.ndarray) -> np.ndarray:
    # table (n, k); seqs (..., n) -> table[i, seqs[..., i]]
    n = seqs.shape[-1]
    return table[np.arange(n), seqs]


def sample_input(inp: InputProcess, n: int, rng: np.random.Generator, size: int = 1) -> np.ndarray:
    pm = inp.coordinate_pmfs(n)
    if isinstance(inp, IID):
        return categorical(rng, inp.pmf, (size, n))
    cum = np.cumsum(pm, axis=1)
    u = rng.random((size, n))
    return (u[..., None] >= cum[:, :-1]).sum(-1)


# ---------------------------------------------------------------------------
# channels


class ChannelFamily:
    """Sequence of block kernels ``W_n(z^n | t^n)`` over finite alphabets."""

    input_alphabet: int
    output_alphabet: int

    def log_likelihood(self, t: np.ndarray, z: np.ndarray) -> np.ndarray:
        """log2 W_n(z | t) for broadcastable block arrays (blocks on the last axis)."""
        raise NotImplementedError

    def log_output_prob(self, z: np.ndarray, inp: InputProcess) -> np.ndarray:
        """log2 P_{Z^n}(z) when the input is ``inp``."""
        raise NotImplementedError

    def sample(self, t: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Outputs for a batch of input blocks ``t`` (B, n) and the index of
        the mixture component used for each block (0 when not a mixture)."""
        raise NotImplementedError

    def capacity_inputs(self) -> list[np.ndarray]:
        return []

    def to_dict(self) -> dict:
        raise NotImplementedError


class Memoryless(ChannelFamily):
    """``W_n = W^{x n}`` for a single-letter kernel ``W[t, z]``."""

    def __init__(self, kernel):
        self.kernel = check_stochastic(kernel)
        self.kernel.setflags(write=False)
        self.input_alphabet, self.output_alphabet = self.kernel.shape
        self._logk = log2_or_neginf(self.kernel)
        self._cum = np.cumsum(self.kernel, axis=1)

    def log_likelihood(self, t, z):
        return self._logk[np.asarray(t), np.asarray(z)].sum(-1)

    def _coord_output(self, inp: InputProcess, n: int) -> np.ndarray:
        return inp.coordinate_pmfs(n) @ self.kernel

    def log_output_prob(self, z, inp):
        z = np.asarray(z)
        return _gather_coords(log2_or_neginf(self._coord_output(inp, z.shape[-1])), z).sum(-1)

    def sample(self, t, rng):
        t = np.atleast_2d(t)
        return conditional_draw(rng, self._cum, t), np.zeros(t.shape[0], dtype=np.int64)

    def capacity_inputs(self):
        return [blahut_arimoto(self.kernel)[1]]

    def mutual_information(self, pmf) -> float:
        """Single-letter I(T;Z) for input pmf ``pmf``."""
        return mutual_information(np.asarray(pmf)[:, None] * self.kernel)

    def to_dict(self):
        return {"type": "memoryless", "kernel": self.kernel.tolist()}


class Mixed(ChannelFamily):
    """Per-block mixture: with probability ``alpha`` the whole block goes
    through ``kernel_a``, otherwise through ``kernel_b``."""

    def __init__(self, alpha: float, kernel_a, kernel_b):
        if not 0.0 < alpha < 1.0:
            raise ValueError("mixture weight must lie in (0, 1)")
        self.alpha = float(alpha)
        self.a = Memoryless(kernel_a)
        self.b = Memoryless(kernel_b)
        if self.a.kernel.shape != self.b.kernel.shape:
            raise ValueError("mixture components must share alphabets")
        self.input_alphabet, self.output_alphabet = self.a.kernel.shape
        self._logw = (math.log2(self.alpha), math.log2(1.0 - self.alpha))

    @property
    def components(self) -> tuple[Memoryless, Memoryless]:
        return self.a, self.b

    def log_likelihood(self, t, z):
        return np.logaddexp2(self._logw[0] + self.a.log_likelihood(t, z), self._logw[1] + self.b.log_likelihood(t, z))

    def log_output_prob(self, z, inp):
        return np.logaddexp2(self._logw[0] + self.a.log_output_prob(z, inp), self._logw[1] + self.b.log_output_prob(z, inp))

    def sample(self, t, rng):
        t = np.atleast_2d(t)
        comp = (rng.random(t.shape[0]) >= self.alpha).astype(np.int64)
        za, _ = self.a.sample(t, rng)
        zb, _ = self.b.sample(t, rng)
        return np.where(comp[:, None] == 0, za, zb), comp

    def capacity_inputs(self):
        return self.a.capacity_inputs() + self.b.capacity_inputs()

    def to_dict(self):
        return {"type": "mixed", "alpha": self.alpha, "kernel_a": self.a.kernel.tolist(), "kernel_b": self.b.kernel.tolist()}


class CustomPerN(ChannelFamily):
    """Explicit block kernels: ``kernels[n]`` has shape (|T|^n, |Z|^n), rows
    and columns indexed by sequences in lexicographic order."""

    def __init__(self, kernels: dict, input_alphabet: int, output_alphabet: int):
        self.input_alphabet = int(input_alphabet)
        self.output_alphabet = int(output_alphabet)
        self.kernels = {}
        for n, k in kernels.items():
            n = int(n)
            k = check_stochastic(k, f"kernel for n={n}")
            if k.shape != (self.input_alphabet**n, self.output_alphabet**n):
                raise ValueError(f"kernel for n={n} has shape {k.shape}")
            self.kernels[n] = k

    def _kernel(self, n: int) -> np.ndarray:
        if n not in self.kernels:
            raise ValueError(f"no kernel configured for blocklength {n}")
        return self.kernels[n]

    def log_likelihood(self, t, z):
        t, z = np.asarray(t), np.asarray(z)
        k = self._kernel(t.shape[-1])
        return log2_or_neginf(k[_seq_index(t, self.input_alphabet), _seq_index(z, self.output_alphabet)])

    def _input_block_pmf(self, inp: InputProcess, n: int) -> np.ndarray:
        p = np.ones(1)
        for row in inp.coordinate_pmfs(n):
            p = np.kron(p, row)
        return p

    def log_output_prob(self, z, inp):
        z = np.asarray(z)
        n = z.shape[-1]
        pz = self._input_block_pmf(inp, n) @ self._kernel(n)
        return log2_or_neginf(pz[_seq_index(z, self.output_alphabet)])

    def sample(self, t, rng):
        t = np.atleast_2d(t)
        n = t.shape[-1]
        cum = np.cumsum(self._kernel(n), axis=1)
        zi = conditional_draw(rng, cum, _seq_index(t, self.input_alphabet))
        return _index_seq(zi, self.output_alphabet, n), np.zeros(t.shape[0], dtype=np.int64)

    def to_dict(self):
        return {
            "type": "custom",
            "input_alphabet": self.input_alphabet,
            "output_alphabet": self.output_alphabet,
            "kernels": {str(n): k.tolist() for n, k in sorted(self.kernels.items())},
        }


def channel_from_dict(d: dict) -> ChannelFamily:
    """Build a channel from its JSON description (canonical or shorthand)."""
    kind = d.get("type")
    if kind == "memoryless":
        return Memoryless(d["kernel"])
    if kind == "bsc":
        return Memoryless(bsc(float(d["p"])))
    if kind == "noiseless":
        return Memoryless(noiseless(int(d.get("alphabet", 2))))
    if kind == "mixed":
        return Mixed(float(d["alpha"]), d["kernel_a"], d["kernel_b"])
    if kind == "mixed_bsc":
        return Mixed(float(d["alpha"]), bsc(float(d["p_a"])), bsc(float(d["p_b"])))
    if kind == "custom":
        return CustomPerN(d["kernels"], d["input_alphabet"], d["output_alphabet"])
    raise ValueError(f"unknown channel type {kind!r}")


def default_input_candidates(ch: ChannelFamily) -> list[IID]:
    """Uniform input plus the capacity-achieving input of each component."""
    k = ch.input_alphabet
    cands = [np.full(k, 1.0 / k)] + ch.capacity_inputs()
    out: list[IID] = []
    for p in cands:
        p = np.asarray(p, dtype=float)
        p = p / p.sum()
        if not any(np.allclose(p, q.pmf, atol=1e-9) for q in out):
            out.append(IID(p))
    return out


# ---------------------------------------------------------------------------
# information density


def density_batch(t: np.ndarray, z: np.ndarray, inp: InputProcess, ch: ChannelFamily) -> np.ndarray:
    """Normalized information density (bits/symbol) for blocks on the last axis.

    Pairs with ``W_n(z|t) = 0`` evaluate to ``-inf``.
    """
    t = np.asarray(t, dtype=np.int64)
    z = np.asarray(z, dtype=np.int64)
    n = t.shape[-1]
    with np.errstate(invalid="ignore"):
        num = ch.log_likelihood(t, z)
        den = ch.log_output_prob(z, inp)
        out = np.where(np.isneginf(num), -np.inf, num - den) / n
    return out


def information_density(t, z, inp: InputProcess, ch: ChannelFamily) -> float:
    """(1/n) i(t^n; z^n) in bits per symbol, evaluated exactly in the log domain.

    Raises ``ZeroProbabilityError`` when ``t`` has zero probability under
    ``inp``. When ``z`` is impossible given ``t`` the density is ``-inf``.
    """
    t = np.asarray(t, dtype=np.int64).ravel()
    z = np.asarray(z, dtype=np.int64).ravel()
    if t.shape != z.shape or t.size == 0:
        raise ValueError("t and z must be non-empty blocks of equal length")
    if np.isneginf(input_log_prob(inp, t)):
        raise ZeroProbabilityError("input block has zero probability")
    return float(density_batch(t, z, inp, ch))


def sample_densities(
    inp: InputProcess,
    ch: ChannelFamily,
    n: int,
    trials: int,
    seed: int,
    threads: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``trials`` joint blocks at blocklength ``n``.

    Returns the density of each trial (in trial order) and the mixture
    component that produced it. Trials are grouped in fixed chunks, each
    with its own stream, so the output does not depend on ``threads``.
    """

    def run_chunk(c: int):
        lo = c * SPECTRUM_CHUNK
        size = min(SPECTRUM_CHUNK, trials - lo)
        rng = trial_rng(seed, STREAM_SPECTRUM, n, c)
        t = sample_input(inp, n, rng, size)
        z, comp = ch.sample(t, rng)
        return density_batch(t, z, inp, ch), comp

    chunks = range(math.ceil(trials / SPECTRUM_CHUNK))
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(run_chunk, chunks))
    else:
        parts = [run_chunk(c) for c in chunks]
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


@dataclass
class SpectrumEstimate:
    """Sorted density samples per blocklength."""

    samples: dict
    trials: int

    @property
    def blocklengths(self) -> list[int]:
        return sorted(self.samples)

    def cdf(self, r: float, n: int | None = None) -> float:
        """Empirical P[(1/n) i <= r] at blocklength ``n`` (default: largest)."""
        s = self.samples[self.blocklengths[-1] if n is None else n]
        return float(np.searchsorted(s, r, side="right") / s.size)

    def cdf_limsup(self, r: float) -> float:
        """Max of the empirical CDFs of the two largest blocklengths."""
        return max(self.cdf(r, n) for n in self.blocklengths[-2:])

    def mean(self, n: int | None = None) -> float:
        return float(np.mean(self.samples[self.blocklengths[-1] if n is None else n]))

    def std(self, n: int | None = None) -> float:
        return float(np.std(self.samples[self.blocklengths[-1] if n is None else n], ddof=1))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("n,sample_value\n")
        for n in self.blocklengths:
            for v in self.samples[n]:
                buf.write(f"{n},{fmt(v)}\n")
        return buf.getvalue()


def _replace_overflow(values: np.ndarray) -> np.ndarray:
    finite = values[np.isfinite(values)]
    if np.any(np.isposinf(values)):
        sentinel = (finite.max() if finite.size else 0.0) + 1.0
        values = np.where(np.isposinf(values), sentinel, values)
    return values


def estimate_spectrum(
    inp: InputProcess,
    ch: ChannelFamily,
    blocklengths: Sequence[int],
    trials: int,
    seed: int,
    threads: int = 1,
) -> SpectrumEstimate:
    """Empirical spectrum of the normalized information density.

    Parameters
    ----------
    inp : IID or PerN
        Input process.
    ch : ChannelFamily
    blocklengths : sequence of int
    trials : int
        Samples per blocklength (at least 100).
    seed : int
    threads : int, optional
        Worker threads; results are identical for any value.

    Returns
    -------
    SpectrumEstimate
    """
    if trials < 100:
        raise ValueError("estimate_spectrum needs at least 100 trials")
    if not blocklengths:
        raise ValueError("need at least one blocklength")
    samples = {}
    for n in sorted(set(int(b) for b in blocklengths)):
        vals, _ = sample_densities(inp, ch, n, trials, seed, threads)
        samples[n] = np.sort(_replace_overflow(vals))
    return SpectrumEstimate(samples, trials)


def _snap(x: float) -> float:
    r = round(x)
    return float(r) if abs(x - r) < 1e-9 else x


def _quantile_pair(s: np.ndarray, lo: float, hi: float) -> tuple[float, float]:
    m = s.size
    # sup{R : F(R) < lo}: the ceil(lo m)-th order statistic
    k_lo = min(max(math.ceil(_snap(lo * m)) - 1, 0), m - 1)
    # sup{R : F(R) <= hi}: the (floor(hi m) + 1)-th order statistic
    k_hi = min(max(math.floor(_snap(hi * m)), 0), m - 1)
    return float(s[k_lo]), float(s[k_hi])


def thresholds_from_spectrum(
    est: SpectrumEstimate, epsilon: float, band: float = 0.0, limsup: str = "largest"
) -> tuple[float, float]:
    """Strict and non-strict spectrum thresholds at level ``epsilon``.

    ``l_hat = sup{R : F(R) < epsilon - band}`` and
    ``u_hat = sup{R : F(R) <= epsilon + band}``, where ``F`` is the empirical
    CDF of the largest blocklength (``limsup="largest"``) or the pointwise
    max over the two largest blocklengths (``limsup="top2"``). ``band``
    widens the levels to absorb Monte Carlo noise of the CDF; levels are
    clipped to the open unit interval, so the extreme order statistics
    are returned instead of -inf / +inf.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    if band < 0:
        raise ValueError("band must be non-negative")
    if limsup == "largest":
        ns = est.blocklengths[-1:]
    elif limsup == "top2":
        ns = est.blocklengths[-2:]
    else:
        raise ValueError(f"unknown limsup proxy {limsup!r}")
    pairs = [_quantile_pair(est.samples[n], epsilon - band, epsilon + band) for n in ns]
    # a pointwise max of CDFs is inverted by the min of the quantiles
    return min(p[0] for p in pairs), min(p[1] for p in pairs)


# ---------------------------------------------------------------------------
# transmission codes


@dataclass
class TransmissionCode:
    """Codebook with exact maximum-likelihood decoding over ``channel``.

    Messages are numbered 1..N; ``decode`` returns 0 only when the output
    is impossible under every codeword.
    """

    codewords: np.ndarray
    channel: ChannelFamily = field(repr=False)

    def __post_init__(self):
        self.codewords = np.atleast_2d(np.asarray(self.codewords, dtype=np.int64))

    @property
    def size(self) -> int:
        return self.codewords.shape[0]

    @property
    def n(self) -> int:
        return self.codewords.shape[1]

    def encode(self, message: int) -> np.ndarray:
        if not 1 <= message <= self.size:
            raise ValueError(f"message {message} outside 1..{self.size}")
        return self.codewords[message - 1]

    def decode_batch(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=np.int64))
        step = max(1, _GATHER_BUDGET // max(1, self.size * self.n))
        out = np.empty(z.shape[0], dtype=np.int64)
        for lo in range(0, z.shape[0], step):
            ll = self.channel.log_likelihood(self.codewords[None, :, :], z[lo : lo + step, None, :])
            best = np.argmax(ll, axis=1)  # first maximum: ties go to the lowest index
            reject = np.isneginf(ll[np.arange(best.size), best])
            out[lo : lo + step] = np.where(reject, 0, best + 1)
        return out

    def decode(self, z) -> int:
        return int(self.decode_batch(np.asarray(z)[None, :])[0])


def build_random_code(ch: ChannelFamily, n: int, num_messages: int, input_pmf, seed: int) -> TransmissionCode:
    """Random code with i.i.d. codewords and exact ML decoding."""
    if num_messages < 1:
        raise ValueError("num_messages must be >= 1")
    if num_messages > MAX_CODE_MESSAGES:
        raise ValueError(f"message budget exceeded: {num_messages} > {MAX_CODE_MESSAGES}")
    p = check_pmf(np.asarray(input_pmf, dtype=float).ravel(), "input pmf")
    rng = trial_rng(seed, STREAM_TXCODE, n, num_messages)
    return TransmissionCode(categorical(rng, p, (num_messages, n)), ch)


@dataclass(frozen=True)
class CodeErrorEstimate:
    max_error: float
    half_width: float
    average_error: float
    per_message: np.ndarray
    trials: int

    @property
    def worst_message(self) -> int:
        return int(np.argmax(self.per_message)) + 1


def measure_code_error(code: TransmissionCode, ch: ChannelFamily, trials: int, seed: int) -> CodeErrorEstimate:
    """Monte Carlo per-message error rates; the maximum with a 95% normal half-width."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    errs = np.zeros(code.size)
    for m in range(1, code.size + 1):
        rng = trial_rng(seed, STREAM_CHANNEL, m)
        t = np.tile(code.encode(m), (trials, 1))
        z, _ = ch.sample(t, rng)
        errs[m - 1] = np.count_nonzero(code.decode_batch(z) != m) / trials
    worst = float(errs.max())
    half = 1.96 * math.sqrt(worst * (1 - worst) / trials)
    return CodeErrorEstimate(worst, half, float(errs.mean()), errs, trials)

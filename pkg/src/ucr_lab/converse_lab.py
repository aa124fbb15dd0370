"""Exact, enumeration-based checks of the converse inequalities.

Block variables are represented by abstract finite index sets: an axis of
size ``|X|`` stands for all of ``X^n`` and ``n`` is only used to normalize
rates. Deterministic maps (``phi``: x -> k, ``lam``: x -> t,
``psi``: (y, z) -> k) are integer arrays.

Every ``*_check`` first enforces the hypotheses of the inequality it
verifies and raises :class:`HypothesisError` when one is violated, so a
returned ``passed = False`` on a gated input is a genuine defect.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._util import PMF_TOL, check_pmf
from .infotheory import conditional_entropy, conditional_mutual_information, entropy, relative_entropy

EXACT_TOL = 1e-9
MARKOV_TOL = 1e-10
MAX_ATOMS = 10_000


class HypothesisError(ValueError):
    """Input outside the hypotheses of the inequality being checked.

    ``failed`` lists the names of the violated hypotheses.
    """

    def __init__(self, failed: Sequence[str], detail: str = ""):
        self.failed = list(failed)
        super().__init__(f"hypothesis violated: {', '.join(self.failed)}" + (f" ({detail})" if detail else ""))


@dataclass(frozen=True)
class CheckResult:
    lhs: float
    rhs: float
    passed: bool
    info: dict | None = None

    def to_dict(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "pass": self.passed, **(self.info or {})}


# ---------------------------------------------------------------------------
# constants


@dataclass(frozen=True)
class ConverseConstants:
    epsilon: float
    beta: float
    c: float
    mu: float
    lam: float
    gamma: float
    kappa: float

    @property
    def chebyshev_ratio(self) -> float:
        """``4 lambda / gamma^2``."""
        return 4.0 * self.lam / self.gamma**2

    @property
    def in_b1(self) -> bool:
        return 0.0 < self.beta < 1.0 and self.epsilon < self.kappa + self.beta < 1.0

    @property
    def in_b2(self) -> bool:
        return 0.0 < self.lam < 1.0

    @property
    def admissible(self) -> bool:
        return self.in_b1 and self.in_b2

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "beta": self.beta,
            "c": self.c,
            "mu": self.mu,
            "lambda": self.lam,
            "gamma": self.gamma,
            "kappa": self.kappa,
            "in_B1": self.in_b1,
            "in_B2": self.in_b2,
            "admissible": self.admissible,
        }


def constants(epsilon: float, beta: float, c: float, mu: float = 0.0) -> ConverseConstants:
    """Derived converse constants.

    ``lambda = beta + 2 beta c + beta^2``,
    ``gamma = 2 sqrt(sqrt(lambda) / (1 - sqrt(epsilon)))`` and
    ``kappa = epsilon + 1 - (1 - 4 lambda / gamma^2)^2``.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    if beta <= 0 or c < 0:
        raise ValueError("need beta > 0 and c >= 0")
    lam = beta + 2 * beta * c + beta**2
    gamma = 2.0 * math.sqrt(math.sqrt(lam) / (1.0 - math.sqrt(epsilon)))
    kappa = epsilon + 1.0 - (1.0 - 4.0 * lam / gamma**2) ** 2
    return ConverseConstants(epsilon, beta, c, mu, lam, gamma, kappa)


# ---------------------------------------------------------------------------
# helpers


@dataclass(frozen=True, eq=False)
class DiscreteJoint:
    """Explicit pmf over a small product space, ``n`` for rate normalization."""

    pmf: np.ndarray
    n: int = 1

    def __post_init__(self):
        p = check_pmf(np.array(self.pmf, dtype=float), "joint pmf")
        if p.size > MAX_ATOMS:
            raise ValueError(f"{p.size} atoms exceeds the enumeration limit {MAX_ATOMS}")
        p.setflags(write=False)
        object.__setattr__(self, "pmf", p)

    def mass(self, mask) -> float:
        return float(self.pmf[np.asarray(mask, dtype=bool)].sum())


def change_of_measure(p: DiscreteJoint | np.ndarray, mask) -> DiscreteJoint:
    """Restriction of ``p`` to the event ``mask``, renormalized."""
    joint = p if isinstance(p, DiscreteJoint) else DiscreteJoint(p)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), joint.pmf.shape)
    ps = joint.mass(mask)
    if ps <= 0:
        raise HypothesisError(["P[S] > 0"], "event has zero probability")
    tilted = np.where(mask, joint.pmf, 0.0) / ps
    tilted /= tilted.sum()  # absorb rounding so the result is a pmf to 1e-12
    return DiscreteJoint(tilted, joint.n)


def divergence_identity(p: DiscreteJoint | np.ndarray, mask) -> CheckResult:
    """``D(P_tilde || P)`` against ``log2(1 / P[S])``."""
    joint = p if isinstance(p, DiscreteJoint) else DiscreteJoint(p)
    tilted = change_of_measure(joint, mask)
    lhs = relative_entropy(tilted.pmf, joint.pmf)
    rhs = -math.log2(joint.mass(mask))
    return CheckResult(lhs, rhs, abs(lhs - rhs) <= EXACT_TOL)


def _push_k(p_xyz: np.ndarray, phi: np.ndarray, n_keys: int | None = None) -> np.ndarray:
    """P(k, y, z) for ``k = phi(x)``."""
    phi = np.asarray(phi)
    n_keys = int(phi.max()) + 1 if n_keys is None else n_keys
    out = np.zeros((n_keys,) + p_xyz.shape[1:])
    np.add.at(out, phi, p_xyz)
    return out


def _log_inv(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return -np.log2(p)


def _cond_given_y(p_ky: np.ndarray) -> np.ndarray:
    py = p_ky.sum(axis=0, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(py > 0, p_ky / np.where(py > 0, py, 1.0), 0.0)


# ---------------------------------------------------------------------------
# variance lemma and the sets L, D


def finite_n_threshold(n: int, c: float) -> float:
    """Smallest beta for which the variance bound is guaranteed at ``n``:
    ``(1 + 4/e^2) / (n^2 ln^2 2) + 2 c / (n e ln 2)``."""
    ln2 = math.log(2.0)
    return (1.0 + 4.0 / math.e**2) / (n**2 * ln2**2) + 2.0 * c / (n * math.e * ln2)


def _variance_gate(p_k: np.ndarray, n: int, c: float, beta: float) -> list[str]:
    support = np.count_nonzero(p_k > 0)
    failed = []
    if p_k.size < 3:
        failed.append("|K| >= 3")
    if math.log2(p_k.size) > c * n + 1e-12:
        failed.append("cardinality: |K| <= 2^(cn)")
    if abs(entropy(p_k) / n - math.log2(p_k.size) / n) > beta + 1e-12:
        failed.append("uniformity: |H(K)/n - log|K|/n| <= beta")
    if support == 0:
        failed.append("pmf")
    return failed


def variance_bound_check(p_k, n: int, c: float, beta: float) -> CheckResult:
    """Exact ``var[(1/n) log 1/P_K(K)]`` against ``lambda(beta)``.

    Raises
    ------
    HypothesisError
        When ``|K| < 3`` or the cardinality / uniformity hypotheses fail.
    """
    p_k = check_pmf(np.asarray(p_k, dtype=float).ravel())
    failed = _variance_gate(p_k, n, c, beta)
    if failed:
        raise HypothesisError(failed)
    q = p_k[p_k > 0]
    s = -np.log2(q) / n
    mean = float(np.sum(q * s))
    var = max(0.0, float(np.sum(q * (s - mean) ** 2)))
    lam = beta + 2 * beta * c + beta**2
    info = {"finite_n_ok": beta >= finite_n_threshold(n, c), "finite_n_threshold": finite_n_threshold(n, c)}
    return CheckResult(var, lam, var <= lam, info)


def smallest_passing_n(p_k, c: float, beta: float, grid: Sequence[int] = tuple(range(1, 65))) -> int | None:
    """First ``n`` on ``grid`` where the hypotheses hold and the bound passes."""
    for n in grid:
        try:
            if variance_bound_check(p_k, n, c, beta).passed:
                return int(n)
        except HypothesisError:
            continue
    return None


def _require_variance(p_k: np.ndarray, n: int, consts: ConverseConstants) -> None:
    res = variance_bound_check(p_k, n, consts.c, consts.beta)
    if not res.passed:
        raise HypothesisError(["variance bound"], f"var {res.lhs:.4g} > lambda {res.rhs:.4g} at n={n}")


def set_L_mask(p_k: np.ndarray, n: int, gamma: float) -> np.ndarray:
    h = entropy(p_k)
    return _log_inv(p_k) / n >= h / n - gamma / 2


def set_L_mass(p_k, n: int, consts: ConverseConstants) -> CheckResult:
    """Mass of ``{k : (1/n) log 1/P_K(k) >= H(K)/n - gamma/2}`` against
    ``1 - 4 lambda / gamma^2``."""
    p_k = check_pmf(np.asarray(p_k, dtype=float).ravel())
    _require_variance(p_k, n, consts)
    mass = float(p_k[set_L_mask(p_k, n, consts.gamma)].sum())
    bound = 1.0 - consts.chebyshev_ratio
    return CheckResult(mass, bound, mass >= bound - EXACT_TOL)


def set_D_mask(p_ky: np.ndarray, n: int, gamma: float) -> np.ndarray:
    """``{(k, y) : (1/n) log 1/P(k|y) >= H(K|Y)/n - gamma}``."""
    h = conditional_entropy(p_ky, [0], [1])
    return _log_inv(_cond_given_y(p_ky)) / n >= h / n - gamma


def set_D_mass(p_ky, n: int, consts: ConverseConstants) -> CheckResult:
    """Mass of the set D with both the finite-n bound
    ``(1 - 2^{-n gamma/2})(1 - 4 lambda/gamma^2)`` (gated) and the limiting
    bound ``(1 - 4 lambda/gamma^2)^2`` (reported)."""
    p_ky = np.asarray(p_ky, dtype=float)
    check_pmf(p_ky, "P_KY")
    _require_variance(p_ky.sum(axis=1), n, consts)
    mass = float(p_ky[set_D_mask(p_ky, n, consts.gamma)].sum())
    finite = (1.0 - 2.0 ** (-n * consts.gamma / 2)) * (1.0 - consts.chebyshev_ratio)
    limit = (1.0 - consts.chebyshev_ratio) ** 2
    return CheckResult(mass, finite, mass >= finite - EXACT_TOL, {"limit_bound": limit, "limit_pass": mass >= limit - EXACT_TOL})


# ---------------------------------------------------------------------------
# entropy and rate inequalities on (X, Y, Z) instances under a tilted measure


def _check_deterministic_map(f: np.ndarray, size: int, name: str) -> np.ndarray:
    f = np.asarray(f, dtype=np.int64)
    if f.shape[0] != size or f.min() < 0:
        raise ValueError(f"{name} must map each of the {size} points to a non-negative index")
    return f


def _s3_mask(p_xyz: np.ndarray, phi: np.ndarray, n: int, gamma: float) -> np.ndarray:
    p_ky = _push_k(p_xyz, phi).sum(axis=2)
    d = set_D_mask(p_ky, n, gamma)
    return np.broadcast_to(d[phi][:, :, None], p_xyz.shape)


def density_table(p_xyz: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """``log2 P(z | t = lam(x)) / P(z)`` for every ``(x, y, z)`` (nan off support)."""
    p_tz = np.zeros((int(lam.max()) + 1, p_xyz.shape[2]))
    np.add.at(p_tz, lam, p_xyz.sum(axis=1))
    pt = p_tz.sum(axis=1, keepdims=True)
    pz = p_tz.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        dens = np.log2(p_tz / pt) - np.log2(pz)[None, :]
    out = np.broadcast_to(dens[lam][:, None, :], p_xyz.shape)
    return np.where(p_xyz > 0, out, np.nan)


def markov_gap(p_xyz: np.ndarray, lam: np.ndarray) -> float:
    """``I(Z; X, Y | T)`` with ``T = lam(X)``; zero iff the output depends on
    the rest only through the channel input."""
    nt = int(lam.max()) + 1
    p = np.zeros((nt,) + p_xyz.shape)
    p[lam, np.arange(p_xyz.shape[0])] = p_xyz
    return conditional_mutual_information(p, [3], [1, 2], [0])


def _gate(p_xyz, S, beta, required: dict[str, np.ndarray]) -> tuple[np.ndarray, float]:
    S = np.broadcast_to(np.asarray(S, dtype=bool), p_xyz.shape)
    on = S & (p_xyz > 0)
    failed = [name for name, mask in required.items() if np.any(on & ~mask)]
    ps = float(p_xyz[S].sum())
    if ps < beta:
        failed.append("P[S] >= beta")
    if failed:
        raise HypothesisError(failed, f"P[S]={ps:.4g}")
    return S, ps


def lemma3_check(p_xyz, phi, S, consts: ConverseConstants, n: int) -> CheckResult:
    """``H(K|Y) <= n gamma + log 1/beta + H(K~|Y~)`` for ``K = phi(X)``.

    Hypotheses: ``S`` inside ``S3 = {(phi(x), y) in D}`` and ``P[S] >= beta``.
    """
    p_xyz = check_pmf(np.asarray(p_xyz, dtype=float), "P_XYZ")
    phi = _check_deterministic_map(phi, p_xyz.shape[0], "phi")
    S, ps = _gate(p_xyz, S, consts.beta, {"S inside S3": _s3_mask(p_xyz, phi, n, consts.gamma)})
    p_ky = _push_k(p_xyz, phi).sum(axis=2)
    tilted = change_of_measure(p_xyz, S).pmf
    q_ky = _push_k(tilted, phi, p_ky.shape[0]).sum(axis=2)
    lhs = conditional_entropy(p_ky, [0], [1])
    rhs = n * consts.gamma + math.log2(1 / consts.beta) + conditional_entropy(q_ky, [0], [1])
    return CheckResult(lhs, rhs, lhs <= rhs + EXACT_TOL, {"P_S": ps})


def _require_markov(p_xyz, lam):
    gap = markov_gap(p_xyz, lam)
    if gap > MARKOV_TOL:
        raise HypothesisError(["Markov: Z depends on (X, Y) only through T"], f"I(Z;X,Y|T)={gap:.3g}")


def lemma4_check(p_xyz, phi, lam, S, consts: ConverseConstants, rate_cap: float, n: int) -> CheckResult:
    """``(1/n) I(K~; Z~ | Y~) <= R + mu + (1/n) log 1/beta``.

    ``R = rate_cap`` stands in for the supremum rate. Hypotheses: Markov
    factorization through ``T = lam(X)``, ``S`` inside
    ``S1 = {density / n <= R + mu}`` and ``P[S] >= beta``.
    """
    p_xyz = check_pmf(np.asarray(p_xyz, dtype=float), "P_XYZ")
    phi = _check_deterministic_map(phi, p_xyz.shape[0], "phi")
    lam = _check_deterministic_map(lam, p_xyz.shape[0], "lam")
    _require_markov(p_xyz, lam)
    s1 = density_table(p_xyz, lam) / n <= rate_cap + consts.mu + 1e-12
    S, ps = _gate(p_xyz, S, consts.beta, {"S inside S1": s1})
    q_kyz = _push_k(change_of_measure(p_xyz, S).pmf, phi)
    lhs = conditional_mutual_information(q_kyz, [0], [2], [1]) / n
    rhs = rate_cap + consts.mu + math.log2(1 / consts.beta) / n
    return CheckResult(lhs, rhs, lhs <= rhs + EXACT_TOL, {"P_S": ps})


def zeta(n: int, consts: ConverseConstants) -> float:
    """``mu + gamma + (2/n) log 1/beta``."""
    return consts.mu + consts.gamma + 2.0 * math.log2(1 / consts.beta) / n


def claim1_check(p_xyz, phi, lam, psi, S, consts: ConverseConstants, rate_cap: float, n: int) -> CheckResult:
    """``H(K|Y)/n <= R + zeta`` on ``S`` inside ``S1 & S2 & S3``."""
    p_xyz = check_pmf(np.asarray(p_xyz, dtype=float), "P_XYZ")
    phi = _check_deterministic_map(phi, p_xyz.shape[0], "phi")
    lam = _check_deterministic_map(lam, p_xyz.shape[0], "lam")
    psi = np.asarray(psi, dtype=np.int64)
    _require_markov(p_xyz, lam)
    s1 = density_table(p_xyz, lam) / n <= rate_cap + consts.mu + 1e-12
    s2 = phi[:, None, None] == psi[None, :, :]
    s3 = _s3_mask(p_xyz, phi, n, consts.gamma)
    S, ps = _gate(p_xyz, S, consts.beta, {"S inside S1": s1, "S inside S2": s2, "S inside S3": s3})
    p_ky = _push_k(p_xyz, phi).sum(axis=2)
    lhs = conditional_entropy(p_ky, [0], [1]) / n
    rhs = rate_cap + zeta(n, consts)
    return CheckResult(lhs, rhs, lhs <= rhs + EXACT_TOL, {"P_S": ps})


# ---------------------------------------------------------------------------
# single-letterization


def _split_axes(n: int):
    xs = list(range(2, 2 + n))
    ys = list(range(2 + n, 2 + 2 * n))
    return xs, ys


def _single_letter_joint(p: np.ndarray, s_axes: Sequence[int], keep_axes: Sequence[int], n: int, x0: int, y0: int) -> np.ndarray:
    """Joint of ``(S, V, X_J, Y_J)`` with ``V = (J, X_<J, Y_>J, keep)``,
    flattened to a 4-D array with one axis per group.

    Built by explicit enumeration of atoms, independent of the chain rule.
    """
    s_shape = [p.shape[a] for a in s_axes]
    ns = int(np.prod(s_shape)) if s_axes else 1
    nx, ny = p.shape[x0], p.shape[y0]
    v_index: dict = {}
    entries = []
    for idx in zip(*np.nonzero(p)):
        w = p[idx] / n
        s = np.ravel_multi_index([idx[a] for a in s_axes], s_shape) if s_axes else 0
        for j in range(n):
            v = (j, tuple(idx[x0 + i] for i in range(j)), tuple(idx[y0 + i] for i in range(j + 1, n)), tuple(idx[a] for a in keep_axes))
            vi = v_index.setdefault(v, len(v_index))
            entries.append((s, vi, idx[x0 + j], idx[y0 + j], w))
    out = np.zeros((ns, max(1, len(v_index)), nx, ny))
    for s, vi, xj, yj, w in entries:
        out[s, vi, xj, yj] += w
    return out


def telescoping_identity(joint, n: int) -> tuple[float, float, float]:
    """Three evaluations of ``I(S; X^n | R) - I(S; Y^n | R)``.

    ``joint`` has axes ``(S, R, X_1..X_n, Y_1..Y_n)``. Returns the direct
    difference, the telescoped per-coordinate sum, and ``n`` times the
    single-letter form with a uniform time-sharing index.
    """
    p = check_pmf(np.asarray(joint, dtype=float), "joint")
    if p.ndim != 2 + 2 * n:
        raise ValueError(f"expected {2 + 2 * n} axes, got {p.ndim}")
    xs, ys = _split_axes(n)
    direct = conditional_mutual_information(p, [0], xs, [1]) - conditional_mutual_information(p, [0], ys, [1])
    tele = 0.0
    for i in range(n):
        given = xs[:i] + ys[i + 1 :] + [1]
        tele += conditional_mutual_information(p, [0], [xs[i]], given) - conditional_mutual_information(p, [0], [ys[i]], given)
    q = _single_letter_joint(p, [0], [1], n, 2, 2 + n)
    j_form = n * (conditional_mutual_information(q, [0], [2], [1]) - conditional_mutual_information(q, [0], [3], [1]))
    return direct, tele, j_form


def _iid_pairs_gap(p_xy_blocks: np.ndarray, n: int) -> float:
    """Max deviation of the ``(X^n, Y^n)`` law from the product of its
    first-coordinate pair marginal."""
    xs, ys = list(range(n)), list(range(n, 2 * n))
    order = [a for pair in zip(xs, ys) for a in pair]
    paired = np.transpose(p_xy_blocks, order)
    first = paired.sum(axis=tuple(range(2, 2 * n)))
    prod = first
    for _ in range(n - 1):
        prod = np.multiply.outer(prod, first)
    return float(np.abs(prod - paired).max())


def single_letterize(joint, n: int) -> tuple[float, float, float, float]:
    """Single-letter quantities for ``K = phi(X^n)`` with
    ``U = (K, X_<J, Y_>J, J)``.

    Parameters
    ----------
    joint : ndarray
        Axes ``(K, X_1..X_n, Y_1..Y_n)``; the pairs ``(X_i, Y_i)`` must be
        i.i.d. and ``K`` a function of ``X^n``.

    Returns
    -------
    (H(K), n I(U;X_J), H(K|Y^n), n [I(U;X_J) - I(U;Y_J)])
    """
    p = check_pmf(np.asarray(joint, dtype=float), "joint")
    if p.ndim != 1 + 2 * n:
        raise ValueError(f"expected {1 + 2 * n} axes, got {p.ndim}")
    xs = list(range(1, 1 + n))
    ys = list(range(1 + n, 1 + 2 * n))
    p_kx = p.sum(axis=tuple(ys))
    if np.any(np.count_nonzero(p_kx > 0, axis=0) > 1):
        raise HypothesisError(["K is a function of X^n"])
    if _iid_pairs_gap(p.sum(axis=0), n) > PMF_TOL * 10:
        raise HypothesisError(["(X_i, Y_i) i.i.d."])
    h_k = entropy(p.sum(axis=tuple(xs + ys)))
    h_k_y = conditional_entropy(p, [0], ys)
    # U = (K, V): flatten (K, V) into one axis
    q = _single_letter_joint(p[:, None], [0], [], n, 2, 2 + n)
    u = q.reshape(-1, q.shape[2], q.shape[3])
    i_ux = conditional_mutual_information(u, [0], [1])
    i_uy = conditional_mutual_information(u, [0], [2])
    out = (h_k, n * i_ux, h_k_y, n * (i_ux - i_uy))
    if out[0] > out[1] + EXACT_TOL or abs(out[3] - out[2]) > EXACT_TOL:
        raise AssertionError(f"single-letter identities violated: {out}")
    return out


# ---------------------------------------------------------------------------
# random gated fixtures


def random_variance_fixture(rng: np.random.Generator) -> dict:
    """Random ``(p_k, n, c, beta)`` inside the regime where the variance
    bound is guaranteed (hypotheses plus the explicit finite-n condition)."""
    size = int(rng.integers(3, 7))
    n = int(rng.integers(6, 21))
    p_k = rng.dirichlet(np.full(size, 2.0))
    c = math.log2(size) / n * float(rng.uniform(1.0, 3.0))
    gap = abs(entropy(p_k) - math.log2(size)) / n
    beta = max(gap, finite_n_threshold(n, c)) * float(rng.uniform(1.0, 1.5))
    return {"p_k": p_k, "n": n, "c": c, "beta": beta}


def random_constants(rng: np.random.Generator, c: float, beta: float) -> ConverseConstants:
    return constants(float(rng.uniform(0.05, 0.6)), beta, c, float(rng.uniform(0.0, 0.1)))


def random_D_fixture(rng: np.random.Generator) -> dict:
    base = random_variance_fixture(rng)
    ny = int(rng.integers(2, 5))
    p_k = base["p_k"]
    p_y_given_k = rng.dirichlet(np.ones(ny), size=p_k.size)
    return {**base, "p_ky": p_k[:, None] * p_y_given_k, "consts": random_constants(rng, base["c"], base["beta"])}


def random_xyz(rng: np.random.Generator, nx=None, ny=None, nz=None, nt=None, nk=None) -> dict:
    """Random factorized instance ``P(x, y) W(z | lam(x))`` with maps."""
    nx = nx or int(rng.integers(3, 7))
    ny = ny or int(rng.integers(2, 4))
    nz = nz or int(rng.integers(2, 4))
    nt = nt or int(rng.integers(2, 4))
    nk = nk or int(rng.integers(2, 4))
    p_xy = rng.dirichlet(np.ones(nx * ny)).reshape(nx, ny)
    lam = rng.integers(0, nt, size=nx)
    w = rng.dirichlet(np.ones(nz), size=nt)
    phi = rng.integers(0, nk, size=nx)
    p_xyz = p_xy[:, :, None] * w[lam][:, None, :]
    return {"p_xyz": p_xyz / p_xyz.sum(), "lam": lam, "phi": phi, "w": w}


def _subsample(rng, mask, keep=0.85):
    return mask & (rng.random(mask.shape) < keep)


def random_lemma3_fixture(rng: np.random.Generator, max_tries: int = 200) -> dict:
    for _ in range(max_tries):
        inst = random_xyz(rng)
        n = int(rng.integers(1, 4))
        consts = constants(float(rng.uniform(0.05, 0.6)), float(rng.uniform(0.01, 0.2)), 1.0, 0.0)
        s3 = np.array(_s3_mask(inst["p_xyz"], inst["phi"], n, consts.gamma))
        S = _subsample(rng, s3)
        if inst["p_xyz"][S].sum() >= consts.beta:
            return {**inst, "S": S, "consts": consts, "n": n}
    raise RuntimeError("could not draw a gated conditional-entropy instance")


def random_lemma4_fixture(rng: np.random.Generator, max_tries: int = 200) -> dict:
    for _ in range(max_tries):
        inst = random_xyz(rng)
        n = int(rng.integers(1, 4))
        consts = constants(float(rng.uniform(0.05, 0.6)), float(rng.uniform(0.01, 0.2)), 1.0, float(rng.uniform(0.0, 0.1)))
        dens = density_table(inst["p_xyz"], inst["lam"]) / n
        finite = dens[np.isfinite(dens)]
        cap = float(np.quantile(finite, rng.uniform(0.4, 1.0))) - consts.mu
        s1 = np.nan_to_num(dens, nan=np.inf) <= cap + consts.mu + 1e-12
        S = _subsample(rng, s1)
        if inst["p_xyz"][S].sum() >= consts.beta:
            return {**inst, "S": S, "consts": consts, "n": n, "rate_cap": cap}
    raise RuntimeError("could not draw a gated rate instance")


def random_claim1_fixture(rng: np.random.Generator, max_tries: int = 500) -> dict:
    for _ in range(max_tries):
        inst = random_xyz(rng)
        n = int(rng.integers(1, 4))
        consts = constants(float(rng.uniform(0.05, 0.6)), float(rng.uniform(0.01, 0.1)), 1.0, float(rng.uniform(0.0, 0.1)))
        p_kyz = _push_k(inst["p_xyz"], inst["phi"])
        psi = np.argmax(p_kyz, axis=0)  # MAP guess of K from (y, z)
        dens = density_table(inst["p_xyz"], inst["lam"]) / n
        cap = float(np.nanmax(dens)) - consts.mu
        s1 = np.nan_to_num(dens, nan=np.inf) <= cap + consts.mu + 1e-12
        s2 = inst["phi"][:, None, None] == psi[None]
        s3 = np.array(_s3_mask(inst["p_xyz"], inst["phi"], n, consts.gamma))
        S = s1 & s2 & s3
        if inst["p_xyz"][S].sum() >= consts.beta:
            return {**inst, "psi": psi, "S": S, "consts": consts, "n": n, "rate_cap": cap}
    raise RuntimeError("could not draw a gated claim instance")


def random_telescoping_fixture(rng: np.random.Generator, n: int = 2) -> np.ndarray:
    shape = (2, 2) + (2,) * (2 * n)
    return rng.dirichlet(np.ones(int(np.prod(shape)))).reshape(shape)


def iid_block_joint(p_xy: np.ndarray, n: int) -> np.ndarray:
    """``P(x^n, y^n)`` with axes ``(X_1..X_n, Y_1..Y_n)`` for i.i.d. pairs."""
    paired = p_xy
    for _ in range(n - 1):
        paired = np.multiply.outer(paired, p_xy)
    order = [2 * i for i in range(n)] + [2 * i + 1 for i in range(n)]
    return np.transpose(paired, order)


def keyed_joint(p_xy: np.ndarray, n: int, phi: np.ndarray) -> np.ndarray:
    """Axes ``(K, X^n, Y^n)`` with ``K = phi[x^n]`` (``phi`` indexed by the
    row-major flat index of ``x^n``)."""
    blocks = iid_block_joint(p_xy, n)
    nx = p_xy.shape[0]
    nk = int(np.max(phi)) + 1
    out = np.zeros((nk,) + blocks.shape)
    for flat in range(nx**n):
        xi = np.unravel_index(flat, (nx,) * n)
        out[(int(phi[flat]),) + tuple(xi)] = blocks[tuple(xi)]
    return out


def random_single_letter_fixture(rng: np.random.Generator) -> tuple[np.ndarray, int]:
    n = int(rng.integers(1, 4))
    nx = 2 if n == 3 else int(rng.integers(2, 4))
    ny = 2 if n == 3 else int(rng.integers(2, 4))
    p_xy = rng.dirichlet(np.ones(nx * ny)).reshape(nx, ny)
    phi = rng.integers(0, int(rng.integers(1, 5)), size=nx**n)
    return keyed_joint(p_xy, n, phi), n


def random_measure_fixture(rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    shape = tuple(int(s) for s in rng.integers(2, 5, size=3))
    p = rng.dirichlet(np.ones(int(np.prod(shape)))).reshape(shape)
    while True:
        mask = rng.random(shape) < rng.uniform(0.1, 0.9)
        if p[mask].sum() > 0:
            return p, mask

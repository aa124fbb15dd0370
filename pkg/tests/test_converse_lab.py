import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ucr_lab.converse_lab import (
    DiscreteJoint,
    HypothesisError,
    change_of_measure,
    claim1_check,
    constants,
    divergence_identity,
    finite_n_threshold,
    keyed_joint,
    lemma3_check,
    lemma4_check,
    random_claim1_fixture,
    random_D_fixture,
    random_lemma3_fixture,
    random_lemma4_fixture,
    random_measure_fixture,
    random_single_letter_fixture,
    random_telescoping_fixture,
    random_variance_fixture,
    set_D_mask,
    set_D_mass,
    set_L_mask,
    set_L_mass,
    single_letterize,
    smallest_passing_n,
    telescoping_identity,
    variance_bound_check,
    zeta,
)
from ucr_lab.infotheory import entropy

RNG_SEEDS = range(100)


# ---------------------------------------------------------------- constants


def test_lambda_example():
    assert constants(0.1, 0.01, 1.0).lam == pytest.approx(0.0301, abs=1e-15)


@given(st.floats(0.001, 0.999), st.floats(1e-4, 2.0), st.floats(0.0, 5.0))
def test_chebyshev_ratio_identity(eps, beta, c):
    k = constants(eps, beta, c)
    assert k.chebyshev_ratio == pytest.approx(math.sqrt(k.lam) * (1 - math.sqrt(eps)), abs=1e-12)
    assert k.lam > 0 and k.gamma > 0


def test_ratio_example_used_for_positivity():
    # beta = 0.02, c = 0.49 gives lambda = 0.04 exactly
    k = constants(0.25, 0.02, 0.49)
    assert k.lam == pytest.approx(0.04, abs=1e-15)
    assert k.chebyshev_ratio == pytest.approx(0.1, abs=1e-12)
    assert k.chebyshev_ratio < 1 - math.sqrt(0.25)


def test_admissible_set_on_grid():
    for eps in np.linspace(0.05, 0.95, 10):
        for beta in np.linspace(0.005, 0.5, 10):
            k = constants(float(eps), float(beta), 1.0)
            lam = beta + 2 * beta + beta**2
            kappa = eps + 1 - (1 - math.sqrt(lam) * (1 - math.sqrt(eps))) ** 2
            assert k.kappa == pytest.approx(kappa, abs=1e-12)
            assert k.in_b1 == (0 < beta < 1 and eps < kappa + beta < 1)
            assert k.in_b2 == (0 < lam < 1)
            if k.admissible:
                assert eps < k.kappa + k.beta < 1


def test_constants_preconditions():
    for args in ((0.0, 0.1, 1.0), (1.0, 0.1, 1.0), (0.5, 0.0, 1.0), (0.5, 0.1, -1.0)):
        with pytest.raises(ValueError):
            constants(*args)


# ---------------------------------------------------------------- variance lemma


def test_variance_uniform_is_zero():
    res = variance_bound_check(np.full(4, 0.25), n=4, c=0.5, beta=0.01)
    assert res.lhs == pytest.approx(0.0, abs=1e-15) and res.passed


def test_variance_near_uniform_example():
    p = np.array([0.34, 0.33, 0.33])
    s = -np.log2(p) / 8
    var = float(np.sum(p * s**2) - np.sum(p * s) ** 2)
    res = variance_bound_check(p, n=8, c=0.2, beta=0.01)
    assert res.lhs == pytest.approx(var, abs=1e-15)
    assert res.rhs == pytest.approx(0.01 + 2 * 0.01 * 0.2 + 0.0001)
    assert res.passed


def test_variance_gates():
    with pytest.raises(HypothesisError) as e:
        variance_bound_check([0.98, 0.01, 0.01], n=2, c=1.0, beta=0.01)
    assert any("uniformity" in f for f in e.value.failed)
    with pytest.raises(HypothesisError) as e:
        variance_bound_check(np.full(8, 1 / 8), n=2, c=1.0, beta=0.5)
    assert any("cardinality" in f for f in e.value.failed)
    with pytest.raises(HypothesisError):
        variance_bound_check([0.5, 0.5], n=4, c=1.0, beta=0.5)


def test_variance_bound_in_guaranteed_regime():
    for seed in RNG_SEEDS:
        fx = random_variance_fixture(np.random.default_rng(seed))
        res = variance_bound_check(fx["p_k"], fx["n"], fx["c"], fx["beta"])
        assert res.info["finite_n_ok"] and res.passed


def test_finite_n_threshold_and_smallest_n():
    assert finite_n_threshold(10, 1.0) == pytest.approx(
        (1 + 4 / math.e**2) / (100 * math.log(2) ** 2) + 2 / (10 * math.e * math.log(2))
    )
    p = np.array([0.5, 0.3, 0.2])
    n = smallest_passing_n(p, c=1.0, beta=0.05)
    assert n is not None
    assert variance_bound_check(p, n, 1.0, 0.05).passed
    for m in range(1, n):
        try:
            assert not variance_bound_check(p, m, 1.0, 0.05).passed
        except HypothesisError:
            pass


# ---------------------------------------------------------------- sets L and D


def test_set_L_uniform_and_huge_gamma():
    k = constants(0.1, 0.05, 1.0)
    assert set_L_mass(np.full(4, 0.25), 2, k).lhs == pytest.approx(1.0)
    p = np.array([0.4, 0.3, 0.3])
    assert set_L_mask(p, 8, 1e6).all()


def test_set_L_bound_on_gated_pmfs():
    for seed in RNG_SEEDS:
        rng = np.random.default_rng(seed)
        fx = random_variance_fixture(rng)
        k = constants(float(rng.uniform(0.05, 0.6)), fx["beta"], fx["c"])
        res = set_L_mass(fx["p_k"], fx["n"], k)
        assert res.passed, (seed, res)


def test_set_L_requires_variance_gate():
    with pytest.raises(HypothesisError):
        set_L_mass([0.98, 0.01, 0.01], 2, constants(0.1, 0.01, 1.0))


def test_set_D_examples():
    k = constants(0.1, 0.05, 1.0)
    p_ky = np.full((4, 3), 1 / 12)  # K uniform and independent of Y
    assert set_D_mass(p_ky, 2, k).lhs == pytest.approx(1.0)
    p = np.array([0.4, 0.35, 0.25])
    # a point-mass Y turns D into the L-type set with gamma in place of gamma / 2
    assert np.array_equal(set_D_mask(p[:, None], 8, 0.3)[:, 0], set_L_mask(p, 8, 0.6))


def test_set_D_finite_n_bound_on_gated_joints():
    for seed in RNG_SEEDS:
        fx = random_D_fixture(np.random.default_rng(seed))
        res = set_D_mass(fx["p_ky"], fx["n"], fx["consts"])
        assert res.passed, seed


# ---------------------------------------------------------------- change of measure


def test_change_of_measure_examples():
    p = np.full((2, 2, 2), 1 / 8)
    assert np.allclose(change_of_measure(p, np.ones_like(p, bool)).pmf, p)
    half = np.zeros_like(p, bool)
    half[0] = True
    q = change_of_measure(p, half).pmf
    assert np.allclose(q[0], 1 / 4) and np.all(q[1] == 0)
    with pytest.raises(HypothesisError):
        change_of_measure(p, np.zeros_like(p, bool))


def test_divergence_identity_on_random_events():
    for seed in RNG_SEEDS:
        p, mask = random_measure_fixture(np.random.default_rng(seed))
        q = change_of_measure(p, mask).pmf
        assert np.all(q[~mask] == 0)
        direct = float(np.sum(q[q > 0] * np.log2(q[q > 0] / p[q > 0])))
        assert direct == pytest.approx(-math.log2(p[mask].sum()), abs=1e-12)
        assert divergence_identity(p, mask).passed


def test_discrete_joint_limits():
    with pytest.raises(ValueError):
        DiscreteJoint(np.full(10_001, 1 / 10_001))
    assert DiscreteJoint(np.array([0.2, 0.8])).mass([True, False]) == pytest.approx(0.2)


# ---------------------------------------------------------------- lemma checks


def test_lemma3_trivial_instance():
    rng = np.random.default_rng(0)
    p = rng.dirichlet(np.ones(12)).reshape(3, 2, 2)
    phi = np.array([0, 1, 1])
    k = constants(0.999, 0.5, 1.0)  # gamma so large that D is everything
    res = lemma3_check(p, phi, np.ones_like(p, bool), k, 2)
    assert res.passed and res.info["P_S"] == pytest.approx(1.0)


def test_lemma3_mass_gate():
    rng = np.random.default_rng(1)
    p = rng.dirichlet(np.ones(12)).reshape(3, 2, 2)
    S = np.zeros_like(p, bool)
    S[0, 0, 0] = True
    k = constants(0.999, 0.9, 1.0)
    with pytest.raises(HypothesisError) as e:
        lemma3_check(p, np.array([0, 1, 1]), S, k, 2)
    assert "P[S] >= beta" in e.value.failed


def test_lemma3_random_instances():
    for seed in RNG_SEEDS:
        fx = random_lemma3_fixture(np.random.default_rng(seed))
        assert lemma3_check(fx["p_xyz"], fx["phi"], fx["S"], fx["consts"], fx["n"]).passed


def test_lemma4_trivial_instance():
    # one channel input, so Z carries nothing about K
    p_xy = np.full((3, 2), 1 / 6)
    p = p_xy[:, :, None] * np.array([1.0, 0.0])[None, None, :]
    lam = np.zeros(3, dtype=int)
    k = constants(0.1, 0.05, 1.0)
    res = lemma4_check(p, np.array([0, 1, 2]), lam, np.ones_like(p, bool), k, 0.0, 2)
    assert res.lhs == pytest.approx(0.0, abs=1e-12) and res.passed


def test_lemma4_rejects_non_markov_joint():
    rng = np.random.default_rng(2)
    p = rng.dirichlet(np.ones(18)).reshape(3, 2, 3)
    with pytest.raises(HypothesisError) as e:
        lemma4_check(p, np.array([0, 1, 1]), np.zeros(3, int), np.ones_like(p, bool), constants(0.1, 0.05, 1.0), 5.0, 1)
    assert any("Markov" in f for f in e.value.failed)


def test_lemma4_random_instances():
    for seed in RNG_SEEDS:
        fx = random_lemma4_fixture(np.random.default_rng(seed))
        res = lemma4_check(fx["p_xyz"], fx["phi"], fx["lam"], fx["S"], fx["consts"], fx["rate_cap"], fx["n"])
        assert res.passed


def test_claim1_random_instances():
    for seed in RNG_SEEDS:
        fx = random_claim1_fixture(np.random.default_rng(seed))
        res = claim1_check(fx["p_xyz"], fx["phi"], fx["lam"], fx["psi"], fx["S"], fx["consts"], fx["rate_cap"], fx["n"])
        assert res.passed
        assert res.rhs == pytest.approx(fx["rate_cap"] + zeta(fx["n"], fx["consts"]))


def test_zeta_formula():
    k = constants(0.2, 0.1, 1.0, mu=0.03)
    assert zeta(4, k) == pytest.approx(0.03 + k.gamma + 0.5 * math.log2(10))


# ---------------------------------------------------------------- identities


def test_telescoping_degenerate_cases():
    rng = np.random.default_rng(3)
    p_s = rng.dirichlet(np.ones(2))
    rest = rng.dirichlet(np.ones(32)).reshape(2, 2, 2, 2, 2)
    indep = p_s[:, None, None, None, None, None] * rest[None]
    assert telescoping_identity(indep, 2) == pytest.approx((0, 0, 0), abs=1e-12)
    # X^n = Y^n coordinatewise
    same = np.zeros((2, 2, 2, 2, 2, 2))
    base = rng.dirichlet(np.ones(16)).reshape(2, 2, 2, 2)
    for x1 in range(2):
        for x2 in range(2):
            same[:, :, x1, x2, x1, x2] = base[:, :, x1, x2]
    assert telescoping_identity(same, 2) == pytest.approx((0, 0, 0), abs=1e-12)


def test_telescoping_random_joints():
    for seed in range(50):
        d, t, j = telescoping_identity(random_telescoping_fixture(np.random.default_rng(seed)), 2)
        assert abs(d - t) <= 1e-9 and abs(d - j) <= 1e-9


def test_telescoping_three_coordinates():
    d, t, j = telescoping_identity(random_telescoping_fixture(np.random.default_rng(7), n=3), 3)
    assert abs(d - t) <= 1e-9 and abs(d - j) <= 1e-9


def test_single_letterize_constant_key():
    p_xy = np.array([[0.4, 0.1], [0.1, 0.4]])
    out = single_letterize(keyed_joint(p_xy, 2, np.zeros(4, int)), 2)
    assert out == pytest.approx((0, 0, 0, 0), abs=1e-12)


def test_single_letterize_key_equal_to_x():
    p_xy = np.array([[0.3, 0.2], [0.1, 0.4]])
    h_k, n_iux, h_k_y, gap = single_letterize(keyed_joint(p_xy, 1, np.array([0, 1])), 1)
    assert h_k == pytest.approx(entropy(p_xy.sum(1)))
    assert n_iux == pytest.approx(h_k)
    assert gap == pytest.approx(h_k_y)


def test_single_letterize_dsbs_random_maps():
    p_xy = np.array([[0.4, 0.1], [0.1, 0.4]])
    rng = np.random.default_rng(5)
    for _ in range(20):
        phi = rng.integers(0, 3, size=4)
        h_k, n_iux, h_k_y, gap = single_letterize(keyed_joint(p_xy, 2, phi), 2)
        assert h_k <= n_iux + 1e-9 and abs(gap - h_k_y) <= 1e-9


def test_single_letterize_random_fixtures():
    for seed in RNG_SEEDS:
        joint, n = random_single_letter_fixture(np.random.default_rng(seed))
        h_k, n_iux, h_k_y, gap = single_letterize(joint, n)
        assert h_k <= n_iux + 1e-9 and abs(gap - h_k_y) <= 1e-9


def test_single_letterize_rejects_random_key():
    p_xy = np.array([[0.4, 0.1], [0.1, 0.4]])
    joint = keyed_joint(p_xy, 1, np.array([0, 1]))
    mixed = 0.5 * joint + 0.5 * joint[::-1]
    with pytest.raises(HypothesisError):
        single_letterize(mixed, 1)

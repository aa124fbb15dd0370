import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import h2
from ucr_lab.infotheory import (
    binary_convolution,
    binary_entropy,
    blahut_arimoto,
    conditional_entropy,
    conditional_mutual_information,
    entropy,
    mutual_information,
    relative_entropy,
)
from ucr_lab.spectrum import bsc


def _pmf(shape):
    # exact zeros or masses well above the subnormal range, where the direct-sum oracles stay finite
    cell = st.one_of(st.just(0.0), st.floats(1e-6, 1.0))
    return arrays(np.float64, shape, elements=cell).filter(lambda a: a.sum() > 1e-3).map(lambda a: a / a.sum())


def test_entropy_uniform():
    for k in (1, 2, 3, 8):
        assert entropy(np.full(k, 1 / k)) == pytest.approx(math.log2(k), abs=1e-12)


def test_zero_log_zero():
    assert entropy([1.0, 0.0, 0.0]) == 0.0
    assert binary_entropy(0.0) == 0.0


def test_binary_entropy_matches_formula():
    for p in (0.05, 0.11, 0.25, 0.5):
        assert binary_entropy(p) == pytest.approx(h2(p), abs=1e-14)


def test_mutual_information_examples():
    assert mutual_information(np.full((2, 2), 0.25)) == pytest.approx(0.0, abs=1e-15)
    assert mutual_information(np.eye(2) / 2) == pytest.approx(1.0)
    dsbs = np.array([[0.89, 0.11], [0.11, 0.89]]) / 2
    assert mutual_information(dsbs) == pytest.approx(1 - h2(0.11), abs=1e-12)
    assert mutual_information(dsbs) == pytest.approx(0.5001, abs=1e-4)


def test_binary_convolution():
    assert binary_convolution(0.2, 0.11) == pytest.approx(0.2 * 0.89 + 0.8 * 0.11)
    assert binary_convolution(0.0, 0.3) == pytest.approx(0.3)


@given(_pmf((2, 3, 2)))
def test_cmi_matches_direct_sum(p):
    # I(A;B|C) = sum p(a,b,c) log p(a,b,c) p(c) / (p(a,c) p(b,c))
    pc = p.sum(axis=(0, 1))
    pac = p.sum(axis=1)
    pbc = p.sum(axis=0)
    direct = 0.0
    for a, b, c in itertools.product(*map(range, p.shape)):
        if p[a, b, c] > 0:
            direct += p[a, b, c] * math.log2(p[a, b, c] * pc[c] / (pac[a, c] * pbc[b, c]))
    assert conditional_mutual_information(p, [0], [1], [2]) == pytest.approx(direct, abs=1e-10)


@given(_pmf((3, 4)))
def test_mi_chain_rule(p):
    assert mutual_information(p) == pytest.approx(entropy(p.sum(1)) - conditional_entropy(p, [0], [1]), abs=1e-10)
    assert mutual_information(p) >= -1e-12


def test_cmi_rejects_overlapping_groups():
    with pytest.raises(ValueError):
        conditional_mutual_information(np.full((2, 2), 0.25), [0], [0])


def test_relative_entropy():
    assert relative_entropy([0.5, 0.5], [0.5, 0.5]) == 0.0
    assert relative_entropy([0.5, 0.5], [1.0, 0.0]) == math.inf
    assert relative_entropy([1.0, 0.0], [0.5, 0.5]) == pytest.approx(1.0)


@pytest.mark.parametrize("p", [0.05, 0.11, 0.25])
def test_blahut_arimoto_bsc(p):
    cap, r = blahut_arimoto(bsc(p))
    assert cap == pytest.approx(1 - h2(p), abs=1e-9)
    assert r == pytest.approx([0.5, 0.5], abs=1e-6)


def test_blahut_arimoto_z_channel():
    q = 0.3
    z = np.array([[1.0, 0.0], [q, 1 - q]])
    cap, _ = blahut_arimoto(z)
    # closed form log2(1 + (1-q) q^{q/(1-q)})
    assert cap == pytest.approx(math.log2(1 + (1 - q) * q ** (q / (1 - q))), abs=1e-8)


def test_mi_finite_for_subnormal_cells():
    p = np.full((3, 4), 1e-180)
    p[0, 0] = 1.0 - p.sum() + 1e-180
    assert mutual_information(p) == pytest.approx(entropy(p.sum(1)) - conditional_entropy(p, [0], [1]), abs=1e-10)

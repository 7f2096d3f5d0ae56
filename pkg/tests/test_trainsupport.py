import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from linevec.geom import Curve, Line
from linevec.trainsupport import canonicalize, loss, targets_to_prims


def test_endpoint_sort():
    t = canonicalize([Line((10, 20), (5, 7), 2)], patch_size=64)
    assert np.allclose(t.params[0], [5 / 64, 7 / 64, 10 / 64, 20 / 64, 2 / 64])
    assert t.confidences.tolist() == [1.0] + [0.0] * 9


def test_empty_targets():
    t = canonicalize([])
    assert t.params.shape == (10, 5) and not t.params.any() and not t.confidences.any()


def test_overflow_and_mixed_kinds():
    with pytest.raises(ValueError):
        canonicalize([Line((0, 0), (1, 1), 1)] * 11)
    with pytest.raises(ValueError):
        canonicalize([Line((0, 0), (1, 1), 1), Curve((0, 0), (1, 2), (3, 0), 1)])


def _lines(rng, n):
    return [Line(*rng.uniform(0, 64, (2, 2)), rng.uniform(1, 4)) for _ in range(n)]


def test_idempotent_and_roundtrip(rng):
    for _ in range(20):
        t = canonicalize(_lines(rng, rng.integers(0, 11)))
        assert canonicalize(targets_to_prims(t)) == t
    c = canonicalize([Curve((40, 2), (12, 30), (3, 50), 2)])
    assert c.params.shape == (10, 7)
    assert canonicalize(targets_to_prims(c), kind="qbezier") == c


def test_placeholder_rows_are_zero_and_real_rows_sorted(rng):
    t = canonicalize(_lines(rng, 6))
    real = t.params[t.confidences == 1]
    assert not t.params[t.confidences == 0].any()
    assert [tuple(r) for r in real] == sorted(tuple(r) for r in real)
    for r in real:
        assert (r[0], r[1]) <= (r[2], r[3])


@given(st.integers(0, 10**6), st.randoms(use_true_random=False))
def test_shuffle_invariance(seed, rnd):
    rng = np.random.default_rng(seed)
    prims = _lines(rng, int(rng.integers(0, 11)))
    prims = [p.reversed() if rng.random() < 0.5 else p for p in prims]
    shuffled = list(prims)
    rnd.shuffle(shuffled)
    assert canonicalize(shuffled) == canonicalize(prims)


def test_loss_examples():
    t = canonicalize(_lines(np.random.default_rng(0), 3))
    eps = 1e-12
    perfect = np.where(t.confidences == 1, 1 - eps, eps)
    assert loss(perfect, t.confidences, t.params, t.params) < 1e-9
    exact = loss(t.confidences, t.confidences, t.params, t.params)
    assert exact == 0.0
    half = loss(np.array([0.5]), np.array([1.0]), np.zeros((1, 5)), np.zeros((1, 5)))
    assert half == pytest.approx(math.log(2))
    p = np.zeros((1, 5))
    p[0, 2] = 0.1
    off = loss(np.array([1.0]), np.array([1.0]), p, np.zeros((1, 5)), lam=1.0)
    assert off == pytest.approx(0.01)
    with pytest.raises(ValueError):
        loss(np.array([0.5]), np.array([1.0]), p, p, lam=1.5)


@given(
    st.lists(st.floats(1e-6, 1 - 1e-6), min_size=1, max_size=10),
    st.floats(0, 1),
    st.integers(0, 2**32 - 1),
)
def test_loss_nonnegative_and_permutation_invariant(conf, lam, seed):
    rng = np.random.default_rng(seed)
    n = len(conf)
    pc = np.array(conf)
    tc = (rng.random(n) < 0.5).astype(float)
    pp, tp = rng.random((n, 5)), rng.random((n, 5))
    val = loss(pc, tc, pp, tp, lam)
    assert val >= 0
    perm = rng.permutation(n)
    assert loss(pc[perm], tc[perm], pp[perm], tp[perm], lam) == pytest.approx(val)

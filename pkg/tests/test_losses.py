import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphstoiht.losses import (FULL, MU_THRESHOLD, BlockPartition, ContractionQuery, Instance,
                                LogisticParams, LossError, contraction_factor, logistic_condition,
                                logistic_value_grad, lsq_value_grad, theta_max)


def central_diff(f, x, h=1e-6):
    g = np.empty_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def _random_instance(rng, classification=False):
    m, p = int(rng.integers(3, 15)), int(rng.integers(2, 8))
    A = rng.normal(size=(m, p))
    y = np.sign(rng.normal(size=m)) if classification else rng.normal(size=m)
    y[y == 0] = 1.0
    return Instance(A, y, classification=classification)


def test_instance_validation():
    with pytest.raises(LossError):
        Instance(np.ones((3, 2)), np.ones(4))
    with pytest.raises(LossError, match="row 1"):
        Instance(np.ones((3, 2)), np.array([1.0, 0.0, -1.0]), classification=True)
    with pytest.raises(LossError):
        Instance(np.ones((3, 2)), np.ones(3), x_star=np.ones(3))


@pytest.mark.parametrize("m,b,n", [(180, 32, 5), (10, 3, 3), (5, 8, 1), (7, 7, 1), (8, 1, 8)])
def test_contiguous_partition(m, b, n):
    part = BlockPartition.contiguous(m, b)
    assert part.n == n
    rows = np.concatenate(part.blocks)
    assert np.array_equal(rows, np.arange(m))
    sizes = [len(r) for r in part.blocks]
    assert max(sizes) - min(sizes) <= 1
    assert part.row_weights().sum() == pytest.approx(1.0)


def test_partition_errors():
    with pytest.raises(LossError):
        BlockPartition.contiguous(5, 0)
    with pytest.raises(LossError):
        BlockPartition.single(4).rows(1)


@pytest.mark.parametrize("seed", range(20))
def test_lsq_gradient_fd(seed):
    rng = np.random.default_rng(seed)
    inst = _random_instance(rng)
    part = BlockPartition.contiguous(inst.m, 2)
    x = rng.normal(size=inst.p)
    for block in (FULL, 0, part.n - 1):
        _, g = lsq_value_grad(inst, part, block, x)
        fd = central_diff(lambda v: lsq_value_grad(inst, part, block, v)[0], x)
        assert np.allclose(g, fd, rtol=1e-6, atol=1e-8)


@pytest.mark.parametrize("seed", range(20))
def test_logistic_gradient_fd(seed):
    rng = np.random.default_rng(seed)
    inst = _random_instance(rng, classification=True)
    part = BlockPartition.contiguous(inst.m, 3)
    params = LogisticParams(lam=float(rng.uniform(0, 0.5)))
    x = rng.normal(size=inst.p)
    for block in (FULL, 0):
        _, g = logistic_value_grad(inst, part, block, x, params)
        fd = central_diff(lambda v: logistic_value_grad(inst, part, block, v, params)[0], x)
        assert np.allclose(g, fd, rtol=1e-6, atol=1e-8)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_block_average_is_full(seed, b):
    rng = np.random.default_rng(seed)
    inst = _random_instance(rng, classification=True)
    part = BlockPartition.contiguous(inst.m, b)
    x = rng.normal(size=inst.p)
    params = LogisticParams(0.1)
    for fn in (lambda blk: lsq_value_grad(inst, part, blk, x),
               lambda blk: logistic_value_grad(inst, part, blk, x, params)):
        full_v, full_g = fn(FULL)
        vals, grads = zip(*(fn(i) for i in range(part.n)))
        assert np.mean(vals) == pytest.approx(full_v, rel=1e-13)
        assert np.allclose(np.mean(grads, axis=0), full_g, rtol=1e-13, atol=1e-15)


def test_logistic_extreme_margins_finite():
    inst = Instance(np.array([[1e4], [-1e4]]), np.array([1.0, 1.0]), classification=True)
    v, g = logistic_value_grad(inst, BlockPartition.single(2), FULL, np.array([1.0]),
                               LogisticParams())
    assert np.isfinite(v) and np.all(np.isfinite(g))
    assert v == pytest.approx(0.5 * 1e4)


def test_logistic_labels_required():
    inst = Instance(np.ones((2, 1)), np.array([0.3, 1.0]))
    with pytest.raises(LossError):
        logistic_value_grad(inst, BlockPartition.single(2), FULL, np.zeros(1), LogisticParams())


def test_theta_max_matches_eig():
    rng = np.random.default_rng(0)
    inst = Instance(rng.normal(size=(30, 6)), rng.normal(size=30))
    part = BlockPartition.contiguous(30, 10)
    for blk in range(part.n):
        A = inst.A[part.rows(blk)]
        assert theta_max(inst, part, blk) == pytest.approx(np.linalg.eigvalsh(A.T @ A).max(), rel=1e-6)


def test_logistic_condition_threshold():
    mu, ok = logistic_condition(LogisticParams(1.0, 1.0), theta=0.0, m=10, n=1)
    assert mu == 1.0 and ok
    mu, ok = logistic_condition(LogisticParams(0.0), theta=1.0, m=10, n=1)
    assert mu == 0.0 and not ok
    with pytest.raises(LossError):
        logistic_condition(LogisticParams(0.0), 0.0, 10, 1)


def _bisect_root(fn, lo=1e-9, hi=0.5):
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if fn(mid) < 1:
            lo = mid
        else:
            hi = mid
    return lo


def test_table_roots():
    batch = _bisect_root(lambda d: contraction_factor(ContractionQuery.from_delta(d), "table1_batch"))
    sto = _bisect_root(lambda d: contraction_factor(ContractionQuery.from_delta(d), "table1_sto"))
    # closed form of the batch root: 2 (d + 2 sqrt(d (1 - d))) = 1
    assert abs(2 * (batch + 2 * math.sqrt(batch * (1 - batch))) - 1) < 1e-9
    assert abs(batch - 0.0527) < 1e-3
    assert abs(sto - 0.0142) < 1e-3


def test_limit_threshold():
    f = lambda mu: contraction_factor(ContractionQuery.from_mu(mu), "limit")
    # 243/250 is sufficient; the exact crossing sits a little lower
    for mu in np.linspace(MU_THRESHOLD, 1.0, 200):
        assert f(mu) < 1
    lo, hi = 0.9, 0.9999
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if f(mid) >= 1 else (lo, mid)
    assert hi == pytest.approx(0.9716865071514159, abs=1e-9)  # scipy brentq
    assert f(1.0) == 0.0
    assert f(0.0) == 2.0


def test_general_approaches_limit():
    for mu in (0.5, 0.9, 0.99):
        q = ContractionQuery.from_mu(mu, c_H=1 - 1e-12)
        q = ContractionQuery(q.alpha, q.beta, q.c_H, 1.0, eta=1.0, tau=q.best_tau())
        assert contraction_factor(q) == pytest.approx(contraction_factor(q, "limit"), abs=1e-9)


def test_general_validates_steps():
    q = ContractionQuery(0.5, 1.0, eta=2.0, tau=1.0)
    with pytest.raises(LossError, match="eta"):
        contraction_factor(q)
    with pytest.raises(LossError):
        contraction_factor(ContractionQuery.from_mu(0.5), "other")
    with pytest.raises(LossError):
        ContractionQuery(2.0, 1.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.05, 1.0), st.floats(0.05, 1.0), st.floats(0.05, 1.95))
def test_best_tau_maximizes_alpha0(mu, c_h, frac):
    q = ContractionQuery.from_mu(mu, c_H=c_h)
    best = ContractionQuery(q.alpha, q.beta, c_h, tau=q.best_tau()).alpha0
    other = ContractionQuery(q.alpha, q.beta, c_h, tau=frac).alpha0
    assert best >= other - 1e-9

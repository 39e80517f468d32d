import mpmath
import numpy as np
import pytest

from vidadapt.distill import (LossConfig, TeacherState, center_update, dino_ce, ema_update,
                              entropy, teacher_probs, uwsd_loss, uwsd_terms, uwsd_weight,
                              _rows_ce)
from vidadapt.errors import ConfigError, NumericError
from vidadapt.rng import derive_rng


def state(center=None, tt=1.0, ts=2.0, K=3):
    cfg = LossConfig(teacher_temp=tt, student_temp=ts)
    return TeacherState(params={}, center=np.zeros(K) if center is None else np.asarray(center),
                        cfg=cfg)


def test_teacher_probs_uniform_when_centered():
    logits = np.array([0.3, 0.3, 0.3, 0.3])
    st = state(center=logits, K=4)
    q = teacher_probs(logits, st)
    assert np.allclose(q, 0.25)


def test_teacher_probs_sharpening_limit():
    logits = np.array([0.1, 0.9, 0.3])
    st = state(tt=1e-4, ts=2e-4)
    q = teacher_probs(logits, st)
    assert q.argmax() == 1 and q[1] > 0.9999


def test_teacher_probs_high_precision_oracle():
    logits = np.array([1.0, 2.0, 3.0])
    st = state(tt=1.0)
    q = teacher_probs(logits, st)
    with mpmath.workdps(50):
        exps = [mpmath.e ** x for x in (1, 2, 3)]
        tot = sum(exps)
        expected = [float(e / tot) for e in exps]
    assert np.max(np.abs(q - expected)) < 1e-9
    assert abs(q.sum() - 1.0) < 1e-6
    assert np.all(q > 0)


def test_teacher_probs_rejects_nonfinite():
    with pytest.raises(NumericError):
        teacher_probs(np.array([1.0, np.nan, 0.0]), state())


def test_dino_ce_entropy_identity():
    q = np.array([0.5, 0.25, 0.125, 0.125])
    ts = 0.7
    s = ts * np.log(q)  # softmax(s / ts) == q up to the shared constant
    assert abs(dino_ce(q, s, ts) - entropy(q)) < 1e-6


def test_dino_ce_uniform_student():
    K = 8
    q = np.zeros(K)
    q[3] = 1.0
    s = np.full(K, 0.2)
    assert abs(dino_ce(q, s, 0.5) - np.log(K)) < 1e-9


def test_dino_ce_brute_force_oracle():
    rng = derive_rng(0, 0)
    q = rng.dirichlet(np.ones(8))
    s = rng.normal(0, 2, 8)
    ts = 0.3
    with mpmath.workdps(60):
        exps = [mpmath.exp(mpmath.mpf(x) / ts) for x in s]
        tot = sum(exps)
        expected = -sum(mpmath.mpf(qi) * mpmath.log(e / tot) for qi, e in zip(q, exps))
    assert abs(dino_ce(q, s, ts) - float(expected)) < 1e-9


def test_entropy_values():
    assert entropy(np.array([0.0, 1.0, 0.0])) == 0.0
    assert abs(entropy(np.full(4, 0.25)) - np.log(4)) < 1e-12
    assert abs(entropy(np.array([0.7, 0.3])) - 0.6108643) < 1e-6
    with mpmath.workdps(50):
        expected = -(mpmath.mpf("0.7") * mpmath.log(mpmath.mpf("0.7"))
                     + mpmath.mpf("0.3") * mpmath.log(mpmath.mpf("0.3")))
    assert abs(entropy(np.array([0.7, 0.3])) - float(expected)) < 1e-12


def test_uwsd_weight():
    assert abs(uwsd_weight(np.full(4, 0.25), 1.0) - (1 + np.log(4))) < 1e-12
    assert uwsd_weight(np.array([0.1, 0.9]), 0.0) == 1.0
    one_hot = np.array([0.0, 1.0, 0.0])
    assert uwsd_weight(one_hot, 5.0) == 1.0


def test_uwsd_weight_bounds_random_simplex():
    rng = derive_rng(1, 0)
    K, gamma = 16, 1.7
    q = rng.dirichlet(np.ones(K), size=100_000)
    w = 1.0 + gamma * -np.sum(np.where(q > 0, q * np.log(np.where(q > 0, q, 1)), 0), axis=1)
    assert np.all(w >= 1.0)
    assert np.all(w <= 1.0 + gamma * np.log(K) + 1e-12)


def test_uwsd_loss_gamma_zero_collapses_to_mean():
    rng = derive_rng(2, 0)
    v, m, K = 3, 4, 8
    q = rng.dirichlet(np.ones(K), size=v)
    s = rng.normal(0, 1, (v, m, K))
    cfg = LossConfig(gamma=0.0, student_temp=0.2, teacher_temp=0.1)
    unweighted = float(_rows_ce(q.astype(np.float64), s.astype(np.float64), 0.2).mean(axis=1).mean())
    assert uwsd_loss(q, s, cfg) == unweighted


def test_uwsd_loss_locals_optional():
    rng = derive_rng(3, 0)
    v, K = 2, 6
    q = rng.dirichlet(np.ones(K), size=v)
    s_glob = rng.normal(0, 1, (v, 1, K))
    cfg = LossConfig(gamma=1.0, student_temp=0.2, teacher_temp=0.1)
    expected = np.mean([(1 + entropy(q[k])) * dino_ce(q[k], s_glob[k, 0], 0.2)
                        for k in range(v)])
    assert abs(uwsd_loss(q, s_glob, cfg) - expected) < 1e-9


def test_uwsd_loss_brute_force_v2():
    rng = derive_rng(4, 0)
    v, u, K = 2, 2, 8
    m = 1 + 2 * u
    gamma = 1.3
    q = rng.dirichlet(np.ones(K), size=v)
    s = rng.normal(0, 1.5, (v, m, K))
    cfg = LossConfig(gamma=gamma, student_temp=0.25, teacher_temp=0.1)
    total = 0.0
    for k in range(v):
        w = 1.0 + gamma * entropy(q[k])
        total += w * np.mean([dino_ce(q[k], s[k, j], 0.25) for j in range(m)])
    assert abs(uwsd_loss(q, s, cfg) - total / v) < 1e-9


def test_uwsd_loss_positive_and_gamma_monotone():
    rng = derive_rng(5, 0)
    q = rng.dirichlet(np.ones(8), size=4)
    s = rng.normal(0, 1, (4, 3, 8))
    losses = [uwsd_loss(q, s, LossConfig(gamma=g, student_temp=0.2, teacher_temp=0.1))
              for g in (0.0, 1.0, 2.0, 3.0)]
    assert all(x >= 0 for x in losses)
    assert losses == sorted(losses)
    # affine in gamma: equal increments for equally spaced gamma
    increments = np.diff(losses)
    assert np.max(np.abs(increments - increments[0])) < 1e-9


def test_uwsd_loss_empty_batch():
    cfg = LossConfig()
    with pytest.raises(ConfigError):
        uwsd_loss(np.zeros((0, 4)), np.zeros((0, 1, 4)), cfg)
    with pytest.raises(ConfigError):
        uwsd_loss(np.full((2, 4), 0.25), np.zeros((2, 0, 4)), cfg)


def test_uwsd_terms_gradient_matches_fd():
    rng = derive_rng(6, 0)
    v, m, K = 2, 3, 5
    q = rng.dirichlet(np.ones(K), size=v)
    s = rng.normal(0, 1, (v, m, K))
    cfg = LossConfig(gamma=0.8, student_temp=0.3, teacher_temp=0.1)
    d = uwsd_terms(q, s, cfg)["d_logits"]
    eps = 1e-6
    for _ in range(20):
        k, j, c = rng.integers(v), rng.integers(m), rng.integers(K)
        sp = s.copy(); sp[k, j, c] += eps
        sm = s.copy(); sm[k, j, c] -= eps
        fd = (uwsd_loss(q, sp, cfg) - uwsd_loss(q, sm, cfg)) / (2 * eps)
        assert abs(fd - d[k, j, c]) < 1e-8


def test_ema_update_limits():
    t = {"a": np.zeros(3, np.float32)}
    s = {"a": np.full(3, 2.0, np.float32)}
    assert np.array_equal(ema_update(t, s, 1.0)["a"], np.zeros(3))
    assert np.array_equal(ema_update(t, s, 0.0)["a"], s["a"])
    assert np.array_equal(ema_update(t, s, 0.5)["a"], np.ones(3))
    with pytest.raises(ConfigError):
        ema_update(t, s, 1.5)


def test_ema_contraction():
    rng = derive_rng(7, 0)
    t = {"a": rng.normal(size=8).astype(np.float32)}
    s = {"a": rng.normal(size=8).astype(np.float32)}
    m = 0.9
    gap0 = np.linalg.norm(t["a"] - s["a"])
    t1 = ema_update(t, s, m)
    gap1 = np.linalg.norm(t1["a"] - s["a"])
    assert np.isclose(gap1, m * gap0, rtol=1e-5)


def test_center_update():
    c = np.array([1.0, -1.0], np.float32)
    batch = np.array([[2.0, 0.0], [4.0, 2.0]], np.float32)
    assert np.array_equal(center_update(c, batch, 1.0), c)
    assert np.allclose(center_update(c, batch, 0.0), [3.0, 1.0])
    # two-step recursion against hand computation
    c1 = center_update(c, batch, 0.9)
    c2 = center_update(c1, batch * 2, 0.9)
    expect1 = 0.9 * c + 0.1 * batch.mean(axis=0)
    expect2 = 0.9 * expect1 + 0.1 * (batch * 2).mean(axis=0)
    assert np.max(np.abs(c2 - expect2)) < 1e-9

import itertools

import numpy as np
import pytest

from conftest import check_grads
from pageseq import crf as C
from pageseq.iob import IOB_TAGS


def _random_instance(rng, t, k, scale=1.0):
    return (rng.standard_normal((t, k)) * scale,
            rng.standard_normal((k, k)) * scale,
            rng.standard_normal(k) * scale,
            rng.standard_normal(k) * scale)


def test_sequence_score_manual():
    em = np.array([[1.0, 0.0], [0.0, 2.0]])
    tr = np.array([[0.1, 0.2], [0.3, 0.4]])
    start = np.array([0.5, 0.0])
    stop = np.array([0.0, 0.7])
    s = C.sequence_score(em, tr, start, stop, [0, 1])
    assert s == pytest.approx(0.5 + 1.0 + 0.2 + 2.0 + 0.7)


def test_log_partition_single_step():
    em = np.array([[1.0, 2.0, 3.0]])
    start = np.array([0.1, 0.2, 0.3])
    stop = np.array([0.0, 0.0, 0.0])
    tr = np.zeros((3, 3))
    expect = np.log(np.exp(em[0] + start + stop).sum())
    assert C.forward_log_partition(em, tr, start, stop) == pytest.approx(expect)


def test_log_partition_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(100):
        t = int(rng.integers(1, 7))
        k = int(rng.integers(1, 5))
        em, tr, st, sp = _random_instance(rng, t, k)
        lz = C.forward_log_partition(em, tr, st, sp)
        bz = C.brute_force_log_partition(em, tr, st, sp)
        assert abs(lz - bz) <= 1e-8


def test_viterbi_matches_brute_force():
    rng = np.random.default_rng(1)
    for _ in range(100):
        t = int(rng.integers(1, 7))
        k = int(rng.integers(1, 5))
        em, tr, st, sp = _random_instance(rng, t, k)
        path, s = C.viterbi_decode(em, tr, st, sp)
        bpath, bs = C.brute_force_decode(em, tr, st, sp)
        assert s == pytest.approx(bs, abs=1e-9)
        assert path == bpath


def test_viterbi_tie_breaks_to_lowest_index():
    # all-zero scores: every path ties, rule picks all-zeros path
    em = np.zeros((4, 3))
    path, _ = C.viterbi_decode(em, np.zeros((3, 3)), np.zeros(3), np.zeros(3))
    assert path == [0, 0, 0, 0]


def test_viterbi_single_tag():
    em = np.array([[0.3], [0.1]])
    path, s = C.viterbi_decode(em, np.zeros((1, 1)), np.zeros(1), np.zeros(1))
    assert path == [0, 0]


def test_viterbi_avoids_forbidden_bigram():
    k = 3
    rng = np.random.default_rng(7)
    em = rng.standard_normal((2, k)) * 0.01  # tie-breaking jitter
    em[:, 1] += 5.0  # tag 1 dominant on both steps
    tr = rng.standard_normal((k, k)) * 0.01
    tr[1, 1] = -100.0  # but the 1->1 bigram is forbidden
    path, _ = C.viterbi_decode(em, tr, np.zeros(k), np.zeros(k))
    assert path != [1, 1]
    assert 1 in path  # the dominant tag is still used once
    bpath, _ = C.brute_force_decode(em, tr, np.zeros(k), np.zeros(k))
    assert path == bpath


def test_marginals_match_brute_force_and_sum_to_one():
    rng = np.random.default_rng(2)
    for _ in range(30):
        t = int(rng.integers(1, 6))
        k = int(rng.integers(2, 5))
        em, tr, st, sp = _random_instance(rng, t, k)
        unary, pairwise, _ = C.forward_backward(em, tr, st, sp)
        bunary = C.brute_force_marginals(em, tr, st, sp)
        np.testing.assert_allclose(unary, bunary, atol=1e-10)
        np.testing.assert_allclose(unary.sum(axis=1), 1.0, atol=1e-10)
        if t > 1:
            # expected transition counts sum to T-1
            assert pairwise.sum() == pytest.approx(t - 1, abs=1e-8)


def test_nll_gradients(rng):
    em, tr, st, sp = _random_instance(np.random.default_rng(3), 4, 3)
    gold = np.array([0, 2, 1, 1])
    nll, d_em, d_tr, d_st, d_sp = C.nll_and_grad(em, tr, st, sp, gold)
    assert nll >= 0

    def fn():
        return (C.forward_log_partition(em, tr, st, sp)
                - C.sequence_score(em, tr, st, sp, gold))

    check_grads(fn, em, d_em, rng)
    check_grads(fn, tr, d_tr, rng)
    check_grads(fn, st, d_st, rng)
    check_grads(fn, sp, d_sp, rng)


def test_crf_model_emission_map_and_grads(rng):
    model = C.CrfModel(n_tags=3, n_features=4)
    gen = np.random.default_rng(4)
    for name in model.params:
        model.params[name] += gen.standard_normal(model.params[name].shape) * 0.3
    feats = gen.standard_normal((5, 4))
    gold = np.array([0, 1, 2, 1, 0])
    nll, grads, d_feats = model.nll_and_grad(feats, gold)

    def fn():
        return model.log_partition(feats) - model.sequence_score(feats, gold)

    for name in ("transitions", "start", "stop", "emit_w", "emit_b"):
        check_grads(fn, model.params[name], grads[name], rng, count=30)
    check_grads(fn, feats, d_feats, rng, count=30)


def test_crf_model_decode_matches_brute_force_iob_width():
    gen = np.random.default_rng(5)
    k = len(IOB_TAGS)
    model = C.CrfModel(n_tags=k, n_features=6)
    for name in model.params:
        model.params[name] += gen.standard_normal(model.params[name].shape)
    feats = gen.standard_normal((4, 6))
    em = model.emissions(feats)
    path, s = model.decode(feats)
    bpath, bs = C.brute_force_decode(em, model.params["transitions"],
                                     model.params["start"],
                                     model.params["stop"])
    assert path == bpath
    assert s == pytest.approx(bs)


def test_train_crf_learns_transition_structure():
    """Sequences alternate tags deterministically; features are useless,
    so any fit must come from the transition parameters."""
    seqs = [(np.zeros((6, 2)), np.array([0, 1, 0, 1, 0, 1]))] * 4
    model, history = C.train_crf(seqs, n_tags=2, n_features=2, epochs=60,
                                 lr=0.1)
    assert history[-1] < history[0]
    path, _ = model.decode(np.zeros((6, 2)))
    assert path == [0, 1, 0, 1, 0, 1]

import numpy as np
import pytest

from conftest import check_grads
from pageseq import crf as crf_ops
from pageseq.iob import IOB_TAGS
from pageseq.seqmodels import (SeqModel, SeqModelConfig, predict_tags,
                               train_seq)


def _model(variant, input_dim=6, **kw):
    kw.setdefault("dropout", 0.0)  # keep gradient checks deterministic
    config = SeqModelConfig(variant=variant, input_dim=input_dim,
                            lstm_hidden=4, pre_fc=5, **kw)
    return SeqModel(config, seed=0, dtype=np.float64)


def test_variant_validation():
    with pytest.raises(ValueError):
        SeqModelConfig(variant="transformer", input_dim=4)


def test_decode_length_matches_input():
    for variant in ("bilstm", "bilstm-crf", "bilstm-f", "bilstm-f-crf"):
        model = _model(variant)
        x = np.random.default_rng(0).standard_normal((7, 6))
        assert len(model.decode(x)) == 7


def test_single_page_lawsuit_decodes():
    model = _model("bilstm-crf")
    x = np.random.default_rng(1).standard_normal((1, 6))
    assert len(model.decode(x)) == 1


def test_empty_lawsuit_rejected():
    model = _model("bilstm")
    with pytest.raises(ValueError):
        model.decode(np.zeros((0, 6)))


def test_reversed_lawsuit_changes_predictions():
    """Bidirectional context: scores depend on page order."""
    model = _model("bilstm")
    rng = np.random.default_rng(2)
    x = rng.standard_normal((6, 6)) * 3
    fwd = model.forward_scores(x)
    rev = model.forward_scores(x[::-1].copy())
    assert not np.allclose(fwd, rev[::-1])


def test_batch_independence():
    """A lawsuit's predictions never depend on its batch neighbours:
    processing is strictly per lawsuit, so two calls are enough."""
    model = _model("bilstm-f")
    rng = np.random.default_rng(3)
    a = rng.standard_normal((5, 6))
    scores_alone = model.forward_scores(a)
    # run another lawsuit through, then repeat a
    model.forward_scores(rng.standard_normal((9, 6)))
    np.testing.assert_array_equal(scores_alone, model.forward_scores(a))


def test_bptt_gradients_full_fusion_stack(rng):
    """Finite differences through BN stem, BiLSTM and output head."""
    model = _model("bilstm-f")
    x = rng.standard_normal((3, 6))
    tags = np.array([0, 1, 1])

    def fn():
        return model.loss_and_backward(x, tags, train=True)

    model.zero_grads()
    model.loss_and_backward(x, tags, train=True)
    grads = {k: v.copy() for k, v in model.named_grads().items()}
    params = model.named_params()
    for name in ("fc_in.weight", "bilstm.fwd.w_x", "bilstm.bwd.w_h",
                 "bn_in.gamma", "fc_out.weight", "fc_out.bias"):
        def loss_only():
            model.zero_grads()
            return fn()
        check_grads(loss_only, params[name], grads[name], rng, count=25)


def test_crf_head_gradients(rng):
    model = _model("bilstm-f-crf")
    x = rng.standard_normal((3, 6))
    tags = np.array([0, 5, 11])

    model.zero_grads()
    model.loss_and_backward(x, tags, train=True)
    grads = {k: v.copy() for k, v in model.named_grads().items()}
    params = model.named_params()

    def loss_only():
        model.zero_grads()
        return model.loss_and_backward(x, tags, train=True)

    for name in ("crf.transitions", "crf.start", "crf.stop",
                 "bilstm.fwd.w_x", "fc_out.weight"):
        check_grads(loss_only, params[name], grads[name], rng, count=25)


def test_crf_head_decode_matches_brute_force():
    model = _model("bilstm-crf", input_dim=4)
    gen = np.random.default_rng(4)
    model.transitions += gen.standard_normal(model.transitions.shape)
    model.start += gen.standard_normal(model.start.shape)
    model.stop += gen.standard_normal(model.stop.shape)
    for _ in range(5):
        x = gen.standard_normal((4, 4))
        scores = model.forward_scores(x, train=False).astype(np.float64)
        path = model.decode(x)
        bpath, _ = crf_ops.brute_force_decode(scores, model.transitions,
                                              model.start, model.stop)
        assert path == bpath


def test_predict_tags_are_iob():
    model = _model("bilstm")
    x = np.random.default_rng(5).standard_normal((4, 6))
    tags = predict_tags(model, x)
    assert len(tags) == 4
    assert all(t in IOB_TAGS for t in tags)


def test_train_seq_runs_and_is_deterministic():
    rng = np.random.default_rng(6)

    def make_set(n):
        out = []
        for _ in range(n):
            t = int(rng.integers(2, 6))
            out.append((rng.standard_normal((t, 6)).astype(np.float32),
                        rng.integers(0, 12, size=t)))
        return out

    data = {"train": make_set(6), "validation": make_set(3)}
    config = SeqModelConfig(variant="bilstm-f", input_dim=6, lstm_hidden=4,
                            pre_fc=5)
    m1, _, log1 = train_seq(data, config, seed=0, epochs=2, batch_lawsuits=3)
    m2, _, log2 = train_seq(data, config, seed=0, epochs=2, batch_lawsuits=3)
    assert len(log1.rows) == 2
    assert log1.rows[-1].train_loss == log2.rows[-1].train_loss
    for name, p1 in m1.state_dict().items():
        np.testing.assert_array_equal(p1, m2.state_dict()[name])

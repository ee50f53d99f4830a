"""BiLSTM sequence labelers over per-page representations of lawsuits.

Four variants: plain BiLSTM and BiLSTM-CRF consume fusion-module hidden
activations; the -F variants consume concatenated text+image embeddings
through an extra BN/dropout/FC(512) stem.  All tag over the 12 IOB tags;
evaluation always collapses to the 6 base classes.  Lawsuits within a
batch are processed sequentially (no padding), so predictions for one
lawsuit never depend on its batch neighbours.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import crf as crf_ops
from .checkpoint import BestCheckpointKeeper
from .iob import CLASSES, IOB_TAGS, TAG_TO_ID, iob_encode
from .layers import BatchNorm1d, Dropout, Linear
from .losses import cross_entropy
from .lstm import BiLstm
from .metrics import score_collapsed
from .model_base import ModelBase
from .optim import Adam
from .schedule import OneCycleSchedule
from .tensor import DEFAULT_DTYPE, RngState, softmax
from .training import TrainLog, iterate_minibatches

VARIANTS = ("bilstm", "bilstm-crf", "bilstm-f", "bilstm-f-crf")


@dataclass
class SeqModelConfig:
    variant: str
    input_dim: int
    lstm_hidden: int = 128
    pre_fc: int = 512
    dropout: float = 0.5
    n_tags: int = len(IOB_TAGS)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")

    @property
    def fusion_input(self) -> bool:
        return self.variant in ("bilstm-f", "bilstm-f-crf")

    @property
    def crf_head(self) -> bool:
        return self.variant.endswith("crf")


class SeqModel(ModelBase):
    def __init__(self, config: SeqModelConfig, seed=0, dtype=DEFAULT_DTYPE):
        self.config = config
        rngs = RngState(seed)
        init = rngs.consumer("seq-init")
        drop_rng = rngs.consumer("seq-dropout")
        lstm_in = config.input_dim
        if config.fusion_input:
            self.bn_in = BatchNorm1d(config.input_dim, dtype=dtype)
            self.drop_in = Dropout(config.dropout, drop_rng)
            self.fc_in = Linear(config.input_dim, config.pre_fc, init, dtype)
            lstm_in = config.pre_fc
        self.bilstm = BiLstm(lstm_in, config.lstm_hidden, init, dtype)
        self.bn_out = BatchNorm1d(2 * config.lstm_hidden, dtype=dtype)
        self.drop_out = Dropout(config.dropout, drop_rng)
        self.fc_out = Linear(2 * config.lstm_hidden, config.n_tags, init, dtype,
                             w_scale=1e-3)
        if config.crf_head:
            k = config.n_tags
            self.transitions = np.zeros((k, k), dtype=np.float64)
            self.start = np.zeros(k, dtype=np.float64)
            self.stop = np.zeros(k, dtype=np.float64)
            self.g_transitions = np.zeros_like(self.transitions)
            self.g_start = np.zeros_like(self.start)
            self.g_stop = np.zeros_like(self.stop)

    def _children(self):
        out = {}
        if self.config.fusion_input:
            out.update({"bn_in": self.bn_in, "fc_in": self.fc_in})
        out.update({"bilstm": self.bilstm, "bn_out": self.bn_out,
                    "fc_out": self.fc_out})
        return out

    def _extra_params(self):
        if not self.config.crf_head:
            return {}
        return {"crf.transitions": self.transitions, "crf.start": self.start,
                "crf.stop": self.stop}

    def _extra_grads(self):
        if not self.config.crf_head:
            return {}
        return {"crf.transitions": self.g_transitions, "crf.start": self.g_start,
                "crf.stop": self.g_stop}

    def forward_scores(self, x, train=False):
        """Per-step tag scores (T, n_tags) for one lawsuit."""
        x = np.asarray(x)
        if x.ndim != 2 or x.shape[1] != self.config.input_dim:
            raise ValueError(f"expected (T, {self.config.input_dim}), "
                             f"got {x.shape}")
        if x.shape[0] == 0:
            raise ValueError("empty lawsuit")
        if self.config.fusion_input:
            x = self.fc_in.forward(self.drop_in.forward(
                self.bn_in.forward(x, train=train), train=train), train=train)
        h = self.bilstm.forward(x, train=train)
        h = self.drop_out.forward(self.bn_out.forward(h, train=train),
                                  train=train)
        return self.fc_out.forward(h, train=train)

    def backward_scores(self, d_scores):
        g = self.fc_out.backward(d_scores)
        g = self.bn_out.backward(self.drop_out.backward(g))
        g = self.bilstm.backward(g)
        if self.config.fusion_input:
            g = self.bn_in.backward(self.drop_in.backward(self.fc_in.backward(g)))
        return g

    def loss_and_backward(self, x, tag_ids, train=True):
        """Per-lawsuit loss (normalised by length) plus grad accumulation."""
        tag_ids = np.asarray(tag_ids)
        scores = self.forward_scores(x, train=train)
        t_len = scores.shape[0]
        if self.config.crf_head:
            nll, d_em, d_tr, d_st, d_sp = crf_ops.nll_and_grad(
                scores.astype(np.float64), self.transitions, self.start,
                self.stop, tag_ids)
            self.g_transitions += d_tr / t_len
            self.g_start += d_st / t_len
            self.g_stop += d_sp / t_len
            self.backward_scores((d_em / t_len).astype(scores.dtype))
            return nll / t_len
        loss, d_scores = cross_entropy(scores, tag_ids)
        self.backward_scores(d_scores)
        return loss

    def decode(self, x):
        """Predicted IOB tag ids for one lawsuit (eval mode)."""
        scores = self.forward_scores(x, train=False)
        if self.config.crf_head:
            path, _ = crf_ops.viterbi_decode(scores.astype(np.float64),
                                             self.transitions, self.start,
                                             self.stop)
            return path
        return softmax(scores, axis=1).argmax(axis=1).tolist()


def lawsuit_tag_ids(lawsuit):
    tags = iob_encode(lawsuit.labels(), lawsuit.first_page_flags())
    return np.array([TAG_TO_ID[t] for t in tags])


def train_seq(lawsuit_inputs, config: SeqModelConfig, seed=0, epochs=20,
              batch_lawsuits=8, max_lr=2e-3, out_path=None, verbose=False):
    """Trains on whole lawsuits grouped into mini-batches.

    ``lawsuit_inputs`` maps split name to a list of
    (features (T, input_dim), gold IOB tag ids) pairs.
    Returns (model, keeper, log).
    """
    train_set = lawsuit_inputs["train"]
    val_set = lawsuit_inputs["validation"]
    if not train_set or not val_set:
        raise ValueError("empty train or validation split")
    model = SeqModel(config, seed=seed)
    opt = Adam(model.named_params())
    steps_per_epoch = max(1, int(np.ceil(len(train_set) / batch_lawsuits)))
    sched = OneCycleSchedule(total_steps=epochs * steps_per_epoch, max_lr=max_lr)
    keeper = BestCheckpointKeeper(out_path) if out_path else None
    log = TrainLog()
    shuffle_rng = RngState(seed).consumer("seq-shuffle")
    step = 0
    best = (-1.0, None)
    for epoch in range(epochs):
        losses = []
        lr = sched.lr(step)
        for idx in iterate_minibatches(len(train_set), batch_lawsuits,
                                       shuffle_rng):
            lr = sched.lr(step)
            model.zero_grads()
            batch_loss = 0.0
            for i in idx:
                x, tags = train_set[i]
                batch_loss += model.loss_and_backward(x, tags, train=True)
            grads = model.named_grads()
            scaled = {k: g / len(idx) for k, g in grads.items()}
            opt.step(scaled, lr)
            losses.append(batch_loss / len(idx))
            step += 1
        report = evaluate_seq(model, val_set)
        saved = False
        if keeper:
            saved = keeper.update(report.macro_f1, model.state_dict(),
                                  {"epoch": epoch, "model": config.variant})
        if report.macro_f1 > best[0]:
            best = (report.macro_f1, model.snapshot())
        log.add(epoch=epoch, lr=lr, train_loss=float(np.mean(losses)),
                val_macro_f1=report.macro_f1,
                val_weighted_f1=report.weighted_f1, saved=saved)
        if verbose:
            print(f"{config.variant} epoch {epoch}: loss {np.mean(losses):.4f} "
                  f"val macro-F1 {report.macro_f1:.4f}")
    if best[1] is not None:
        model.load_state(best[1])
    return model, keeper, log


def predict_tags(model, x):
    return [IOB_TAGS[i] for i in model.decode(np.asarray(x))]


def evaluate_seq(model, lawsuit_set):
    """Collapsed-class report over a list of (features, gold tag ids)."""
    gold, pred = [], []
    for x, tags in lawsuit_set:
        gold.extend(IOB_TAGS[i] for i in tags)
        pred.extend(predict_tags(model, x))
    return score_collapsed(gold, pred, CLASSES)

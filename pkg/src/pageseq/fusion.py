"""Early fusion of text and image embeddings.

The fusion module concatenates per-page text and image embeddings,
substituting a learned vector (or zeros) when a modality is absent, and
classifies through batch-norm and two FC layers.  Also here: the
unimodal embedding classifier used for image-only baselines, the hybrid
classifier, the always-missing-image ablation and the majority baseline.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .checkpoint import BestCheckpointKeeper
from .corpus import iter_pages
from .iob import CLASSES
from .layers import BatchNorm1d, Dropout, Linear
from .losses import cross_entropy
from .metrics import score
from .model_base import ModelBase
from .optim import Adam
from .schedule import OneCycleSchedule
from .tensor import DEFAULT_DTYPE, RngState, softmax
from .training import TrainLog, iterate_minibatches

CLASS_IDS = {c: i for i, c in enumerate(CLASSES)}


@dataclass
class FusionConfig:
    text_dim: int = 3840
    image_dim: int = 4096
    hidden: int = 128
    classes: int = 6
    dropout: float = 0.5
    missing_mode: str = "learned"  # or "zero"

    def __post_init__(self):
        if self.missing_mode not in ("learned", "zero"):
            raise ValueError(f"unknown missing_mode {self.missing_mode!r}")

    @property
    def concat_dim(self) -> int:
        return self.text_dim + self.image_dim

    @property
    def name(self) -> str:
        suffix = "-zero" if self.missing_mode == "zero" else ""
        return f"FM-{self.hidden}{suffix}"


class FusionModule(ModelBase):
    """concat -> BN -> FC(d) -> dropout -> BN -> FC(classes)."""

    def __init__(self, config: FusionConfig, seed=0, dtype=DEFAULT_DTYPE):
        self.config = config
        rngs = RngState(seed)
        init = rngs.consumer("fusion-init")
        c = config
        # zero init: learned and zero variants start from the same point
        self.missing_text = np.zeros(c.text_dim, dtype=dtype)
        self.missing_image = np.zeros(c.image_dim, dtype=dtype)
        self.g_missing_text = np.zeros_like(self.missing_text)
        self.g_missing_image = np.zeros_like(self.missing_image)
        self.bn0 = BatchNorm1d(c.concat_dim, dtype=dtype)
        self.fc1 = Linear(c.concat_dim, c.hidden, init, dtype)
        self.dropout = Dropout(c.dropout, rngs.consumer("fusion-dropout"))
        self.bn1 = BatchNorm1d(c.hidden, dtype=dtype)
        self.fc2 = Linear(c.hidden, c.classes, init, dtype, w_scale=1e-3)
        self._masks = None

    def _children(self):
        return {"bn0": self.bn0, "fc1": self.fc1, "bn1": self.bn1,
                "fc2": self.fc2}

    def _extra_params(self):
        return {"missing_text": self.missing_text,
                "missing_image": self.missing_image}

    def _extra_grads(self):
        return {"missing_text": self.g_missing_text,
                "missing_image": self.g_missing_image}

    def _substitute(self, emb, present, missing_vec, dim):
        b = present.shape[0]
        if emb is None:
            emb = np.zeros((b, dim), dtype=missing_vec.dtype)
        if emb.shape != (b, dim):
            raise ValueError(f"embedding shape {emb.shape} != ({b}, {dim})")
        return np.where(present[:, None], emb, missing_vec)

    def forward(self, text, image, text_present, image_present, train=False,
                force_missing_image=False):
        """Logits for a batch; absent modalities are substituted.

        ``text``/``image`` rows where the matching mask is False are
        ignored.  ``force_missing_image`` runs the "w/o img acts"
        ablation: every sample uses the missing-image vector.
        """
        text_present = np.asarray(text_present, dtype=bool)
        image_present = np.asarray(image_present, dtype=bool)
        if force_missing_image:
            image_present = np.zeros_like(image_present)
            if not text_present.all():
                raise ValueError("fusion w/o image acts requires text on "
                                 "every sample")
        if np.any(~text_present & ~image_present):
            raise ValueError("sample with both modalities missing")
        c = self.config
        tvec = self._substitute(text, text_present, self.missing_text, c.text_dim)
        ivec = self._substitute(image, image_present, self.missing_image,
                                c.image_dim)
        x = np.concatenate([tvec, ivec], axis=1)
        h = self.fc1.forward(self.bn0.forward(x, train=train), train=train)
        self._hidden = h
        self._masks = (text_present, image_present)
        out = self.bn1.forward(self.dropout.forward(h, train=train), train=train)
        return self.fc2.forward(out, train=train)

    def backward(self, dlogits):
        g = self.dropout.backward(self.bn1.backward(self.fc2.backward(dlogits)))
        g = self.bn0.backward(self.fc1.backward(g))
        if self.config.missing_mode == "learned":
            text_present, image_present = self._masks
            dt = g[:, : self.config.text_dim]
            di = g[:, self.config.text_dim :]
            if np.any(~text_present):
                self.g_missing_text += dt[~text_present].sum(axis=0)
            if np.any(~image_present):
                self.g_missing_image += di[~image_present].sum(axis=0)
        return g

    def predict_probs(self, text, image, text_present, image_present,
                      force_missing_image=False):
        logits = self.forward(text, image, text_present, image_present,
                              train=False,
                              force_missing_image=force_missing_image)
        return softmax(logits, axis=1)

    def hidden(self, text, image, text_present, image_present):
        """FC(d) activations in eval mode (the BiLSTM input features)."""
        self.forward(text, image, text_present, image_present, train=False)
        return self._hidden


class MlpClassifier(ModelBase):
    """Single-modality analogue of the fusion module (BN-FC-BN-FC)."""

    def __init__(self, input_dim, hidden, classes=6, dropout=0.5, seed=0,
                 dtype=DEFAULT_DTYPE):
        rngs = RngState(seed)
        init = rngs.consumer("mlp-init")
        self.bn0 = BatchNorm1d(input_dim, dtype=dtype)
        self.fc1 = Linear(input_dim, hidden, init, dtype)
        self.dropout = Dropout(dropout, rngs.consumer("mlp-dropout"))
        self.bn1 = BatchNorm1d(hidden, dtype=dtype)
        self.fc2 = Linear(hidden, classes, init, dtype, w_scale=1e-3)
        self._layers = [self.bn0, self.fc1, self.dropout, self.bn1, self.fc2]

    def _children(self):
        return {"bn0": self.bn0, "fc1": self.fc1, "bn1": self.bn1,
                "fc2": self.fc2}

    def forward(self, x, train=False):
        for layer in self._layers:
            x = layer.forward(x, train=train)
        return x

    def backward(self, grad):
        for layer in reversed(self._layers):
            grad = layer.backward(grad)
        return grad

    def predict_probs(self, x):
        return softmax(self.forward(x, train=False), axis=1)


class HybridClassifier:
    """Text model when text exists, image model otherwise."""

    def __init__(self, text_model, image_model):
        self.text_model = text_model
        self.image_model = image_model
        self.text_calls = 0
        self.image_calls = 0

    def predict_page(self, page) -> str:
        if page.has_text:
            self.text_calls += 1
            return self.text_model.predict_page(page)
        if page.has_image:
            self.image_calls += 1
            return self.image_model.predict_page(page)
        raise ValueError(f"{page.lawsuit_id}:{page.page_index}: "
                         "page has no modality")


class MajorityBaseline:
    """Constant classifier; ties break to the lowest class index."""

    def __init__(self, train_labels):
        labels = list(train_labels)
        if not labels:
            raise ValueError("no training labels")
        counts = Counter(labels)
        self.majority_class = max(CLASSES, key=lambda c: (counts.get(c, 0),
                                                          -CLASSES.index(c)))

    def predict_page(self, page) -> str:
        return self.majority_class


def embedding_arrays(pages, text_dim, image_dim):
    """Dense (text, image, text_mask, image_mask, target) arrays for pages."""
    n = len(pages)
    text = np.zeros((n, text_dim), dtype=np.float32)
    image = np.zeros((n, image_dim), dtype=np.float32)
    tmask = np.zeros(n, dtype=bool)
    imask = np.zeros(n, dtype=bool)
    targets = np.zeros(n, dtype=np.int64)
    for i, page in enumerate(pages):
        if page.text_embedding is not None:
            text[i] = page.text_embedding
            tmask[i] = True
        if page.image_embedding is not None:
            image[i] = page.image_embedding
            imask[i] = True
        if not tmask[i] and not imask[i]:
            raise ValueError(f"{page.lawsuit_id}:{page.page_index}: "
                             "no embedding on either modality")
        targets[i] = CLASS_IDS[page.label]
    return text, image, tmask, imask, targets


def corpus_embedding_dims(corpus):
    for split in corpus:
        for page in iter_pages(corpus, split):
            if page.text_embedding is not None and page.image_embedding is not None:
                return len(page.text_embedding), len(page.image_embedding)
    raise ValueError("corpus has no page with both embeddings")


def train_fusion(corpus, config: FusionConfig, seed=0, epochs=20,
                 batch_size=64, max_lr=5e-3, out_path=None, verbose=False):
    """One-cycle Adam training; checkpoints on best validation macro-F1.

    Returns (model, keeper, log).
    """
    train_pages = list(iter_pages(corpus, "train"))
    val_pages = list(iter_pages(corpus, "validation"))
    if not train_pages or not val_pages:
        raise ValueError("empty train or validation split")
    data = embedding_arrays(train_pages, config.text_dim, config.image_dim)
    text, image, tmask, imask, targets = data
    if not tmask.any() or not imask.any():
        raise ValueError("a modality is missing from every training sample")
    vdata = embedding_arrays(val_pages, config.text_dim, config.image_dim)
    val_gold = [p.label for p in val_pages]

    model = FusionModule(config, seed=seed)
    opt = Adam(model.named_params())
    steps_per_epoch = max(1, int(np.ceil(len(train_pages) / batch_size)))
    sched = OneCycleSchedule(total_steps=epochs * steps_per_epoch, max_lr=max_lr)
    keeper = BestCheckpointKeeper(out_path) if out_path else None
    log = TrainLog()
    shuffle_rng = RngState(seed).consumer("fusion-shuffle")
    step = 0
    best = (-1.0, None)
    for epoch in range(epochs):
        losses = []
        lr = sched.lr(step)
        for idx in iterate_minibatches(len(train_pages), batch_size, shuffle_rng):
            lr = sched.lr(step)
            model.zero_grads()
            logits = model.forward(text[idx], image[idx], tmask[idx],
                                   imask[idx], train=True)
            loss, dlogits = cross_entropy(logits, targets[idx])
            model.backward(dlogits)
            opt.step(model.named_grads(), lr)
            losses.append(loss)
            step += 1
        report = evaluate_fusion(model, vdata, val_gold)
        saved = False
        if keeper:
            saved = keeper.update(report.macro_f1, model.state_dict(),
                                  {"epoch": epoch, "model": config.name})
        if report.macro_f1 > best[0]:
            best = (report.macro_f1, model.snapshot())
        log.add(epoch=epoch, lr=lr, train_loss=float(np.mean(losses)),
                val_macro_f1=report.macro_f1,
                val_weighted_f1=report.weighted_f1, saved=saved)
        if verbose:
            print(f"{config.name} epoch {epoch}: loss {np.mean(losses):.4f} "
                  f"val macro-F1 {report.macro_f1:.4f}")
    if best[1] is not None:
        model.load_state(best[1])
    return model, keeper, log


def evaluate_fusion(model, data, gold_labels, batch_size=512,
                    force_missing_image=False):
    text, image, tmask, imask, _ = data
    preds = []
    for start in range(0, len(text), batch_size):
        sl = slice(start, start + batch_size)
        probs = model.predict_probs(text[sl], image[sl], tmask[sl], imask[sl],
                                    force_missing_image=force_missing_image)
        preds.extend(CLASSES[i] for i in probs.argmax(axis=1))
    return score(gold_labels, preds, CLASSES)


GRID = [(512, "learned"), (512, "zero"), (128, "learned"), (128, "zero")]


def fusion_grid(corpus, text_dim, image_dim, seed=0, epochs=10, **train_kw):
    """Table-style 4-config sweep; returns {config name: val macro-F1}."""
    results = {}
    for hidden, mode in GRID:
        config = FusionConfig(text_dim=text_dim, image_dim=image_dim,
                              hidden=hidden, missing_mode=mode)
        _, _, log = train_fusion(corpus, config, seed=seed, epochs=epochs,
                                 **train_kw)
        results[config.name] = max(r.val_macro_f1 for r in log.rows)
    return results

"""End-to-end pipelines over a corpus: the model roster from the result
tables (majority, text CNN, image-only, fusion variants, FM+CRF, BiLSTM
labelers) trained and scored under one uniform protocol.

Every model is evaluated on every test page.  The text CNN sees an
all-padding token sequence for pages whose text is missing, which is
exactly the situation the fusion models are built to handle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import crf as crf_ops
from .corpus import iter_pages
from .fusion import (FusionConfig, FusionModule, MajorityBaseline,
                     MlpClassifier, corpus_embedding_dims, embedding_arrays,
                     evaluate_fusion, train_fusion)
from .iob import CLASSES, IOB_TAGS
from .losses import cross_entropy
from .metrics import MetricsReport, score, score_by_first_page, score_collapsed
from .optim import Adam
from .schedule import OneCycleSchedule
from .seqmodels import SeqModel, SeqModelConfig, lawsuit_tag_ids, train_seq
from .synth import SynthConfig, generate_synthetic
from .tensor import RngState
from .textcnn import (TextCnnConfig, encode_pages, evaluate_text_cnn,
                      train_text_cnn)
from .training import iterate_minibatches

CLASS_IDS = {c: i for i, c in enumerate(CLASSES)}

# desk-scale hyperparameters used by the synthetic experiments
SMALL_TEXT_CNN = TextCnnConfig(max_tokens=60, embed_dim=32, filters_per_size=32,
                               kernel_sizes=(3, 4, 5), blocks=2, pool_size=2,
                               final_pool_out_len=4, fc_hidden=64)


def concat_features(pages, fm: FusionModule):
    """Concatenated text+image embeddings with the FM's missing vectors."""
    c = fm.config
    out = np.zeros((len(pages), c.concat_dim), dtype=np.float32)
    for i, page in enumerate(pages):
        t = page.text_embedding if page.text_embedding is not None \
            else fm.missing_text
        im = page.image_embedding if page.image_embedding is not None \
            else fm.missing_image
        out[i, : c.text_dim] = t
        out[i, c.text_dim :] = im
    return out


def seq_dataset(corpus, fm: FusionModule, kind: str):
    """Per-split lists of (features, gold IOB tag ids) for sequence models.

    ``kind`` is "hidden" (FM first-FC activations) or "concat"
    (text+image embeddings with FM missing substitution).
    """
    out = {}
    for split in corpus:
        items = []
        for lawsuit in corpus[split]:
            pages = lawsuit.pages
            if kind == "concat":
                x = concat_features(pages, fm)
            elif kind == "hidden":
                text, image, tmask, imask, _ = embedding_arrays(
                    pages, fm.config.text_dim, fm.config.image_dim)
                x = fm.hidden(text, image, tmask, imask).astype(np.float32)
            else:
                raise ValueError(f"unknown kind {kind!r}")
            items.append((x, lawsuit_tag_ids(lawsuit)))
        out[split] = items
    return out


def fm_probability_sequences(corpus, fm: FusionModule, split):
    """Per-lawsuit FM softmax outputs (T, 6) plus IOB tag ids."""
    items = []
    for lawsuit in corpus[split]:
        text, image, tmask, imask, _ = embedding_arrays(
            lawsuit.pages, fm.config.text_dim, fm.config.image_dim)
        probs = fm.predict_probs(text, image, tmask, imask)
        items.append((probs.astype(np.float64), lawsuit_tag_ids(lawsuit)))
    return items


def train_fm_crf(corpus, fm: FusionModule, epochs=80, lr=0.08, l2=1e-4):
    """CRF over FM prediction vectors; 12 IOB tags, 6-dim features."""
    train_seqs = fm_probability_sequences(corpus, fm, "train")
    model, history = crf_ops.train_crf(train_seqs, n_tags=len(IOB_TAGS),
                                       n_features=len(CLASSES), epochs=epochs,
                                       lr=lr, l2=l2)
    return model, history


def evaluate_fm_crf(corpus, fm, crf_model, split="test") -> MetricsReport:
    gold, pred = [], []
    for feats, tags in fm_probability_sequences(corpus, fm, split):
        path, _ = crf_model.decode(feats)
        gold.extend(IOB_TAGS[i] for i in tags)
        pred.extend(IOB_TAGS[i] for i in path)
    return score_collapsed(gold, pred, CLASSES)


def train_unimodal_mlp(corpus, modality, hidden=64, seed=0, epochs=10,
                       batch_size=64, max_lr=5e-3):
    """Embedding-only classifier on one modality, skipping absent pages."""
    attr = f"{modality}_embedding"
    train_pages = [p for p in iter_pages(corpus, "train")
                   if getattr(p, attr) is not None]
    if not train_pages:
        raise ValueError(f"no training pages with {modality} embeddings")
    dim = len(getattr(train_pages[0], attr))
    x = np.stack([getattr(p, attr) for p in train_pages]).astype(np.float32)
    y = np.array([CLASS_IDS[p.label] for p in train_pages])
    model = MlpClassifier(dim, hidden, seed=seed)
    opt = Adam(model.named_params())
    steps = max(1, int(np.ceil(len(x) / batch_size))) * epochs
    sched = OneCycleSchedule(total_steps=steps, max_lr=max_lr)
    rng = RngState(seed).consumer("mlp-shuffle")
    step = 0
    for _ in range(epochs):
        for idx in iterate_minibatches(len(x), batch_size, rng):
            model.zero_grads()
            logits = model.forward(x[idx], train=True)
            _, dlogits = cross_entropy(logits, y[idx])
            model.backward(dlogits)
            opt.step(model.named_grads(), sched.lr(step))
            step += 1
    return model


def evaluate_unimodal_mlp(model, corpus, modality, split="test",
                          fallback=None) -> MetricsReport:
    """Pages without the modality fall back to a constant class."""
    attr = f"{modality}_embedding"
    pages = list(iter_pages(corpus, split))
    fallback = fallback or CLASSES[3]  # majority class by construction
    preds = []
    for page in pages:
        emb = getattr(page, attr)
        if emb is None:
            preds.append(fallback)
        else:
            probs = model.predict_probs(emb[None, :].astype(np.float32))
            preds.append(CLASSES[int(probs.argmax())])
    return score([p.label for p in pages], preds, CLASSES)


@dataclass
class OrderingResult:
    """Macro-F1 roster plus the detailed reports for one experiment run."""

    macro: dict = field(default_factory=dict)
    reports: dict = field(default_factory=dict)
    first_page: tuple | None = None

    def add(self, name, report):
        self.reports[name] = report
        self.macro[name] = report.macro_f1


def run_ordering_experiment(synth_config: SynthConfig, train_seed=0,
                            with_zero_variant=False, with_first_page=True,
                            fm_epochs=12, text_epochs=5, seq_epochs=8,
                            verbose=False) -> OrderingResult:
    """Trains the model roster on one synthetic corpus and scores the
    test split under the uniform all-pages protocol."""
    corpus = generate_synthetic(synth_config)
    result = OrderingResult()
    test_pages = list(iter_pages(corpus, "test"))
    test_gold = [p.label for p in test_pages]

    majority = MajorityBaseline([p.label for p in iter_pages(corpus, "train")])
    result.add("majority", score(test_gold,
                                 [majority.predict_page(p) for p in test_pages],
                                 CLASSES))

    cnn, vocab, _, _ = train_text_cnn(corpus, SMALL_TEXT_CNN, weighted=False,
                                      seed=train_seed, epochs=text_epochs,
                                      verbose=verbose)
    ids = encode_pages(test_pages, vocab, SMALL_TEXT_CNN.max_tokens)
    result.add("textcnn", evaluate_text_cnn(cnn, ids, test_gold))

    image_mlp = train_unimodal_mlp(corpus, "image", seed=train_seed)
    result.add("image_only", evaluate_unimodal_mlp(image_mlp, corpus, "image"))

    text_dim, image_dim = corpus_embedding_dims(corpus)
    fm_config = FusionConfig(text_dim=text_dim, image_dim=image_dim, hidden=128)
    fm, _, _ = train_fusion(corpus, fm_config, seed=train_seed,
                            epochs=fm_epochs, verbose=verbose)
    test_data = embedding_arrays(test_pages, text_dim, image_dim)
    result.add("fm", evaluate_fusion(fm, test_data, test_gold))
    # the w/o-img-acts ablation needs text, so it (and its FM reference)
    # are scored on the text-present subset of the test split
    text_pages = [p for p in test_pages if p.text_embedding is not None]
    text_subset = embedding_arrays(text_pages, text_dim, image_dim)
    text_subset_gold = [p.label for p in text_pages]
    result.add("fm_text_subset",
               evaluate_fusion(fm, text_subset, text_subset_gold))
    result.add("fm_no_img", evaluate_fusion(fm, text_subset, text_subset_gold,
                                            force_missing_image=True))

    if with_zero_variant:
        zero_config = FusionConfig(text_dim=text_dim, image_dim=image_dim,
                                   hidden=128, missing_mode="zero")
        fm_zero, _, _ = train_fusion(corpus, zero_config, seed=train_seed,
                                     epochs=fm_epochs, verbose=verbose)
        result.add("fm_zero", evaluate_fusion(fm_zero, test_data, test_gold))

    crf_model, _ = train_fm_crf(corpus, fm)
    result.add("fm_crf", evaluate_fm_crf(corpus, fm, crf_model))

    seq_data = seq_dataset(corpus, fm, "concat")
    seq_config = SeqModelConfig(variant="bilstm-f",
                                input_dim=fm.config.concat_dim)
    seq_model, _, _ = train_seq(seq_data, seq_config, seed=train_seed,
                                epochs=seq_epochs, verbose=verbose)
    gold_tags, pred_tags = [], []
    for x, tags in seq_data["test"]:
        gold_tags.extend(IOB_TAGS[i] for i in tags)
        pred_tags.extend(IOB_TAGS[i] for i in seq_model.decode(x))
    result.add("bilstm_f", score_collapsed(gold_tags, pred_tags, CLASSES))

    if with_first_page:
        probs = fm.predict_probs(*test_data[:4])
        preds = [CLASSES[i] for i in probs.argmax(axis=1)]
        flags = [p.is_first_page for p in test_pages]
        result.first_page = score_by_first_page(test_gold, preds, flags, CLASSES)
    return result

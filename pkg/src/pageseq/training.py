"""Shared training-loop plumbing: mini-batch iteration and epoch logs."""

from __future__ import annotations

import json
from dataclasses import dataclass


def iterate_minibatches(n, batch_size, rng):
    """Yields index arrays covering a shuffled range(n)."""
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


@dataclass
class EpochLogRow:
    epoch: int
    lr: float
    train_loss: float
    val_macro_f1: float
    val_weighted_f1: float
    saved: bool


class TrainLog:
    def __init__(self):
        self.rows: list[EpochLogRow] = []

    def add(self, **kw):
        self.rows.append(EpochLogRow(**kw))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for row in self.rows:
                fh.write(json.dumps(row.__dict__) + "\n")

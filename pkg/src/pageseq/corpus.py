"""Dataset model and on-disk corpus formats.

Directory layout::

    root/
      manifest.json                  {"splits": {"train": [ids], ...}}
      <split>/pages.jsonl            one page per line
      <split>/text.emb + text.idx.jsonl     optional text embeddings
      <split>/image.emb + image.idx.jsonl   optional image embeddings

Embedding files are binary: magic ``PSEQEMB1``, a length-prefixed
modality tag, u32 dim, u32 row count, then little-endian float32 rows.
Row order is defined by the sibling JSONL index
(lawsuit_id, page_index, row).
"""

from __future__ import annotations

import json
import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .iob import CLASSES

SPLITS = ["train", "validation", "test"]
EMB_MAGIC = b"PSEQEMB1"


class CorpusError(ValueError):
    """Raised on malformed or inconsistent corpus files."""


@dataclass
class Page:
    lawsuit_id: str
    page_index: int
    label: str
    is_first_page: bool
    text_tokens: list | None = None
    text_embedding: np.ndarray | None = None
    image_embedding: np.ndarray | None = None

    @property
    def has_text(self) -> bool:
        return self.text_tokens is not None or self.text_embedding is not None

    @property
    def has_image(self) -> bool:
        return self.image_embedding is not None

    def validate(self):
        if self.label not in CLASSES:
            raise CorpusError(f"{self.lawsuit_id}:{self.page_index}: "
                              f"unknown label {self.label!r}")
        if not self.has_text and not self.has_image:
            raise CorpusError(f"{self.lawsuit_id}:{self.page_index}: "
                              "page has neither text nor image data")


@dataclass
class Lawsuit:
    id: str
    pages: list = field(default_factory=list)

    def validate(self):
        for i, page in enumerate(self.pages):
            if page.page_index != i:
                raise CorpusError(f"lawsuit {self.id}: page indices not "
                                  f"contiguous at position {i}")
            page.validate()

    def labels(self):
        return [p.label for p in self.pages]

    def first_page_flags(self):
        return [p.is_first_page for p in self.pages]


Corpus = dict  # split name -> list[Lawsuit]


def _write_emb(path, idx_path, rows, index):
    dim = rows.shape[1] if len(rows) else 0
    with open(path, "wb") as fh:
        fh.write(EMB_MAGIC)
        tag = path.name.split(".")[0].encode("utf-8")
        fh.write(struct.pack("<B", len(tag)))
        fh.write(tag)
        fh.write(struct.pack("<II", dim, len(rows)))
        fh.write(np.asarray(rows, dtype="<f4").tobytes(order="C"))
    with open(idx_path, "w", encoding="utf-8") as fh:
        for lawsuit_id, page_index, row in index:
            fh.write(json.dumps({"lawsuit_id": lawsuit_id,
                                 "page_index": page_index, "row": row}) + "\n")


def _read_emb(path, idx_path):
    blob = Path(path).read_bytes()
    if blob[:8] != EMB_MAGIC:
        raise CorpusError(f"{path}: bad magic bytes")
    off = 8
    (taglen,) = struct.unpack_from("<B", blob, off); off += 1 + taglen
    dim, count = struct.unpack_from("<II", blob, off); off += 8
    data = np.frombuffer(blob, dtype="<f4", count=count * dim, offset=off)
    rows = data.reshape(count, dim)
    index = []
    with open(idx_path, encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            index.append((rec["lawsuit_id"], rec["page_index"], rec["row"]))
    if len(index) != count:
        raise CorpusError(f"{idx_path}: index has {len(index)} rows, "
                          f"embedding file has {count}")
    return rows, index


def save_corpus(corpus: Corpus, root):
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    manifest = {"splits": {s: [ls.id for ls in corpus.get(s, [])] for s in SPLITS}}
    (root / "manifest.json").write_text(
        json.dumps(manifest, ensure_ascii=False, indent=2), encoding="utf-8")
    for split in SPLITS:
        split_dir = root / split
        split_dir.mkdir(exist_ok=True)
        text_rows, text_idx = [], []
        img_rows, img_idx = [], []
        with open(split_dir / "pages.jsonl", "w", encoding="utf-8") as fh:
            for lawsuit in corpus.get(split, []):
                for page in lawsuit.pages:
                    fh.write(json.dumps({
                        "lawsuit_id": page.lawsuit_id,
                        "page_index": page.page_index,
                        "label": page.label,
                        "is_first_page": page.is_first_page,
                        "text_tokens": page.text_tokens,
                    }, ensure_ascii=False) + "\n")
                    if page.text_embedding is not None:
                        text_idx.append((page.lawsuit_id, page.page_index,
                                         len(text_rows)))
                        text_rows.append(page.text_embedding)
                    if page.image_embedding is not None:
                        img_idx.append((page.lawsuit_id, page.page_index,
                                        len(img_rows)))
                        img_rows.append(page.image_embedding)
        for name, rows, idx in (("text", text_rows, text_idx),
                                ("image", img_rows, img_idx)):
            arr = np.asarray(rows, dtype=np.float32) if rows else \
                np.zeros((0, 0), dtype=np.float32)
            _write_emb(split_dir / f"{name}.emb",
                       split_dir / f"{name}.idx.jsonl", arr, idx)


def load_corpus(root) -> Corpus:
    root = Path(root)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise CorpusError(f"missing manifest: {manifest_path}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    corpus: Corpus = {}
    seen: dict[str, str] = {}
    for split in SPLITS:
        ids = manifest["splits"].get(split, [])
        for lid in ids:
            if lid in seen:
                raise CorpusError(f"lawsuit {lid} appears in both "
                                  f"{seen[lid]} and {split}")
            seen[lid] = split
        split_dir = root / split
        lawsuits: dict[str, Lawsuit] = {lid: Lawsuit(lid) for lid in ids}
        pages_path = split_dir / "pages.jsonl"
        if not pages_path.exists():
            if ids:
                raise CorpusError(f"missing pages file: {pages_path}")
            corpus[split] = []
            continue
        with open(pages_path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                rec = json.loads(line)
                lid = rec["lawsuit_id"]
                if lid not in lawsuits:
                    raise CorpusError(f"{pages_path}:{lineno}: lawsuit {lid} "
                                      "not in manifest")
                lawsuits[lid].pages.append(Page(
                    lawsuit_id=lid,
                    page_index=rec["page_index"],
                    label=rec["label"],
                    is_first_page=rec["is_first_page"],
                    text_tokens=rec.get("text_tokens"),
                ))
        for name, attr in (("text", "text_embedding"), ("image", "image_embedding")):
            emb_path = split_dir / f"{name}.emb"
            if not emb_path.exists():
                continue
            rows, index = _read_emb(emb_path, split_dir / f"{name}.idx.jsonl")
            for lid, page_index, row in index:
                if lid not in lawsuits:
                    raise CorpusError(f"{name} index references unknown "
                                      f"lawsuit {lid}")
                lawsuits[lid].pages[page_index].__setattr__(attr, rows[row].copy())
        split_lawsuits = []
        for lid in ids:
            lawsuit = lawsuits[lid]
            if not lawsuit.pages:
                raise CorpusError(f"manifest lists lawsuit {lid} with no pages "
                                  f"on disk under {split_dir}")
            lawsuit.pages.sort(key=lambda p: p.page_index)
            lawsuit.validate()
            split_lawsuits.append(lawsuit)
        corpus[split] = split_lawsuits
    return corpus


def iter_pages(corpus: Corpus, split):
    for lawsuit in corpus[split]:
        yield from lawsuit.pages


def audit_splits(corpus: Corpus) -> dict:
    """Split-integrity report: partition check, class counts, missing tallies."""
    violations = []
    seen: dict[str, str] = {}
    for split in SPLITS:
        for lawsuit in corpus.get(split, []):
            if lawsuit.id in seen:
                violations.append(f"lawsuit {lawsuit.id} in both "
                                  f"{seen[lawsuit.id]} and {split}")
            else:
                seen[lawsuit.id] = split
            try:
                lawsuit.validate()
            except CorpusError as exc:
                violations.append(str(exc))
    class_counts = {}
    missing = {}
    for split in SPLITS:
        counts = Counter(p.label for p in iter_pages(corpus, split)) \
            if split in corpus else Counter()
        class_counts[split] = {c: counts.get(c, 0) for c in CLASSES}
        pages = list(iter_pages(corpus, split)) if split in corpus else []
        missing[split] = {
            "pages": len(pages),
            "missing_text": sum(1 for p in pages if not p.has_text),
            "missing_image": sum(1 for p in pages if not p.has_image),
        }
    return {"violations": violations, "class_counts": class_counts,
            "missing": missing}

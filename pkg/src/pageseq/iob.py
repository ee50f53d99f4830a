"""IOB tagging codec: B- marks a document's first page, I- the rest."""

from __future__ import annotations

CLASSES = ["Acórdão", "ARE", "Despacho", "Others", "RE", "Sentença"]
CLASS_TO_ID = {c: i for i, c in enumerate(CLASSES)}

IOB_TAGS = [f"{prefix}-{c}" for c in CLASSES for prefix in ("B", "I")]
TAG_TO_ID = {t: i for i, t in enumerate(IOB_TAGS)}


def iob_encode(page_labels, first_page_flags):
    """Prepends B- to first-page labels and I- to the rest."""
    labels = list(page_labels)
    flags = list(first_page_flags)
    if len(labels) != len(flags):
        raise ValueError("labels and flags lengths differ")
    return [("B-" if f else "I-") + lab for lab, f in zip(labels, flags)]


def iob_collapse(tags):
    """Strips the B-/I- prefix, recovering the base class sequence."""
    out = []
    for tag in tags:
        if not tag.startswith(("B-", "I-")) or tag[2:] not in CLASS_TO_ID:
            raise ValueError(f"malformed IOB tag {tag!r}")
        out.append(tag[2:])
    return out

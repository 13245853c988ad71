"""Corpus re-interpretation: turning general software data into training units.

Documentation paragraphs become collocation-labeled passages, bug-fix reviews
become faceted quadruplets, and quadruplet pairs un-pivot into flat labeled
batches for the triplet machinery.
"""

from __future__ import annotations

import logging
import re
import zlib
from dataclasses import dataclass, replace
from typing import Callable, Iterator, Sequence

import numpy as np

from codecomply.corpus.types import (
    BugFixRecord,
    CodeSnippet,
    Facet,
    LabeledItem,
    Modality,
    Policy,
    Quadruplet,
)
from codecomply.errors import CorpusError

log = logging.getLogger(__name__)

MIN_PASSAGE_LEN = 8
DEFAULT_PASSAGE_LEN = 16

POLICY_CUE_WORDS = ("should", "must", "avoid", "use", "never", "prefer", "do not")
_CUE_RE = re.compile(r"\b(" + "|".join(re.escape(w) for w in POLICY_CUE_WORDS) + r")\b")


def label_counter(start: int = 0) -> Iterator[int]:
    """Fresh opaque group labels."""
    n = start
    while True:
        yield n
        n += 1


def segment_documentation(
    paragraphs: Sequence[str], passage_len: int = DEFAULT_PASSAGE_LEN
) -> list[LabeledItem]:
    """Split paragraphs into non-overlapping fixed-length passages.

    All passages of one paragraph share a label; a final short remainder is
    kept only when it reaches half the passage length. Lengths are counted in
    whitespace tokens.
    """
    if passage_len < MIN_PASSAGE_LEN:
        raise CorpusError(f"passage_len must be >= {MIN_PASSAGE_LEN}, got {passage_len}")
    items: list[LabeledItem] = []
    labels = label_counter()
    for paragraph in paragraphs:
        words = paragraph.split()
        if not words:
            continue
        label = next(labels)
        for start in range(0, len(words), passage_len):
            piece = words[start : start + passage_len]
            if len(piece) < passage_len and len(piece) < passage_len / 2:
                continue
            items.append(
                LabeledItem(content=" ".join(piece), label=label, modality=Modality.TEXT)
            )
    return items


@dataclass(frozen=True)
class ReinterpretedFix:
    """Output of reinterpreting one bug-fix record.

    The minted policy and the two snippets accompany the quadruplets so the
    caller can register them in a corpus; both quadruplets reference the same
    minted policy and leave the irrelevant slot unfilled.
    """

    policy: Policy
    before_snippet: CodeSnippet
    after_snippet: CodeSnippet
    noncompliant: Quadruplet
    compliant: Quadruplet


def reinterpret_bugfix(record: BugFixRecord) -> ReinterpretedFix:
    """Treat a review comment as a policy; code-before is the non-compliant
    example, code-after the compliant one."""
    policy = Policy(id=f"bf:{record.id}", text=record.comment, source="bugfix_comment")
    before_id, after_id = f"{record.id}:before", f"{record.id}:after"
    before = CodeSnippet(
        id=before_id, code=record.code_before, ground_truth=((policy.id, Facet.NONCOMPLIANT),)
    )
    after = CodeSnippet(
        id=after_id, code=record.code_after, ground_truth=((policy.id, Facet.COMPLIANT),)
    )
    return ReinterpretedFix(
        policy=policy,
        before_snippet=before,
        after_snippet=after,
        noncompliant=Quadruplet(
            policy_id=policy.id,
            facet=Facet.NONCOMPLIANT,
            matching_code_id=before_id,
            opposite_code_id=after_id,
        ),
        compliant=Quadruplet(
            policy_id=policy.id,
            facet=Facet.COMPLIANT,
            matching_code_id=after_id,
            opposite_code_id=before_id,
        ),
    )


def mine_irrelevant(record_id: str, pool: Sequence[BugFixRecord], rng_seed: int) -> str:
    """Pick a snippet id from an unrelated record, uniformly at random."""
    others = [r for r in pool if r.id != record_id]
    if not others:
        raise CorpusError(f"pool too small to mine an irrelevant snippet for {record_id!r}")
    rng = np.random.default_rng(rng_seed)
    record = others[int(rng.integers(len(others)))]
    side = "before" if rng.integers(2) == 0 else "after"
    return f"{record.id}:{side}"


def quadruplets_from_records(
    records: Sequence[BugFixRecord],
    foreign_snippets: Sequence[CodeSnippet] = (),
    seed: int = 0,
) -> tuple[
    list[tuple[Quadruplet, Quadruplet]], dict[str, str], dict[str, str]
]:
    """Reinterpret bug-fix records as faceted quadruplet pairs plus lookups.

    Both facets of a record share one irrelevant snippet. When a foreign pool
    is given, odd records draw from it and even records mine another record;
    mining only from records teaches "irrelevant = another family's stems"
    and never shows the model stem-free code. Mining seeds come from crc32 of
    the record id: stable across processes, unlike ``hash``.
    """
    pairs: list[tuple[Quadruplet, Quadruplet]] = []
    policy_texts: dict[str, str] = {}
    snippet_codes: dict[str, str] = {}
    foreign_rng = np.random.default_rng([seed, 4242])
    for i, record in enumerate(records):
        fix = reinterpret_bugfix(record)
        if foreign_snippets and i % 2 == 1:
            snippet = foreign_snippets[int(foreign_rng.integers(len(foreign_snippets)))]
            irrelevant_id = f"aux:{snippet.id}"
            snippet_codes[irrelevant_id] = snippet.code
        else:
            irrelevant_id = mine_irrelevant(
                record.id, records, rng_seed=zlib.crc32(record.id.encode())
            )
        pairs.append(
            (
                replace(fix.compliant, irrelevant_code_id=irrelevant_id),
                replace(fix.noncompliant, irrelevant_code_id=irrelevant_id),
            )
        )
        policy_texts[fix.policy.id] = fix.policy.text
        snippet_codes[f"{record.id}:before"] = record.code_before
        snippet_codes[f"{record.id}:after"] = record.code_after
    return pairs, policy_texts, snippet_codes


def default_policy_predicate(comment: str) -> bool:
    """Heuristic stand-in for a learned policy-likeness filter: an
    imperative/modal cue plus at least four tokens."""
    if len(comment.split()) < 4:
        return False
    return _CUE_RE.search(comment.lower()) is not None


def filter_policy_like(
    comments: Sequence[str], predicate: Callable[[str], bool] = default_policy_predicate
) -> list[str]:
    """Order-preserving subset of policy-like comments; logs the retained fraction."""
    retained = [c for c in comments if predicate(c)]
    fraction = len(retained) / len(comments) if comments else 1.0
    log.info("policy-likeness filter retained %d/%d comments (%.1f%%)",
             len(retained), len(comments), 100.0 * fraction)
    return retained


def unpivot(
    quadruplet_pairs: Sequence[tuple[Quadruplet | None, Quadruplet | None]],
    policy_texts: dict[str, str],
    snippet_codes: dict[str, str],
) -> list[LabeledItem]:
    """Flatten faceted quadruplet pairs into a labeled bimodal batch.

    Per pair this emits policy-facet text and matching code under a shared
    fresh label (one label per present facet) plus the shared irrelevant
    snippet under a label no other item carries. Pairs with a missing facet
    contribute only the present side.
    """
    items: list[LabeledItem] = []
    labels = label_counter()
    for plus, minus in quadruplet_pairs:
        if plus is None and minus is None:
            continue
        _check_pair(plus, minus)
        irrelevant_id = next(
            (q.irrelevant_code_id for q in (plus, minus) if q is not None and q.irrelevant_code_id),
            None,
        )
        for quad in (plus, minus):
            if quad is None:
                continue
            label = next(labels)
            items.append(
                LabeledItem(
                    content=policy_texts[quad.policy_id],
                    label=label,
                    modality=Modality.TEXT,
                    facet=quad.facet,
                    ref_id=quad.policy_id,
                )
            )
            items.append(
                LabeledItem(
                    content=snippet_codes[quad.matching_code_id],
                    label=label,
                    modality=Modality.CODE,
                    ref_id=quad.matching_code_id,
                )
            )
        if irrelevant_id is not None:
            items.append(
                LabeledItem(
                    content=snippet_codes[irrelevant_id],
                    label=next(labels),
                    modality=Modality.CODE,
                    ref_id=irrelevant_id,
                )
            )
    return items


def _check_pair(plus: Quadruplet | None, minus: Quadruplet | None) -> None:
    if plus is not None and plus.facet is not Facet.COMPLIANT:
        raise CorpusError(f"first quadruplet of a pair must be compliant, got {plus.facet}")
    if minus is not None and minus.facet is not Facet.NONCOMPLIANT:
        raise CorpusError(f"second quadruplet of a pair must be non-compliant, got {minus.facet}")
    if plus is not None and minus is not None:
        if plus.policy_id != minus.policy_id:
            raise CorpusError("paired quadruplets must reference one policy")
        if (
            plus.irrelevant_code_id is not None
            and minus.irrelevant_code_id is not None
            and plus.irrelevant_code_id != minus.irrelevant_code_id
        ):
            raise CorpusError("paired quadruplets must share their irrelevant snippet")

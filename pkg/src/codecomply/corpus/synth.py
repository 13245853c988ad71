"""Deterministic synthetic corpora with planted compliance patterns.

Each policy family owns two pseudo-word stems shared between its policy text
and its snippets; compliant snippets additionally carry a word from a small
corpus-wide "good" lexicon, non-compliant ones a "bad" word, distractors
neither. Families are partitioned into train and held-out so that held-out
stems never occur in any training stream, while the facet lexicons recur
across families and can be learned from the training ones alone.

Code is emitted as space-separated token streams so a policy and its snippets
share byte-identical chunks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from codecomply.corpus.types import BugFixRecord, CodeSnippet, Facet, Policy
from codecomply.errors import CorpusError

GOOD_WORDS = ("sanitized", "validated", "guarded")
BAD_WORDS = ("tainted", "unchecked", "leaky")

# Comments that the policy-likeness heuristic must reject: no cue word, or
# fewer than four tokens.
NOISE_COMMENTS = ("lgtm", "nice catch", "ship it", "thanks merging this", "typo")

_SYLLABLES = tuple(c + v for c in "bdfgklmnprstvz" for v in "aeiou")
_CODE_FILLER = ("handler", "worker", "parser", "writer", "loader", "mapper")

_POLICY_TEMPLATE = (
    "the {s0} {s1} routines must use {good} and never allow {bad} handling"
)
_CODE_TEMPLATE = (
    "def {s0} {kind} ( arg ) : temp = {w} ( {s1} arg ) return {w} ( temp )"
)
_COMMENT_TEMPLATE = "the {s0} {s1} code must use {good} and never {bad}"


@dataclass(frozen=True)
class Family:
    index: int
    stems: tuple[str, str]
    held_out: bool

    @property
    def policy_id(self) -> str:
        return f"syn:{'h' if self.held_out else 't'}{self.index:03d}"


@dataclass(frozen=True)
class SynthCorpus:
    policies: list[Policy]
    snippets: list[CodeSnippet]
    train_policy_ids: tuple[str, ...]
    heldout_policy_ids: tuple[str, ...]

    def policy_by_id(self, policy_id: str) -> Policy:
        for p in self.policies:
            if p.id == policy_id:
                return p
        raise KeyError(policy_id)


def default_held_out(n_families: int) -> int:
    return max(1, n_families // 3)


def _pseudo_words(rng: np.random.Generator, n: int, taken: set[str]) -> list[str]:
    words: list[str] = []
    while len(words) < n:
        word = "".join(_SYLLABLES[int(i)] for i in rng.integers(len(_SYLLABLES), size=3))
        if word in taken:
            continue
        taken.add(word)
        words.append(word)
    return words


def build_lexicon(seed: int, n_families: int, n_held_out: int | None = None) -> list[Family]:
    """Per-seed family stems, the last n_held_out families held out."""
    if n_families < 1:
        raise CorpusError(f"need at least one family, got {n_families}")
    if n_held_out is None:
        n_held_out = default_held_out(n_families)
    if not 0 <= n_held_out < n_families:
        raise CorpusError(
            f"held-out count {n_held_out} must leave at least one training family"
        )
    rng = np.random.default_rng([seed, 0])
    taken = set(GOOD_WORDS) | set(BAD_WORDS) | set(_CODE_FILLER)
    families = []
    for i in range(n_families):
        stems = _pseudo_words(rng, 2, taken)
        families.append(
            Family(index=i, stems=(stems[0], stems[1]), held_out=i >= n_families - n_held_out)
        )
    return families


def _policy_text(family: Family) -> str:
    return _POLICY_TEMPLATE.format(
        s0=family.stems[0],
        s1=family.stems[1],
        good=" ".join(GOOD_WORDS),
        bad=" ".join(BAD_WORDS),
    )


def _code(rng: np.random.Generator, stems: tuple[str, str], word: str) -> str:
    kind = _CODE_FILLER[int(rng.integers(len(_CODE_FILLER)))]
    return _CODE_TEMPLATE.format(s0=stems[0], s1=stems[1], kind=kind, w=word)


def _facet_word(rng: np.random.Generator, facet: Facet) -> str:
    lexicon = GOOD_WORDS if facet is Facet.COMPLIANT else BAD_WORDS
    return lexicon[int(rng.integers(len(lexicon)))]


def synth_corpus(
    seed: int,
    n_policy_families: int,
    snippets_per_family: int,
    n_distractors: int,
    n_held_out: int | None = None,
) -> SynthCorpus:
    """Benchmark corpus: one policy per family, half compliant and half
    non-compliant snippets each, plus patternless distractors."""
    if snippets_per_family < 1 or n_distractors < 0:
        raise CorpusError("counts must be positive (distractors may be zero)")
    families = build_lexicon(seed, n_policy_families, n_held_out)
    rng = np.random.default_rng([seed, 1])
    policies = [
        Policy(id=f.policy_id, text=_policy_text(f), source="synthetic") for f in families
    ]
    snippets: list[CodeSnippet] = []
    for family in families:
        for j in range(snippets_per_family):
            facet = Facet.COMPLIANT if j % 2 == 0 else Facet.NONCOMPLIANT
            snippets.append(
                CodeSnippet(
                    id=f"s:{family.policy_id}:{facet.value}:{j:03d}",
                    code=_code(rng, family.stems, _facet_word(rng, facet)),
                    ground_truth=((family.policy_id, facet),),
                )
            )
    taken = {s for f in families for s in f.stems}
    taken |= set(GOOD_WORDS) | set(BAD_WORDS) | set(_CODE_FILLER)
    filler = _pseudo_words(rng, 60, taken)
    for j in range(n_distractors):
        words = [filler[int(i)] for i in rng.integers(len(filler), size=3)]
        snippets.append(
            CodeSnippet(
                id=f"s:x:{j:05d}",
                code=_CODE_TEMPLATE.format(s0=words[0], s1=words[1], kind=words[2],
                                           w=words[0]),
                ground_truth=(),
            )
        )
    return SynthCorpus(
        policies=policies,
        snippets=snippets,
        train_policy_ids=tuple(f.policy_id for f in families if not f.held_out),
        heldout_policy_ids=tuple(f.policy_id for f in families if f.held_out),
    )


def synth_docs(
    seed: int,
    n_policy_families: int,
    n_held_out: int | None = None,
    sentences_per_paragraph: int = 4,
) -> list[str]:
    """Documentation paragraphs over training families only.

    Each family yields one paragraph around its stems and the good lexicon and
    one around the bad lexicon, so facet words co-occur within a label.
    """
    families = build_lexicon(seed, n_policy_families, n_held_out)
    rng = np.random.default_rng([seed, 2])
    paragraphs = []
    for family in families:
        if family.held_out:
            continue
        s0, s1 = family.stems
        for lexicon in (GOOD_WORDS, BAD_WORDS):
            sentences = []
            for _ in range(sentences_per_paragraph):
                w = lexicon[int(rng.integers(len(lexicon)))]
                v = lexicon[int(rng.integers(len(lexicon)))]
                sentences.append(f"the {s0} {s1} module keeps {w} paths {v} here")
            paragraphs.append(" ".join(sentences))
    return paragraphs


def synth_bugfixes(
    seed: int,
    n_policy_families: int,
    records_per_family: int = 6,
    noise_per_family: int = 2,
    n_held_out: int | None = None,
) -> list[BugFixRecord]:
    """Bug-fix records over training families.

    True records carry a policy-like comment, a bad-word before and a good-word
    after. Noise records carry a non-policy comment and inverted facet words;
    the policy-likeness heuristic rejects exactly these.
    """
    families = build_lexicon(seed, n_policy_families, n_held_out)
    rng = np.random.default_rng([seed, 3])
    records = []
    for family in families:
        if family.held_out:
            continue
        s0, s1 = family.stems
        for j in range(records_per_family):
            good = _facet_word(rng, Facet.COMPLIANT)
            bad = _facet_word(rng, Facet.NONCOMPLIANT)
            records.append(
                BugFixRecord(
                    id=f"fix:{family.policy_id}:{j:03d}",
                    comment=_COMMENT_TEMPLATE.format(s0=s0, s1=s1, good=good, bad=bad),
                    code_before=_code(rng, family.stems, bad),
                    code_after=_code(rng, family.stems, good),
                )
            )
        for j in range(noise_per_family):
            good = _facet_word(rng, Facet.COMPLIANT)
            bad = _facet_word(rng, Facet.NONCOMPLIANT)
            records.append(
                BugFixRecord(
                    id=f"noise:{family.policy_id}:{j:03d}",
                    comment=NOISE_COMMENTS[int(rng.integers(len(NOISE_COMMENTS)))],
                    code_before=_code(rng, family.stems, good),
                    code_after=_code(rng, family.stems, bad),
                )
            )
    return records


def cc_pairs_from_records(records: list[BugFixRecord]) -> list[tuple[str, str]]:
    """Code-comment pairs: a review comment is made on the code-before."""
    return [(r.code_before, r.comment) for r in records]

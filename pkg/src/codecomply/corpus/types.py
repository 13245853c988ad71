"""Domain types for policies, code snippets and training units.

A corpus holds two modalities: natural-language coding policies and raw code
snippets. Relations between them are expressed by the two facets (compliant /
non-compliant); irrelevance is the absence of a relation, never a third facet.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from codecomply.errors import CorpusError

POLICY_SOURCES = frozenset({"cwe", "cbp", "bugfix_comment", "synthetic", "user"})


class Facet(enum.Enum):
    """The two sides of a policy. Irrelevance is not a Facet."""

    COMPLIANT = "compliant"
    NONCOMPLIANT = "noncompliant"

    @property
    def opposite(self) -> "Facet":
        return Facet.NONCOMPLIANT if self is Facet.COMPLIANT else Facet.COMPLIANT

    def __str__(self) -> str:  # pragma: no cover - convenience
        return self.value


class Modality(enum.Enum):
    TEXT = "text"
    CODE = "code"


@dataclass(frozen=True)
class Policy:
    id: str
    text: str
    source: str

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise CorpusError(f"policy {self.id!r}: text is empty")
        if self.source not in POLICY_SOURCES:
            raise CorpusError(f"policy {self.id!r}: unknown source {self.source!r}")


@dataclass(frozen=True)
class CodeSnippet:
    id: str
    code: str
    ground_truth: tuple[tuple[str, Facet], ...] = ()

    def __post_init__(self) -> None:
        if not self.code:
            raise CorpusError(f"snippet {self.id!r}: code is empty")

    def facet_for(self, policy_id: str) -> Facet | None:
        for pid, facet in self.ground_truth:
            if pid == policy_id:
                return facet
        return None


@dataclass(frozen=True)
class Quadruplet:
    """One faceted training unit: anchor policy facet plus three code slots.

    ``opposite_code_id`` and ``irrelevant_code_id`` may be None when the source
    data only offers a partial view (e.g. bug-fix records before irrelevant
    mining has run).
    """

    policy_id: str
    facet: Facet
    matching_code_id: str
    opposite_code_id: str | None = None
    irrelevant_code_id: str | None = None

    def __post_init__(self) -> None:
        ids = [
            i
            for i in (self.matching_code_id, self.opposite_code_id, self.irrelevant_code_id)
            if i is not None
        ]
        if len(set(ids)) != len(ids):
            raise CorpusError(
                f"quadruplet for policy {self.policy_id!r}: code ids must be pairwise distinct"
            )


@dataclass(frozen=True)
class BugFixRecord:
    id: str
    comment: str
    code_before: str
    code_after: str

    def __post_init__(self) -> None:
        if not self.comment.strip():
            raise CorpusError(f"bug-fix record {self.id!r}: comment is empty")
        if self.code_before == self.code_after:
            raise CorpusError(f"bug-fix record {self.id!r}: before and after code are identical")


@dataclass(frozen=True)
class LabeledItem:
    """Bimodal (content, label) unit consumed by the triplet machinery.

    ``facet`` is set only for policy-text items; it tells the encoder to apply
    the facet conditioning. ``ref_id`` optionally points back at the corpus
    object the content came from.
    """

    content: str
    label: int
    modality: Modality
    facet: Facet | None = None
    ref_id: str | None = None

    def __post_init__(self) -> None:
        if not self.content:
            raise CorpusError("labeled item: content is empty")
        if self.facet is not None and self.modality is not Modality.TEXT:
            raise CorpusError("labeled item: only text items carry a facet")


@dataclass
class Corpus:
    """Container enforcing id uniqueness and ground-truth resolution."""

    policies: dict[str, Policy] = field(default_factory=dict)
    snippets: dict[str, CodeSnippet] = field(default_factory=dict)

    def add_policy(self, policy: Policy) -> None:
        if policy.id in self.policies:
            raise CorpusError(f"duplicate policy id {policy.id!r}")
        self.policies[policy.id] = policy

    def add_snippet(self, snippet: CodeSnippet) -> None:
        if snippet.id in self.snippets:
            raise CorpusError(f"duplicate snippet id {snippet.id!r}")
        self.snippets[snippet.id] = snippet

    def validate(self) -> None:
        for snippet in self.snippets.values():
            for pid, _facet in snippet.ground_truth:
                if pid not in self.policies:
                    raise CorpusError(
                        f"snippet {snippet.id!r}: ground-truth policy {pid!r} not in corpus"
                    )

    def labeled_snippets(self, policy_id: str, facet: Facet) -> list[CodeSnippet]:
        return [
            s
            for s in self.snippets.values()
            if any(pid == policy_id and f is facet for pid, f in s.ground_truth)
        ]

    def distractors(self) -> list[CodeSnippet]:
        return [s for s in self.snippets.values() if not s.ground_truth]

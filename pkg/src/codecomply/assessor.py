"""Zero-shot assessment: compliance classification, faceted search, metrics.

A policy is embedded once per facet; code is embedded unconditioned. Relevance
is a threshold test against the renormalized average of the two facet
embeddings, and the compliance label is whichever facet embedding sits closer.
Search ranks an immutable index of snippet embeddings by squared distance.
"""

from __future__ import annotations

import enum
import json
import logging
import math
import struct
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import encoder as enc
from .corpus.bpe import Vocabulary, tokenize
from .corpus.types import CodeSnippet, Facet, Policy
from .losses import sq_dist

log = logging.getLogger(__name__)

INDEX_FORMAT = 1
_INDEX_MAGIC = b"P2CX"


class AssessError(Exception):
    pass


class StaleIndexError(AssessError):
    """Index was built by a different model than the one now in use."""


class VerdictLabel(enum.Enum):
    COMPLIANT = "compliant"
    NONCOMPLIANT = "noncompliant"
    IRRELEVANT = "irrelevant"


@dataclass(frozen=True)
class Verdict:
    label: VerdictLabel
    d_avg: float
    p_compliant: float | None = None
    p_noncompliant: float | None = None

    def __post_init__(self) -> None:
        relevant = self.label is not VerdictLabel.IRRELEVANT
        has_probs = self.p_compliant is not None and self.p_noncompliant is not None
        if relevant != has_probs:
            raise AssessError("probabilities are present iff the verdict is relevant")
        if has_probs and abs(self.p_compliant + self.p_noncompliant - 1.0) > 1e-9:
            raise AssessError("probabilities must sum to 1")

    def to_json_dict(self) -> dict:
        out: dict = {"label": self.label.value, "d_avg": self.d_avg}
        if self.p_compliant is not None:
            out["p_compliant"] = self.p_compliant
            out["p_noncompliant"] = self.p_noncompliant
        return out


@dataclass(frozen=True)
class RankedResult:
    snippet_id: str
    distance: float
    rank: int


@dataclass(frozen=True)
class EmbeddingIndex:
    snippet_ids: tuple[str, ...]
    embeddings: np.ndarray  # unit rows, one per snippet id
    model_hash: str

    def __post_init__(self) -> None:
        if self.embeddings.shape[0] != len(self.snippet_ids):
            raise AssessError("index row count disagrees with id count")
        self.embeddings.setflags(write=False)

    @property
    def d(self) -> int:
        return int(self.embeddings.shape[1])

    def __len__(self) -> int:
        return len(self.snippet_ids)


def _encode_texts(
    texts: Sequence[str],
    facets: Sequence[Facet | None],
    model: enc.Model,
) -> np.ndarray:
    items = [
        enc.TokenizedItem(ids=tuple(tokenize(t, model.vocab)), facet=f)
        for t, f in zip(texts, facets)
    ]
    return enc.encode_batch_np(items, model.params, model.facet_mode)


def encode_snippets(codes: Sequence[str], model: enc.Model) -> np.ndarray:
    return _encode_texts(codes, [None] * len(codes), model)


def facet_embeddings(policy_text: str, model: enc.Model) -> tuple[np.ndarray, np.ndarray]:
    """(f_plus, f_minus) unit embeddings of one policy text."""
    out = _encode_texts(
        [policy_text, policy_text], [Facet.COMPLIANT, Facet.NONCOMPLIANT], model
    )
    return out[0], out[1]


def build_index(snippets: Sequence[CodeSnippet], model: enc.Model, batch: int = 256) -> EmbeddingIndex:
    """Embed every snippet; deterministic, encoded in fixed-size batches."""
    if not snippets:
        raise AssessError("cannot index an empty snippet list")
    rows = []
    for lo in range(0, len(snippets), batch):
        chunk = snippets[lo : lo + batch]
        try:
            rows.append(encode_snippets([s.code for s in chunk], model))
        except Exception as exc:
            ids = [s.id for s in chunk]
            raise AssessError(f"encoding failed within snippets {ids[:3]}...: {exc}") from exc
    return EmbeddingIndex(
        snippet_ids=tuple(s.id for s in snippets),
        embeddings=np.vstack(rows),
        model_hash=model.model_hash,
    )


def save_index(index: EmbeddingIndex, path: str | Path) -> None:
    """Binary layout: magic, JSON header (format, d, count, model_hash),
    id table, then the float64 embedding matrix."""
    header = json.dumps(
        {
            "format": INDEX_FORMAT,
            "d": index.d,
            "count": len(index),
            "model_hash": index.model_hash,
        }
    ).encode("utf-8")
    ids_blob = "\n".join(index.snippet_ids).encode("utf-8")
    matrix = np.ascontiguousarray(index.embeddings, dtype="<f8").tobytes()
    with open(path, "wb") as f:
        f.write(_INDEX_MAGIC)
        f.write(struct.pack("<II", len(header), len(ids_blob)))
        f.write(header)
        f.write(ids_blob)
        f.write(matrix)


def load_index(path: str | Path) -> EmbeddingIndex:
    blob = Path(path).read_bytes()
    if blob[:4] != _INDEX_MAGIC:
        raise AssessError(f"{path}: not an embedding index")
    header_len, ids_len = struct.unpack("<II", blob[4:12])
    header = json.loads(blob[12 : 12 + header_len].decode("utf-8"))
    if header.get("format") != INDEX_FORMAT:
        raise AssessError(f"{path}: unsupported index format {header.get('format')!r}")
    ids_blob = blob[12 + header_len : 12 + header_len + ids_len]
    snippet_ids = tuple(ids_blob.decode("utf-8").split("\n")) if ids_blob else ()
    matrix = np.frombuffer(blob[12 + header_len + ids_len :], dtype="<f8").astype(np.float64)
    matrix = matrix.reshape(header["count"], header["d"])
    return EmbeddingIndex(
        snippet_ids=snippet_ids, embeddings=matrix, model_hash=header["model_hash"]
    )


def _query_distances(query: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    diffs = matrix - query[None, :]
    return np.sum(diffs * diffs, axis=1)


def search(
    policy_text: str,
    facet: Facet,
    index: EmbeddingIndex,
    k: int,
    model: enc.Model,
) -> list[RankedResult]:
    """Top-k snippets by squared distance to the faceted policy embedding.

    Exact scan; total order is (distance, snippet_id), so ties are stable.
    """
    if k < 1:
        raise AssessError(f"k must be >= 1, got {k}")
    if index.model_hash != model.model_hash:
        raise StaleIndexError(
            f"index built by model {index.model_hash[:12]}, serving {model.model_hash[:12]}"
        )
    query = _encode_texts([policy_text], [facet], model)[0]
    dists = _query_distances(query, index.embeddings)
    k = min(k, len(index))
    # full (distance, id) sort: ties at the k boundary must still respect ids
    order = np.lexsort((np.asarray(index.snippet_ids), dists))[:k]
    return [
        RankedResult(snippet_id=index.snippet_ids[i], distance=float(dists[i]), rank=r)
        for r, i in enumerate(order, start=1)
    ]


def classify(
    policy_text: str,
    code: str,
    model: enc.Model,
    alpha: float,
) -> Verdict:
    """Three-way verdict: irrelevant when the code sits farther than alpha
    from the renormalized facet average, otherwise the nearer facet wins."""
    if alpha <= 0:
        raise AssessError(f"alpha must be positive, got {alpha}")
    f_plus, f_minus = facet_embeddings(policy_text, model)
    avg = 0.5 * (f_plus + f_minus)
    norm = float(np.linalg.norm(avg))
    if norm < 1e-12:
        raise AssessError("antipodal facets: average policy embedding is undefined")
    r_avg = avg / norm
    f_code = encode_snippets([code], model)[0]
    d_avg = sq_dist(f_code, r_avg)
    if d_avg > alpha:
        return Verdict(label=VerdictLabel.IRRELEVANT, d_avg=d_avg)
    d_plus = sq_dist(f_code, f_plus)
    d_minus = sq_dist(f_code, f_minus)
    # softmax over exactly the two facet distances
    m = max(-d_plus, -d_minus)
    e_plus = math.exp(-d_plus - m)
    e_minus = math.exp(-d_minus - m)
    p_plus = e_plus / (e_plus + e_minus)
    label = VerdictLabel.COMPLIANT if d_plus <= d_minus else VerdictLabel.NONCOMPLIANT
    return Verdict(
        label=label, d_avg=d_avg, p_compliant=p_plus, p_noncompliant=1.0 - p_plus
    )


def mrr(first_hit_ranks: Sequence[int]) -> float:
    """Mean reciprocal rank of per-query first relevant hits."""
    if not first_hit_ranks:
        raise AssessError("mrr needs at least one query")
    if any(r < 1 for r in first_hit_ranks):
        raise AssessError("ranks are 1-based positive integers")
    return float(np.mean([1.0 / r for r in first_hit_ranks]))


def accuracy(predictions: Sequence, truth: Sequence) -> float:
    if len(predictions) != len(truth):
        raise AssessError("predictions and truth differ in length")
    if not predictions:
        raise AssessError("accuracy needs at least one pair")
    return float(np.mean([p == t for p, t in zip(predictions, truth)]))


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    mrr_compliant: float | None
    mrr_noncompliant: float | None
    n_policies: int
    n_snippets: int
    alpha: float
    model_hash: str

    def to_json_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "mrr_compliant": self.mrr_compliant,
            "mrr_noncompliant": self.mrr_noncompliant,
            "n_policies": self.n_policies,
            "n_snippets": self.n_snippets,
            "alpha": self.alpha,
            "model_hash": self.model_hash,
        }

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n", encoding="utf-8")


def _first_hit_rank(
    query: np.ndarray, index: EmbeddingIndex, relevant_ids: set[str]
) -> int:
    dists = _query_distances(query, index.embeddings)
    order = np.lexsort((np.asarray(index.snippet_ids), dists))
    for rank, i in enumerate(order, start=1):
        if index.snippet_ids[i] in relevant_ids:
            return rank
    raise AssessError("no relevant snippet present in the index")


def evaluate(
    policies: Sequence[Policy],
    snippets: Sequence[CodeSnippet],
    model: enc.Model,
    alpha: float,
    distractor_seed: int = 0,
) -> EvalReport:
    """Three-class accuracy plus per-facet search MRR on a labeled benchmark.

    For each policy the labeled snippets are paired with an equal number of
    seeded distractor draws, so the three classes stay balanced. Facets with
    no ground-truth snippet anywhere drop out of that facet's MRR query set.
    """
    if not policies:
        raise AssessError("no policies to evaluate")
    tainted = [p.id for p in policies if p.source == "bugfix_comment"]
    if tainted:
        raise AssessError(
            f"policies {tainted[:3]} come from training-side bug-fix comments; "
            "the benchmark must be disjoint from training data"
        )
    labeled = [s for s in snippets if s.ground_truth]
    if not labeled:
        raise AssessError("no labeled snippets to evaluate")
    distractors = [s for s in snippets if not s.ground_truth]

    index = build_index(snippets, model)
    rng = np.random.default_rng(distractor_seed)

    predictions: list[str] = []
    truth: list[str] = []
    ranks: dict[Facet, list[int]] = {Facet.COMPLIANT: [], Facet.NONCOMPLIANT: []}

    for policy in policies:
        f_plus, f_minus = facet_embeddings(policy.text, model)
        labeled_here = [
            (s, s.facet_for(policy.id)) for s in labeled if s.facet_for(policy.id) is not None
        ]
        for snippet, facet in labeled_here:
            verdict = classify(policy.text, snippet.code, model, alpha)
            predictions.append(verdict.label.value)
            truth.append(facet.value)
        if distractors:
            n_draw = min(len(labeled_here), len(distractors))
            draw = rng.choice(len(distractors), size=n_draw, replace=False)
            for i in draw:
                verdict = classify(policy.text, distractors[int(i)].code, model, alpha)
                predictions.append(verdict.label.value)
                truth.append(VerdictLabel.IRRELEVANT.value)
        for facet, query in ((Facet.COMPLIANT, f_plus), (Facet.NONCOMPLIANT, f_minus)):
            relevant = {s.id for s, f in labeled_here if f is facet}
            if not relevant:
                continue  # facet absent for this policy: excluded from Q
            ranks[facet].append(_first_hit_rank(query, index, relevant))

    return EvalReport(
        accuracy=accuracy(predictions, truth),
        mrr_compliant=mrr(ranks[Facet.COMPLIANT]) if ranks[Facet.COMPLIANT] else None,
        mrr_noncompliant=mrr(ranks[Facet.NONCOMPLIANT]) if ranks[Facet.NONCOMPLIANT] else None,
        n_policies=len(policies),
        n_snippets=len(snippets),
        alpha=alpha,
        model_hash=model.model_hash,
    )


@dataclass(frozen=True)
class AcceptanceRates:
    """Per-facet and pooled acceptance percentages; a facet with no judgments
    is None (undefined), while overall pools every judgment."""

    compliant: float | None
    noncompliant: float | None
    overall: float

    def to_json_dict(self) -> dict:
        return {
            "compliant": self.compliant,
            "noncompliant": self.noncompliant,
            "overall": self.overall,
        }


def acceptance_rate(judgments: Sequence[dict]) -> AcceptanceRates:
    """judgments: dicts with at least {"facet", "decision"}; decision is
    accept/reject. Overall is pooled accepted/total, not a mean of rates."""
    if not judgments:
        raise AssessError("no judgments to aggregate")
    counts = {Facet.COMPLIANT: [0, 0], Facet.NONCOMPLIANT: [0, 0]}  # [accepted, total]
    for j in judgments:
        facet = Facet(j["facet"])
        decision = j["decision"]
        if decision not in ("accept", "reject"):
            raise AssessError(f"decision must be accept or reject, got {decision!r}")
        counts[facet][1] += 1
        if decision == "accept":
            counts[facet][0] += 1
    accepted = sum(c[0] for c in counts.values())
    total = sum(c[1] for c in counts.values())

    def rate(c: list[int]) -> float | None:
        return 100.0 * c[0] / c[1] if c[1] else None

    return AcceptanceRates(
        compliant=rate(counts[Facet.COMPLIANT]),
        noncompliant=rate(counts[Facet.NONCOMPLIANT]),
        overall=100.0 * accepted / total,
    )


# --- optional approximate search ---------------------------------------------


@dataclass(frozen=True)
class IVFIndex:
    """Coarse inverted-file index: snippets cluster around seeded centroids;
    queries probe the nearest few clusters only."""

    base: EmbeddingIndex
    centroids: np.ndarray
    assignments: np.ndarray
    n_probe: int

    def search(self, query: np.ndarray, k: int) -> list[tuple[float, str]]:
        d_cent = _query_distances(query, self.centroids)
        probe = np.argsort(d_cent)[: self.n_probe]
        mask = np.isin(self.assignments, probe)
        candidates = np.nonzero(mask)[0]
        if candidates.size == 0:
            candidates = np.arange(len(self.base))
        dists = _query_distances(query, self.base.embeddings[candidates])
        order = sorted(
            range(candidates.size),
            key=lambda i: (dists[i], self.base.snippet_ids[candidates[i]]),
        )[:k]
        return [(float(dists[i]), self.base.snippet_ids[candidates[i]]) for i in order]


def build_ivf(
    index: EmbeddingIndex, n_clusters: int = 32, n_probe: int = 6, seed: int = 0, iters: int = 8
) -> IVFIndex:
    rng = np.random.default_rng(seed)
    n = len(index)
    n_clusters = min(n_clusters, n)
    pick = rng.choice(n, size=n_clusters, replace=False)
    centroids = index.embeddings[pick].copy()
    assignments = np.zeros(n, dtype=np.int64)
    for _ in range(iters):
        d = (
            np.sum(index.embeddings**2, axis=1)[:, None]
            + np.sum(centroids**2, axis=1)[None, :]
            - 2.0 * index.embeddings @ centroids.T
        )
        assignments = np.argmin(d, axis=1)
        for c in range(n_clusters):
            members = index.embeddings[assignments == c]
            if len(members):
                centroids[c] = members.mean(axis=0)
    # assignments must match the centroids actually returned
    d = (
        np.sum(index.embeddings**2, axis=1)[:, None]
        + np.sum(centroids**2, axis=1)[None, :]
        - 2.0 * index.embeddings @ centroids.T
    )
    assignments = np.argmin(d, axis=1)
    return IVFIndex(
        base=index, centroids=centroids, assignments=assignments, n_probe=n_probe
    )


def ann_search(
    policy_text: str,
    facet: Facet,
    ivf: IVFIndex,
    k: int,
    model: enc.Model,
) -> list[RankedResult]:
    if ivf.base.model_hash != model.model_hash:
        raise StaleIndexError("approximate index is stale")
    query = _encode_texts([policy_text], [facet], model)[0]
    hits = ivf.search(query, k)
    return [
        RankedResult(snippet_id=sid, distance=dist, rank=r)
        for r, (dist, sid) in enumerate(hits, start=1)
    ]

"""Quadruplet and batched multimodal triplet losses with mining strategies.

All hinge terms operate on "d-terms": by default the squared Euclidean
distance between unit embeddings. A switch computes the Euclidean distance
first and squares it afterwards; the two agree up to floating-point rounding
and both are exposed because the loss definitions admit either reading.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from codecomply import autodiff as ad
from codecomply.corpus.types import Facet


class DistanceMode(enum.Enum):
    SQ_EUCLIDEAN = "sq_euclidean"
    EUCLIDEAN_THEN_SQUARE = "euclidean_then_square"


DEFAULT_DISTANCE_MODE = DistanceMode.SQ_EUCLIDEAN


@dataclass(frozen=True)
class MarginConfig:
    """alpha1 separates the two facets, alpha2 separates relevant from
    irrelevant; alpha is the plain triplet margin."""

    alpha1: float = 0.2
    alpha2: float = 0.4
    alpha: float = 0.2

    def __post_init__(self) -> None:
        if not 0 < self.alpha1 < self.alpha2:
            raise ValueError(
                f"margins must satisfy 0 < alpha1 < alpha2, got {self.alpha1}, {self.alpha2}"
            )
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")


def sq_dist(f_a: np.ndarray, f_b: np.ndarray) -> float:
    """Squared Euclidean distance between two embedding vectors."""
    a, b = np.asarray(f_a), np.asarray(f_b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    return float(diff @ diff)


def pairwise_sq_dists(embeddings: ad.Tensor) -> ad.Tensor:
    """n x n matrix of squared distances between rows, clamped at 0."""
    sqn = ad.tsum(embeddings * embeddings, axis=1, keepdims=True)
    gram = embeddings @ ad.transpose(embeddings)
    return ad.relu(sqn + ad.transpose(sqn) - 2.0 * gram)


def distance_terms(
    embeddings: ad.Tensor, mode: DistanceMode = DEFAULT_DISTANCE_MODE
) -> ad.Tensor:
    d = pairwise_sq_dists(embeddings)
    if mode is DistanceMode.EUCLIDEAN_THEN_SQUARE:
        e = ad.safe_sqrt(d)
        return e * e
    return d


@dataclass(frozen=True)
class QuadrupletIndices:
    """Row indices of one quadruplet's embeddings within an encoded batch."""

    facet: Facet
    r: int
    c_match: int
    c_opp: int
    c_irr: int


def quadruplet_loss(
    embeddings: ad.Tensor,
    entries: Sequence[QuadrupletIndices],
    margins: MarginConfig,
    distance_mode: DistanceMode = DEFAULT_DISTANCE_MODE,
) -> tuple[ad.Tensor, ad.Tensor, ad.Tensor]:
    """(L+, L-, L_quad): per-facet sums of the two hinge terms, then their mean.

    Per entry: [d(r, c_match) - d(r, c_opp) + alpha1]_+ pushes the matching
    code closer than the opposite-facet code, [d(r, c_opp) - d(r, c_irr) +
    alpha2]_+ pushes the opposite code closer than the irrelevant one.
    """
    dists = distance_terms(embeddings, distance_mode)

    def facet_sum(facet: Facet) -> ad.Tensor:
        rows = [e for e in entries if e.facet is facet]
        if not rows:
            return ad.Tensor(0.0)
        r = [e.r for e in rows]
        d_match = ad.take_at(dists, r, [e.c_match for e in rows])
        d_opp = ad.take_at(dists, r, [e.c_opp for e in rows])
        d_irr = ad.take_at(dists, r, [e.c_irr for e in rows])
        compliance = ad.hinge(d_match - d_opp + margins.alpha1)
        relevance = ad.hinge(d_opp - d_irr + margins.alpha2)
        return ad.tsum(compliance) + ad.tsum(relevance)

    l_plus = facet_sum(Facet.COMPLIANT)
    l_minus = facet_sum(Facet.NONCOMPLIANT)
    return l_plus, l_minus, 0.5 * (l_plus + l_minus)


class Triplet(NamedTuple):
    a: int
    p: int
    n: int


def enumerate_valid_triplets(labels: Sequence[int]) -> list[Triplet]:
    """All (a, p, n) with l(a) = l(p), a != p, l(a) != l(n), lexicographic."""
    labels = list(labels)
    n = len(labels)
    out = []
    for a in range(n):
        for p in range(n):
            if p == a or labels[p] != labels[a]:
                continue
            for neg in range(n):
                if labels[neg] != labels[a]:
                    out.append(Triplet(a, p, neg))
    return out


class MiningStrategy(enum.Enum):
    BATCH_ALL = "batch_all"
    BATCH_HARD = "batch_hard"
    BATCH_SEMI_HARD = "batch_semi_hard"
    BATCH_HARD_SOFT_MARGIN = "batch_hard_soft_margin"


@dataclass
class BmtLoss:
    loss: ad.Tensor
    n_valid_triplets: int
    no_valid_triplets: bool

    def item(self) -> float:
        return self.loss.item()


def _label_masks(labels: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    lab = np.asarray(list(labels))
    same = lab[:, None] == lab[None, :]
    pos = same & ~np.eye(len(lab), dtype=bool)
    neg = ~same
    return pos, neg


def bmt_loss(
    embeddings: ad.Tensor,
    labels: Sequence[int],
    alpha: float,
    strategy: MiningStrategy = MiningStrategy.BATCH_ALL,
    reduction: str = "mean",
    distance_mode: DistanceMode = DEFAULT_DISTANCE_MODE,
) -> BmtLoss:
    """Triplet hinge loss over a labeled bimodal batch.

    reduction "mean" averages the strategy's contributing terms (positive-loss
    triplets for batch_all, selected triplets for semi-hard, valid anchors for
    the hard variants); "sum" adds them up, which for batch_all is the literal
    sum over every valid triplet.
    """
    if reduction not in ("mean", "sum"):
        raise ValueError(f"unknown reduction {reduction!r}")
    if not isinstance(strategy, MiningStrategy):
        raise ValueError(f"unknown mining strategy {strategy!r}")
    pos_mask, neg_mask = _label_masks(labels)
    n = pos_mask.shape[0]
    if embeddings.shape[0] != n:
        raise ValueError("labels and embeddings disagree on batch size")
    valid = pos_mask[:, :, None] & neg_mask[:, None, :]
    n_valid = int(valid.sum())
    if n_valid == 0:
        return BmtLoss(loss=ad.Tensor(0.0), n_valid_triplets=0, no_valid_triplets=True)

    dists = distance_terms(embeddings, distance_mode)

    if strategy in (MiningStrategy.BATCH_ALL, MiningStrategy.BATCH_SEMI_HARD):
        d_ap = ad.reshape(dists, (n, n, 1))
        d_an = ad.reshape(dists, (n, 1, n))
        hinges = ad.hinge(d_ap - d_an + alpha)
        if strategy is MiningStrategy.BATCH_ALL:
            selected = valid
            contributing = int((valid & (hinges.data > 0)).sum())
        else:
            ap = dists.data[:, :, None]
            an = dists.data[:, None, :]
            selected = valid & (ap < an) & (an < ap + alpha)
            contributing = int(selected.sum())
        total = ad.tsum(hinges * selected.astype(float))
        if reduction == "sum":
            loss = total
        else:
            loss = total * (1.0 / max(contributing, 1))
        return BmtLoss(loss=loss, n_valid_triplets=n_valid, no_valid_triplets=False)

    # hard variants: per-anchor extremes
    anchors = np.flatnonzero(pos_mask.any(axis=1) & neg_mask.any(axis=1))
    rows = ad.take_rows(dists, anchors)
    d_ap = ad.max_where(rows, pos_mask[anchors], axis=1)
    d_an = ad.min_where(rows, neg_mask[anchors], axis=1)
    if strategy is MiningStrategy.BATCH_HARD:
        terms = ad.hinge(d_ap - d_an + alpha)
    else:
        terms = ad.softplus(d_ap - d_an)
    loss = ad.tsum(terms) if reduction == "sum" else ad.tmean(terms)
    return BmtLoss(loss=loss, n_valid_triplets=n_valid, no_valid_triplets=False)


class Difficulty(enum.Enum):
    EASY = "easy"
    MEDIUM = "medium"
    HARD = "hard"


def partition_difficulty(d_ap_term: float, d_an_term: float, alpha: float) -> Difficulty:
    """Margin-relative difficulty; both boundary cases land in medium."""
    if d_ap_term < 0 or d_an_term < 0:
        raise ValueError("distance terms must be nonnegative")
    if d_ap_term + alpha < d_an_term:
        return Difficulty.EASY
    if d_an_term < d_ap_term:
        return Difficulty.HARD
    return Difficulty.MEDIUM


def difficulty_counts(
    embeddings: np.ndarray,
    labels: Sequence[int],
    alpha: float,
    distance_mode: DistanceMode = DEFAULT_DISTANCE_MODE,
) -> dict[Difficulty, int]:
    """Counts of valid triplets per difficulty class."""
    dists = distance_terms(ad.Tensor(embeddings), distance_mode).data
    counts = {d: 0 for d in Difficulty}
    for a, p, n in enumerate_valid_triplets(labels):
        counts[partition_difficulty(dists[a, p], dists[a, n], alpha)] += 1
    return counts


@dataclass(frozen=True)
class DistanceHistogram:
    """Aligned histograms of same-label and cross-label pair distances."""

    edges: np.ndarray
    pos_counts: np.ndarray
    neg_counts: np.ndarray

    def save_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bin_lo", "bin_hi", "pos_count", "neg_count"])
            for i in range(len(self.pos_counts)):
                writer.writerow(
                    [self.edges[i], self.edges[i + 1], self.pos_counts[i], self.neg_counts[i]]
                )


def distance_histogram(
    embeddings: np.ndarray,
    labels: Sequence[int],
    bins: int,
    distance_mode: DistanceMode = DEFAULT_DISTANCE_MODE,
) -> DistanceHistogram:
    """Distances of unordered pairs, split by whether the labels agree."""
    if bins < 2:
        raise ValueError(f"bins must be >= 2, got {bins}")
    emb = np.asarray(embeddings, dtype=np.float64)
    lab = np.asarray(list(labels))
    dists = distance_terms(ad.Tensor(emb), distance_mode).data
    iu = np.triu_indices(len(lab), k=1)
    flat = dists[iu]
    same = (lab[:, None] == lab[None, :])[iu]
    hi = float(flat.max()) if flat.size else 1.0
    edges = np.linspace(0.0, max(hi, 1e-12), bins + 1)
    pos_counts, _ = np.histogram(flat[same], bins=edges)
    neg_counts, _ = np.histogram(flat[~same], bins=edges)
    return DistanceHistogram(edges=edges, pos_counts=pos_counts, neg_counts=neg_counts)

"""Staged training: collocation pre-training, bug-fix pre-fine-tuning, grid search.

Stages share one loop skeleton: compose batches of whole label groups, take an
SGD step per batch, score the validation split after every epoch, and keep the
parameters from the best validation-MRR epoch. Stage order is enforced by
``TrainingPipeline``: pre-training (any subset of doc/cc) must precede
fine-tuning, and the pipeline records which stages actually ran.
"""

from __future__ import annotations

import enum
import json
import logging
import math
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import encoder as enc
from . import losses as ls
from .corpus.bpe import Vocabulary, tokenize
from .corpus.ops import unpivot
from .corpus.types import Facet, LabeledItem, Modality, Quadruplet

log = logging.getLogger(__name__)

# rng stream salts so stages never share batch orderings
_STAGE_SALT = {"doc": 1, "cc": 2, "finetune": 3}

QuadrupletPair = tuple[Quadruplet | None, Quadruplet | None]


class TrainingError(Exception):
    pass


class DegenerateCorpusError(TrainingError):
    """No batch in an epoch produced a usable loss term."""


class LossMode(enum.Enum):
    QUADRUPLET = "quadruplet"
    BMT = "bmt"


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    batch_size: int = 32
    epochs: int = 30
    margins: ls.MarginConfig = field(default_factory=ls.MarginConfig)
    facet_mode: enc.FacetMode = enc.FacetMode.PREFIXED
    loss_mode: LossMode = LossMode.BMT
    mining: ls.MiningStrategy = ls.MiningStrategy.BATCH_ALL
    distance_mode: ls.DistanceMode = ls.DistanceMode.SQ_EUCLIDEAN
    seed: int = 0
    weight_reg: float = 0.0
    mask_reg: float = 0.0
    momentum: float = 0.0
    patience: int = 5
    grad_clip: float = 0.0  # 0 disables; otherwise max global gradient norm

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 2:
            raise ValueError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")
        if self.weight_reg < 0 or self.mask_reg < 0:
            raise ValueError("regularizer weights must be >= 0")
        if self.grad_clip < 0:
            raise ValueError(f"grad_clip must be >= 0, got {self.grad_clip}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        for name, enum_type in (
            ("facet_mode", enc.FacetMode),
            ("loss_mode", LossMode),
            ("mining", ls.MiningStrategy),
            ("distance_mode", ls.DistanceMode),
        ):
            if not isinstance(getattr(self, name), enum_type):
                raise ValueError(f"{name} must be a {enum_type.__name__}")
        if not isinstance(self.margins, ls.MarginConfig):
            raise ValueError("margins must be a MarginConfig")

    def to_json_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "margins": {
                "alpha1": self.margins.alpha1,
                "alpha2": self.margins.alpha2,
                "alpha": self.margins.alpha,
            },
            "facet_mode": self.facet_mode.value,
            "loss_mode": self.loss_mode.value,
            "mining": self.mining.value,
            "distance_mode": self.distance_mode.value,
            "seed": self.seed,
            "weight_reg": self.weight_reg,
            "mask_reg": self.mask_reg,
            "momentum": self.momentum,
            "patience": self.patience,
            "grad_clip": self.grad_clip,
        }

    @classmethod
    def from_json_dict(cls, raw: dict) -> "TrainConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(raw)
        if "margins" in kwargs:
            m = kwargs["margins"]
            extra = set(m) - {"alpha1", "alpha2", "alpha"}
            if extra:
                raise ValueError(f"unknown margin keys: {sorted(extra)}")
            kwargs["margins"] = ls.MarginConfig(**m)
        for name, enum_type in (
            ("facet_mode", enc.FacetMode),
            ("loss_mode", LossMode),
            ("mining", ls.MiningStrategy),
            ("distance_mode", ls.DistanceMode),
        ):
            if name in kwargs:
                try:
                    kwargs[name] = enum_type(kwargs[name])
                except ValueError:
                    valid = [e.value for e in enum_type]
                    raise ValueError(f"{name} must be one of {valid}, got {kwargs[name]!r}")
        return cls(**kwargs)


def load_train_config(path: str | Path) -> TrainConfig:
    with open(path, encoding="utf-8") as f:
        raw = json.load(f)
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return TrainConfig.from_json_dict(raw)


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_mrr: float


@dataclass(frozen=True)
class TrainReport:
    stage: str
    epochs: tuple[EpochStats, ...]
    best_epoch: int  # 0 means the initial parameters were never improved on
    best_val_mrr: float
    best_val_loss: float
    final_params_hash: str
    wall_time_s: float
    n_train_items: int
    n_val_items: int

    def __post_init__(self) -> None:
        for i, stats in enumerate(self.epochs, start=1):
            if stats.epoch != i:
                raise ValueError(f"epoch rows must be numbered 1..n, got {stats.epoch} at {i}")
        if not 0 <= self.best_epoch <= len(self.epochs):
            raise ValueError(f"best_epoch {self.best_epoch} outside 0..{len(self.epochs)}")

    def to_json_dict(self) -> dict:
        return {
            "stage": self.stage,
            "epochs": [
                {
                    "epoch": e.epoch,
                    "train_loss": e.train_loss,
                    "val_loss": e.val_loss,
                    "val_mrr": e.val_mrr,
                }
                for e in self.epochs
            ],
            "best_epoch": self.best_epoch,
            "best_val_mrr": self.best_val_mrr,
            "best_val_loss": self.best_val_loss,
            "final_params_hash": self.final_params_hash,
            "wall_time_s": self.wall_time_s,
            "n_train_items": self.n_train_items,
            "n_val_items": self.n_val_items,
        }

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n", encoding="utf-8")

    def save_csv(self, path: str | Path) -> None:
        lines = ["epoch,train_loss,val_loss,val_mrr"]
        for e in self.epochs:
            lines.append(f"{e.epoch},{e.train_loss:.10g},{e.val_loss:.10g},{e.val_mrr:.10g}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def split(
    items: Sequence,
    ratio: float,
    seed: int,
    key: Callable[[object], object],
) -> tuple[list, list]:
    """Deterministic group-respecting split: every item of a group lands on
    one side, so validation groups are genuinely unseen."""
    if not 0 < ratio < 1:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    groups = sorted({key(item) for item in items})
    if len(groups) < 2:
        raise TrainingError(f"too few groups to split: {len(groups)}")
    rng = np.random.default_rng(seed)
    order = [groups[i] for i in rng.permutation(len(groups))]
    n_train = int(round(len(groups) * ratio))
    n_train = max(1, min(len(groups) - 1, n_train))
    train_keys = set(order[:n_train])
    train = [item for item in items if key(item) in train_keys]
    val = [item for item in items if key(item) not in train_keys]
    return train, val


def tokenize_labeled(
    items: Sequence[LabeledItem], vocab: Vocabulary
) -> list[enc.TokenizedItem]:
    return [
        enc.TokenizedItem(
            ids=tuple(tokenize(item.content, vocab)), facet=item.facet, ref_id=item.ref_id
        )
        for item in items
    ]


def compose_label_batches(
    labels: Sequence[int], batch_size: int, rng: np.random.Generator
) -> list[list[int]]:
    """Index batches built from whole label groups, so any batch holding a
    multi-member group plus one other group yields valid triplets."""
    by_label: dict[int, list[int]] = {}
    for i, label in enumerate(labels):
        by_label.setdefault(label, []).append(i)
    group_list = list(by_label.values())
    order = rng.permutation(len(group_list))
    batches: list[list[int]] = []
    current: list[int] = []
    n_groups = 0
    for gi in order:
        current.extend(group_list[gi])
        n_groups += 1
        if len(current) >= batch_size:
            batches.append(current)
            current = []
            n_groups = 0
    if current:
        if n_groups < 2 and batches:
            batches[-1].extend(current)
        else:
            batches.append(current)
    return batches


def collocation_mrr(unit_embeddings: np.ndarray, labels: Sequence[int]) -> float:
    """Retrieval check without ground-truth annotations: each item queries the
    rest of the set; the first same-label neighbour scores 1/rank."""
    labels_arr = np.asarray(labels)
    n = unit_embeddings.shape[0]
    if n != labels_arr.shape[0]:
        raise ValueError("labels and embeddings disagree on size")
    sq_norms = np.sum(unit_embeddings * unit_embeddings, axis=1)
    dists = np.maximum(sq_norms[:, None] + sq_norms[None, :] - 2.0 * unit_embeddings @ unit_embeddings.T, 0.0)
    reciprocal_ranks = []
    for i in range(n):
        same = labels_arr == labels_arr[i]
        same[i] = False
        if not same.any():
            continue
        others = np.arange(n) != i
        # stable total order: distance then index
        order = np.lexsort((np.arange(n)[others], dists[i][others]))
        ranked_same = same[others][order]
        rank = int(np.argmax(ranked_same)) + 1
        reciprocal_ranks.append(1.0 / rank)
    if not reciprocal_ranks:
        raise TrainingError("no collocated items to score")
    return float(np.mean(reciprocal_ranks))


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    """Scale the whole gradient down when its global L2 norm exceeds max_norm."""
    if max_norm <= 0:
        return grads
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total <= max_norm:
        return grads
    scale = max_norm / total
    return {name: g * scale for name, g in grads.items()}


def sgd_step(
    params: enc.EncoderParams,
    grads: dict[str, np.ndarray],
    learning_rate: float,
    momentum: float = 0.0,
    velocity: dict[str, np.ndarray] | None = None,
) -> tuple[enc.EncoderParams, dict[str, np.ndarray]]:
    """One plain-SGD step; pass the returned velocity back in when momentum
    is on. Always returns fresh parameter arrays."""
    arrays = params.arrays()
    if velocity is None:
        velocity = {name: np.zeros_like(a) for name, a in arrays.items()}
    updated = {}
    new_velocity = {}
    for name, a in arrays.items():
        g = grads[name]
        v = momentum * velocity[name] + g
        step = learning_rate * v
        if not np.isfinite(step).all():
            raise TrainingError(f"non-finite update in {name}")
        updated[name] = a - step
        new_velocity[name] = v
    return enc.EncoderParams(**updated), new_velocity


def _report_hash(params: enc.EncoderParams, vocab: Vocabulary, config: TrainConfig) -> str:
    return enc.params_hash(params, vocab.content_hash(), config.facet_mode)


@dataclass
class _ValSet:
    tokenized: list[enc.TokenizedItem]
    labels: list[int]
    batches: list[list[int]]


def _score_validation(
    val: _ValSet, params: enc.EncoderParams, config: TrainConfig
) -> tuple[float, float]:
    emb = enc.encode_batch_np(val.tokenized, params, config.facet_mode)
    losses = []
    for batch in val.batches:
        out = ls.bmt_loss(
            ad.Tensor(emb[batch]),
            [val.labels[i] for i in batch],
            config.margins.alpha,
            strategy=config.mining,
            distance_mode=config.distance_mode,
        )
        if not out.no_valid_triplets:
            losses.append(out.loss.item())
    val_loss = float(np.mean(losses)) if losses else math.inf
    return val_loss, collocation_mrr(emb, val.labels)


def _maybe_regularized(
    task: Callable[[enc.BatchEncoding], object],
    params: enc.EncoderParams,
    config: TrainConfig,
) -> Callable[[enc.BatchEncoding], object]:
    if config.weight_reg == 0 and config.mask_reg == 0:
        return task

    def loss_fn(encoding: enc.BatchEncoding):
        out = task(encoding)
        l_w, l_m = enc.mask_regularizers(params, encoding.raw)
        if config.weight_reg:
            out = out + config.weight_reg * l_w
        if config.mask_reg:
            out = out + config.mask_reg * l_m
        return out

    return loss_fn


def _train_bmt_stage(
    train_items: Sequence[LabeledItem],
    val_items: Sequence[LabeledItem],
    vocab: Vocabulary,
    config: TrainConfig,
    params: enc.EncoderParams,
    stage: str,
) -> tuple[enc.EncoderParams, TrainReport]:
    t0 = time.monotonic()
    train_tok = tokenize_labeled(train_items, vocab)
    train_labels = [item.label for item in train_items]
    counts: dict[int, int] = {}
    for label in train_labels:
        counts[label] = counts.get(label, 0) + 1
    if not any(c >= 2 for c in counts.values()) or len(counts) < 2:
        raise DegenerateCorpusError("degenerate corpus: no label group can form a triplet")

    val_rng = np.random.default_rng([config.seed, _STAGE_SALT[stage], 0])
    val = _ValSet(
        tokenized=tokenize_labeled(val_items, vocab),
        labels=[item.label for item in val_items],
        batches=compose_label_batches(
            [item.label for item in val_items], config.batch_size, val_rng
        ),
    )

    best_loss, best_mrr = _score_validation(val, params, config)
    best = params.copy()
    best_epoch = 0
    stats: list[EpochStats] = []
    velocity: dict[str, np.ndarray] | None = None
    stale = 0
    current = params

    for epoch in range(1, config.epochs + 1):
        rng = np.random.default_rng([config.seed, _STAGE_SALT[stage], epoch])
        batches = compose_label_batches(train_labels, config.batch_size, rng)
        epoch_losses = []
        degenerate = 0
        for batch in batches:
            batch_items = [train_tok[i] for i in batch]
            batch_labels = [train_labels[i] for i in batch]
            cell: list[ls.BmtLoss] = []

            def task(encoding: enc.BatchEncoding):
                out = ls.bmt_loss(
                    encoding.unit,
                    batch_labels,
                    config.margins.alpha,
                    strategy=config.mining,
                    distance_mode=config.distance_mode,
                )
                cell.append(out)
                return out.loss

            loss_fn = _maybe_regularized(task, current, config)
            value, grads = enc.forward_backward(batch_items, loss_fn, current, config.facet_mode)
            if cell[0].no_valid_triplets:
                degenerate += 1
                continue
            epoch_losses.append(value)
            grads = clip_gradients(grads, config.grad_clip)
            current, velocity = sgd_step(
                current, grads, config.learning_rate, config.momentum, velocity
            )
        if degenerate == len(batches):
            raise DegenerateCorpusError(f"degenerate corpus: epoch {epoch} had no valid triplets")
        val_loss, val_mrr = _score_validation(val, current, config)
        stats.append(EpochStats(epoch, float(np.mean(epoch_losses)), val_loss, val_mrr))
        if val_mrr > best_mrr:
            best_mrr, best_loss, best_epoch = val_mrr, val_loss, epoch
            best = current.copy()
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                log.info("%s: early stop after epoch %d (best %d)", stage, epoch, best_epoch)
                break

    report = TrainReport(
        stage=stage,
        epochs=tuple(stats),
        best_epoch=best_epoch,
        best_val_mrr=best_mrr,
        best_val_loss=best_loss,
        final_params_hash=_report_hash(best, vocab, config),
        wall_time_s=time.monotonic() - t0,
        n_train_items=len(train_items),
        n_val_items=len(val_items),
    )
    return best, report


# below this many groups, hold nothing out and validate on the training items
_MIN_GROUPS_FOR_SPLIT = 5


def _split_or_self(
    items: Sequence, seed: int, key: Callable[[object], object]
) -> tuple[list, list]:
    if len({key(item) for item in items}) < _MIN_GROUPS_FOR_SPLIT:
        return list(items), list(items)
    return split(items, 0.8, seed, key)


def pretrain_doc(
    passages: Sequence[LabeledItem],
    vocab: Vocabulary,
    config: TrainConfig,
    params: enc.EncoderParams,
) -> tuple[enc.EncoderParams, TrainReport]:
    """Collocation pre-training: passages of one paragraph share a label and
    must embed nearer each other than passages of other paragraphs."""
    train_items, val_items = _split_or_self(passages, config.seed, key=lambda p: p.label)
    return _train_bmt_stage(train_items, val_items, vocab, config, params, stage="doc")


def pretrain_cc(
    pairs: Sequence[tuple[str, str]],
    vocab: Vocabulary,
    config: TrainConfig,
    params: enc.EncoderParams,
) -> tuple[enc.EncoderParams, TrainReport]:
    """Code/comment matching: each (code, comment) pair shares a label, so
    both directions (comment retrieves code, code retrieves comment) train."""
    if len(pairs) < 2:
        raise TrainingError(f"need at least 2 code/comment pairs, got {len(pairs)}")
    comments = [comment for _, comment in pairs]
    n_dup = len(comments) - len(set(comments))
    if n_dup:
        log.warning("pretrain_cc: %d duplicate comments across pairs", n_dup)
    items = []
    for label, (code, comment) in enumerate(pairs):
        items.append(LabeledItem(content=comment, label=label, modality=Modality.TEXT))
        items.append(LabeledItem(content=code, label=label, modality=Modality.CODE))
    train_items, val_items = _split_or_self(items, config.seed, key=lambda p: p.label)
    return _train_bmt_stage(train_items, val_items, vocab, config, params, stage="cc")


def _pair_policy_id(pair: QuadrupletPair) -> str:
    quad = pair[0] if pair[0] is not None else pair[1]
    if quad is None:
        raise TrainingError("empty quadruplet pair")
    return quad.policy_id


def _quadruplet_batch(
    pairs: Sequence[QuadrupletPair],
    policy_texts: dict[str, str],
    snippet_codes: dict[str, str],
    vocab: Vocabulary,
) -> tuple[list[enc.TokenizedItem], list[ls.QuadrupletIndices]]:
    items: list[enc.TokenizedItem] = []
    entries: list[ls.QuadrupletIndices] = []

    def add(text: str, facet: Facet | None, ref_id: str) -> int:
        items.append(
            enc.TokenizedItem(ids=tuple(tokenize(text, vocab)), facet=facet, ref_id=ref_id)
        )
        return len(items) - 1

    for pair in pairs:
        code_index: dict[str, int] = {}
        for quad in pair:
            if quad is None:
                continue
            if quad.opposite_code_id is None or quad.irrelevant_code_id is None:
                raise TrainingError(
                    f"quadruplet mode needs all slots filled (policy {quad.policy_id!r})"
                )
            r = add(policy_texts[quad.policy_id], quad.facet, quad.policy_id)
            indices = {}
            for slot, code_id in (
                ("c_match", quad.matching_code_id),
                ("c_opp", quad.opposite_code_id),
                ("c_irr", quad.irrelevant_code_id),
            ):
                if code_id not in code_index:
                    code_index[code_id] = add(snippet_codes[code_id], None, code_id)
                indices[slot] = code_index[code_id]
            entries.append(ls.QuadrupletIndices(facet=quad.facet, r=r, **indices))
    return items, entries


def prefinetune(
    quadruplet_pairs: Sequence[QuadrupletPair],
    policy_texts: dict[str, str],
    snippet_codes: dict[str, str],
    vocab: Vocabulary,
    config: TrainConfig,
    params: enc.EncoderParams,
) -> tuple[enc.EncoderParams, TrainReport]:
    """Fine-tune on reinterpreted bug fixes, either with the two-hinge
    quadruplet loss or with the triplet loss over un-pivoted batches."""
    if not quadruplet_pairs:
        raise TrainingError("no quadruplets to fine-tune on")
    train_pairs, val_pairs = _split_or_self(quadruplet_pairs, config.seed, key=_pair_policy_id)

    if config.loss_mode is LossMode.BMT:
        train_items = unpivot(train_pairs, policy_texts, snippet_codes)
        val_items = unpivot(val_pairs, policy_texts, snippet_codes)
        return _train_bmt_stage(train_items, val_items, vocab, config, params, stage="finetune")

    has_plus = any(p is not None for p, _ in train_pairs)
    has_minus = any(m is not None for _, m in train_pairs)
    if not (has_plus and has_minus):
        raise TrainingError("facet coverage absent: quadruplet mode needs both facets present")

    t0 = time.monotonic()
    pairs_per_batch = max(1, config.batch_size // 5)

    # validation reuses the triplet machinery over un-pivoted items
    val_items = unpivot(val_pairs, policy_texts, snippet_codes)
    val_rng = np.random.default_rng([config.seed, _STAGE_SALT["finetune"], 0])
    val = _ValSet(
        tokenized=tokenize_labeled(val_items, vocab),
        labels=[item.label for item in val_items],
        batches=compose_label_batches(
            [item.label for item in val_items], config.batch_size, val_rng
        ),
    )

    best_loss, best_mrr = _score_validation(val, params, config)
    best = params.copy()
    best_epoch = 0
    stats: list[EpochStats] = []
    velocity: dict[str, np.ndarray] | None = None
    stale = 0
    current = params

    for epoch in range(1, config.epochs + 1):
        rng = np.random.default_rng([config.seed, _STAGE_SALT["finetune"], epoch])
        order = rng.permutation(len(train_pairs))
        epoch_losses = []
        for lo in range(0, len(order), pairs_per_batch):
            chunk = [train_pairs[i] for i in order[lo : lo + pairs_per_batch]]
            items, entries = _quadruplet_batch(chunk, policy_texts, snippet_codes, vocab)

            def task(encoding: enc.BatchEncoding):
                _, _, l_quad = ls.quadruplet_loss(
                    encoding.unit, entries, config.margins, config.distance_mode
                )
                return l_quad

            loss_fn = _maybe_regularized(task, current, config)
            value, grads = enc.forward_backward(items, loss_fn, current, config.facet_mode)
            epoch_losses.append(value)
            grads = clip_gradients(grads, config.grad_clip)
            current, velocity = sgd_step(
                current, grads, config.learning_rate, config.momentum, velocity
            )
        val_loss, val_mrr = _score_validation(val, current, config)
        stats.append(EpochStats(epoch, float(np.mean(epoch_losses)), val_loss, val_mrr))
        if val_mrr > best_mrr:
            best_mrr, best_loss, best_epoch = val_mrr, val_loss, epoch
            best = current.copy()
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                log.info("finetune: early stop after epoch %d (best %d)", epoch, best_epoch)
                break

    report = TrainReport(
        stage="finetune",
        epochs=tuple(stats),
        best_epoch=best_epoch,
        best_val_mrr=best_mrr,
        best_val_loss=best_loss,
        final_params_hash=_report_hash(best, vocab, config),
        wall_time_s=time.monotonic() - t0,
        n_train_items=5 * len(train_pairs),
        n_val_items=len(val_items),
    )
    return best, report


class TrainingPipeline:
    """Chains stages over one parameter set and records what ran.

    Pre-training stages (doc, cc, in either order) must come before
    fine-tuning; running a stage twice or pre-training after fine-tuning
    raises. The final parameters are whatever the last stage returned.
    """

    def __init__(self, vocab: Vocabulary, params: enc.EncoderParams):
        self.vocab = vocab
        self.params = params
        self.stages_run: list[str] = []
        self.reports: list[TrainReport] = []

    def _enter(self, stage: str) -> None:
        if stage in self.stages_run:
            raise TrainingError(f"stage {stage!r} already ran")
        if stage in ("doc", "cc") and "finetune" in self.stages_run:
            raise TrainingError("pre-training must precede fine-tuning")

    def pretrain_doc(self, passages: Sequence[LabeledItem], config: TrainConfig) -> TrainReport:
        self._enter("doc")
        self.params, report = pretrain_doc(passages, self.vocab, config, self.params)
        self.stages_run.append("doc")
        self.reports.append(report)
        return report

    def pretrain_cc(self, pairs: Sequence[tuple[str, str]], config: TrainConfig) -> TrainReport:
        self._enter("cc")
        self.params, report = pretrain_cc(pairs, self.vocab, config, self.params)
        self.stages_run.append("cc")
        self.reports.append(report)
        return report

    def finetune(
        self,
        quadruplet_pairs: Sequence[QuadrupletPair],
        policy_texts: dict[str, str],
        snippet_codes: dict[str, str],
        config: TrainConfig,
    ) -> TrainReport:
        self._enter("finetune")
        self.params, report = prefinetune(
            quadruplet_pairs, policy_texts, snippet_codes, self.vocab, config, self.params
        )
        self.stages_run.append("finetune")
        self.reports.append(report)
        return report


@dataclass(frozen=True)
class GridSearchResult:
    best_config: TrainConfig
    best_params: enc.EncoderParams
    best_report: TrainReport
    reports: tuple[tuple[TrainConfig, TrainReport], ...]

    def margin_mrr_table(self) -> list[dict]:
        """One row per config: margins against the validation MRR they reached."""
        return [
            {
                "alpha1": cfg.margins.alpha1,
                "alpha2": cfg.margins.alpha2,
                "alpha": cfg.margins.alpha,
                "val_mrr": report.best_val_mrr,
            }
            for cfg, report in self.reports
        ]


TrainFn = Callable[[TrainConfig], tuple[enc.EncoderParams, TrainReport]]


def grid_search(configs: Sequence[TrainConfig], train_fn: TrainFn) -> GridSearchResult:
    """Train every config, keep the best validation MRR; ties fall to lower
    validation loss, then to config order. Sequential, fully deterministic."""
    if not configs:
        raise TrainingError("grid search needs at least one config")
    results = []
    best_index = 0
    for i, config in enumerate(configs):
        params, report = train_fn(config)
        results.append((config, params, report))
        bi_report = results[best_index][2]
        if (report.best_val_mrr, -report.best_val_loss) > (
            bi_report.best_val_mrr,
            -bi_report.best_val_loss,
        ):
            best_index = i
    best_config, best_params, best_report = results[best_index]
    return GridSearchResult(
        best_config=best_config,
        best_params=best_params,
        best_report=best_report,
        reports=tuple((cfg, rep) for cfg, _, rep in results),
    )

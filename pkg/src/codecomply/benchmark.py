"""Synthetic zero-shot benchmark: staged training arms scored on held-out families.

All arms share one corpus recipe, one vocabulary, and one training
configuration; they differ only in which stages run and whether the bug-fix
records pass the policy-likeness filter before fine-tuning:

    NONE            fine-tune only, on all records
    DOC_CC          doc + code/comment pre-training, unfiltered fine-tune
    DOC_CC_FILTER   doc + code/comment pre-training, filtered fine-tune

A few training families are withheld from every training input (documents,
records, BPE texts) and used only to pick the relevance threshold, so the
threshold transfers to genuinely unseen families. Every run is deterministic
given (config, seed).
"""

from __future__ import annotations

import enum
import logging
import statistics
import time
from dataclasses import dataclass
from collections.abc import Sequence

import numpy as np

from . import assessor as asr
from . import encoder as enc
from . import losses as ls
from . import trainer as tr
from .corpus import bpe, ops, synth
from .corpus.types import BugFixRecord, CodeSnippet, LabeledItem, Policy

log = logging.getLogger(__name__)

DEFAULT_SEEDS = (0, 1, 2, 3, 4)


class BenchmarkError(Exception):
    pass


class Arm(enum.Enum):
    NONE = "none"
    DOC_CC = "doc_cc"
    DOC_CC_FILTER = "doc_cc_filter"

    @property
    def pretrains(self) -> bool:
        return self is not Arm.NONE

    @property
    def filters(self) -> bool:
        return self is Arm.DOC_CC_FILTER


@dataclass(frozen=True)
class BenchmarkConfig:
    """Corpus sizes and training hyperparameters shared by all arms."""

    n_train_families: int = 20
    n_heldout_families: int = 10
    snippets_per_family: int = 20
    n_distractors: int = 1000
    # training families reserved for threshold calibration, taken from the
    # tail of the train split and excluded from every training input
    n_calibration_families: int = 3
    sentences_per_paragraph: int = 4
    vocab_size: int = 500
    embedding_dim: int = 32
    hidden_dim: int = 64
    batch_size: int = 32
    grad_clip: float = 1.0
    doc_epochs: int = 4
    cc_epochs: int = 4
    pretrain_learning_rate: float = 0.05
    pretrain_patience: int = 5
    finetune_epochs: int = 30
    finetune_learning_rate: float = 0.02
    finetune_patience: int = 10
    finetune_margin: float = 0.2
    mining: ls.MiningStrategy = ls.MiningStrategy.BATCH_SEMI_HARD
    alphas: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.6, 0.8, 1.0, 1.2, 1.6)

    def __post_init__(self) -> None:
        if self.n_train_families < 2:
            raise BenchmarkError("need at least two training families")
        if not 1 <= self.n_calibration_families < self.n_train_families:
            raise BenchmarkError("calibration families must leave at least one training family")
        if self.n_heldout_families < 1:
            raise BenchmarkError("need at least one held-out family")
        if min(self.snippets_per_family, self.n_distractors, self.vocab_size) < 1:
            raise BenchmarkError("corpus sizes must be positive")
        if not self.alphas:
            raise BenchmarkError("threshold grid is empty")

    @property
    def n_families(self) -> int:
        return self.n_train_families + self.n_heldout_families


@dataclass(frozen=True)
class BenchmarkInputs:
    """Everything one seed's arms share: corpus splits, vocabulary, stage data.

    ``records`` already excludes calibration families; arm-specific filtering
    happens later so all arms start from this same pool.
    """

    seed: int
    vocab: bpe.Vocabulary
    passages: list[LabeledItem]
    cc_pairs: list[tuple[str, str]]
    records: list[BugFixRecord]
    foreign_snippets: list[CodeSnippet]
    calibration_policies: list[Policy]
    calibration_snippets: list[CodeSnippet]
    heldout_policies: list[Policy]
    heldout_snippets: list[CodeSnippet]
    distractors: list[CodeSnippet]


@dataclass(frozen=True)
class ArmResult:
    arm: Arm
    seed: int
    report: asr.EvalReport
    stages_run: tuple[str, ...]
    n_finetune_pairs: int
    wall_time_s: float


@dataclass(frozen=True)
class BenchmarkResult:
    config: BenchmarkConfig
    runs: tuple[ArmResult, ...]
    wall_time_s: float

    def arm_runs(self, arm: Arm) -> list[ArmResult]:
        return [r for r in self.runs if r.arm is arm]

    def _median(self, arm: Arm, metric) -> float:
        values = [metric(r.report) for r in self.arm_runs(arm)]
        if not values or any(v is None for v in values):
            raise BenchmarkError(f"no complete {arm.value!r} runs to summarize")
        return statistics.median(values)

    def median_accuracy(self, arm: Arm) -> float:
        return self._median(arm, lambda rep: rep.accuracy)

    def median_mrr_compliant(self, arm: Arm) -> float:
        return self._median(arm, lambda rep: rep.mrr_compliant)

    def median_mrr_noncompliant(self, arm: Arm) -> float:
        return self._median(arm, lambda rep: rep.mrr_noncompliant)


def _family_of(record: BugFixRecord) -> str:
    # record ids are "fix:<policy_id>:<nnn>" and policy ids may contain colons
    return ":".join(record.id.split(":")[1:-1])


def build_inputs(config: BenchmarkConfig, seed: int) -> BenchmarkInputs:
    """Generate one seed's corpus and carve out the calibration families.

    Calibration families must look exactly like held-out families at
    evaluation time, which means absent from the BPE training texts too:
    vocabulary merges would otherwise tokenize their stems differently from
    genuinely unseen stems and distort the calibrated threshold.
    """
    corpus = synth.synth_corpus(
        seed=seed,
        n_policy_families=config.n_families,
        snippets_per_family=config.snippets_per_family,
        n_distractors=config.n_distractors,
        n_held_out=config.n_heldout_families,
    )
    held_ids = set(corpus.heldout_policy_ids)
    cal_ids = set(corpus.train_policy_ids[-config.n_calibration_families :])
    train_ids = set(corpus.train_policy_ids) - cal_ids

    def pick(ids: set[str]) -> tuple[list[Policy], list[CodeSnippet]]:
        policies = [p for p in corpus.policies if p.id in ids]
        snippets = [
            s for s in corpus.snippets if s.ground_truth and s.ground_truth[0][0] in ids
        ]
        return policies, snippets

    train_policies, train_snippets = pick(train_ids)
    cal_policies, cal_snippets = pick(cal_ids)
    held_policies, held_snippets = pick(held_ids)
    distractors = [s for s in corpus.snippets if not s.ground_truth]

    docs = synth.synth_docs(
        seed=seed,
        n_policy_families=config.n_families,
        n_held_out=config.n_heldout_families,
        sentences_per_paragraph=config.sentences_per_paragraph,
    )
    # two paragraphs per training family, in train-split order: dropping the
    # calibration tail removes exactly those families' documentation
    docs = docs[: 2 * (len(corpus.train_policy_ids) - config.n_calibration_families)]
    records = synth.synth_bugfixes(
        seed=seed,
        n_policy_families=config.n_families,
        n_held_out=config.n_heldout_families,
    )
    records = [r for r in records if _family_of(r) not in cal_ids]

    # Foreign-family snippets fill half the irrelevant slots during
    # fine-tuning. Mining them only from other records would teach
    # "irrelevant = another family's stems" and miss stem-free code entirely;
    # a disjoint corpus (not the benchmark distractors) avoids leaking
    # evaluation items into training.
    aux = synth.synth_corpus(
        seed=seed + 7919,
        n_policy_families=1,
        snippets_per_family=1,
        n_distractors=200,
        n_held_out=0,
    )
    foreign = [s for s in aux.snippets if not s.ground_truth]

    rng = np.random.default_rng([seed, 99])
    n_sample = min(100, len(distractors))
    dis_sample = [
        distractors[int(i)].code
        for i in rng.choice(len(distractors), size=n_sample, replace=False)
    ]
    bpe_texts = (
        docs
        + [r.comment for r in records]
        + [r.code_before for r in records]
        + [r.code_after for r in records]
        + [p.text for p in train_policies]
        + [s.code for s in train_snippets]
        + dis_sample
    )
    vocab = bpe.train_bpe(bpe_texts, vocab_size=config.vocab_size)

    return BenchmarkInputs(
        seed=seed,
        vocab=vocab,
        passages=ops.segment_documentation(docs),
        cc_pairs=synth.cc_pairs_from_records(records),
        records=records,
        foreign_snippets=foreign,
        calibration_policies=cal_policies,
        calibration_snippets=cal_snippets,
        heldout_policies=held_policies,
        heldout_snippets=held_snippets,
        distractors=distractors,
    )


def train_arm(
    inputs: BenchmarkInputs, arm: Arm, config: BenchmarkConfig
) -> tuple[tr.TrainingPipeline, int]:
    """Run one arm's stages; returns the pipeline and the fine-tune pair count."""
    records = inputs.records
    if arm.filters:
        kept = set(ops.filter_policy_like([r.comment for r in records]))
        records = [r for r in records if r.comment in kept]
    pairs, policy_texts, snippet_codes = ops.quadruplets_from_records(
        records, inputs.foreign_snippets, seed=inputs.seed
    )

    base = dict(
        batch_size=config.batch_size,
        seed=inputs.seed,
        grad_clip=config.grad_clip,
        patience=config.pretrain_patience,
    )
    params = enc.init_params(
        inputs.vocab.size, d=config.embedding_dim, h=config.hidden_dim, seed=inputs.seed
    )
    pipeline = tr.TrainingPipeline(inputs.vocab, params)
    if arm.pretrains:
        pipeline.pretrain_doc(
            inputs.passages,
            tr.TrainConfig(
                epochs=config.doc_epochs,
                learning_rate=config.pretrain_learning_rate,
                **base,
            ),
        )
        pipeline.pretrain_cc(
            inputs.cc_pairs,
            tr.TrainConfig(
                epochs=config.cc_epochs,
                learning_rate=config.pretrain_learning_rate,
                **base,
            ),
        )
    pipeline.finetune(
        pairs,
        policy_texts,
        snippet_codes,
        tr.TrainConfig(
            epochs=config.finetune_epochs,
            learning_rate=config.finetune_learning_rate,
            loss_mode=tr.LossMode.BMT,
            margins=ls.MarginConfig(alpha=config.finetune_margin),
            mining=config.mining,
            **dict(base, patience=config.finetune_patience),
        ),
    )
    return pipeline, len(pairs)


def calibrate_alpha(
    inputs: BenchmarkInputs, model: enc.Model, config: BenchmarkConfig
) -> float:
    """Pick the relevance threshold maximizing calibration-family accuracy.

    Ties keep the smallest threshold. A coarse grid on purpose: the
    calibration split is small enough that a fine grid just fits its noise.
    """
    best_alpha, best_accuracy = None, -1.0
    for alpha in config.alphas:
        report = asr.evaluate(
            inputs.calibration_policies,
            inputs.calibration_snippets + inputs.distractors,
            model,
            alpha=alpha,
            distractor_seed=inputs.seed,
        )
        if report.accuracy > best_accuracy:
            best_alpha, best_accuracy = alpha, report.accuracy
    return best_alpha


def run_arm(config: BenchmarkConfig, arm: Arm, seed: int) -> ArmResult:
    """Build inputs, train one arm, calibrate, and score held-out families."""
    start = time.perf_counter()
    inputs = build_inputs(config, seed)
    pipeline, n_pairs = train_arm(inputs, arm, config)
    model = enc.Model(
        vocab=inputs.vocab, params=pipeline.params, facet_mode=enc.FacetMode.PREFIXED
    )
    alpha = calibrate_alpha(inputs, model, config)
    report = asr.evaluate(
        inputs.heldout_policies,
        inputs.heldout_snippets + inputs.distractors,
        model,
        alpha=alpha,
        distractor_seed=seed,
    )
    elapsed = time.perf_counter() - start
    log.info(
        "arm=%s seed=%d accuracy=%.3f mrr+=%.3f mrr-=%.3f alpha=%.2f (%.1fs)",
        arm.value, seed, report.accuracy, report.mrr_compliant or 0.0,
        report.mrr_noncompliant or 0.0, alpha, elapsed,
    )
    return ArmResult(
        arm=arm,
        seed=seed,
        report=report,
        stages_run=tuple(pipeline.stages_run),
        n_finetune_pairs=n_pairs,
        wall_time_s=elapsed,
    )


def run_benchmark(
    config: BenchmarkConfig = BenchmarkConfig(),
    arms: Sequence[Arm] = tuple(Arm),
    seeds: Sequence[int] = DEFAULT_SEEDS,
) -> BenchmarkResult:
    if not arms or not seeds:
        raise BenchmarkError("need at least one arm and one seed")
    start = time.perf_counter()
    runs = tuple(run_arm(config, arm, seed) for arm in arms for seed in seeds)
    return BenchmarkResult(
        config=config, runs=runs, wall_time_s=time.perf_counter() - start
    )

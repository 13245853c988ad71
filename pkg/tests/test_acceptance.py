"""Acceptance gate: the headline guarantees, each at its stated tolerance.

Every test prints one `ACCEPTANCE <name>: PASS` line with the measured
numbers; a failure carries the same numbers in its assertion message. The
synthetic benchmark fixture runs once per session (three arms, five seeds)
and backs the zero-shot, ablation-ordering, and reproducibility checks.
"""

from __future__ import annotations

import time

import numpy as np
import pytest

from codecomply import assessor as asr
from codecomply import autodiff as ad
from codecomply import benchmark as bm
from codecomply import encoder as enc
from codecomply import losses as ls
from codecomply.corpus import bpe, synth
from codecomply.corpus.types import Facet


def ok(name: str, detail: str) -> None:
    print(f"ACCEPTANCE {name}: PASS ({detail})")


# --- loss-oracle equivalence ------------------------------------------------------


def brute_sq_dists(x: np.ndarray) -> np.ndarray:
    n = len(x)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            diff = x[i] - x[j]
            out[i, j] = float(diff @ diff)
    return out


def test_loss_oracle_equivalence():
    start = time.perf_counter()

    worst_bmt = 0.0
    for seed in range(100):
        rng = np.random.default_rng([100, seed])
        n = int(rng.integers(2, 25))
        labels = [int(l) for l in rng.integers(0, int(rng.integers(2, 6)), size=n)]
        x = rng.normal(size=(n, 8))
        alpha = float(rng.uniform(0.05, 0.5))
        d = brute_sq_dists(x)
        expected = 0.0
        for a in range(n):
            for p in range(n):
                if p == a or labels[p] != labels[a]:
                    continue
                for neg in range(n):
                    if labels[neg] != labels[a]:
                        expected += max(0.0, d[a, p] - d[a, neg] + alpha)
        got = ls.bmt_loss(
            ad.Tensor(x), labels, alpha,
            strategy=ls.MiningStrategy.BATCH_ALL, reduction="sum",
        ).loss.item()
        worst_bmt = max(worst_bmt, abs(got - expected) / max(1.0, abs(expected)))
    assert worst_bmt <= 1e-9, f"bmt sum/batch_all off by rel {worst_bmt:.3e}"

    worst_quad = 0.0
    for seed in range(50):
        rng = np.random.default_rng([200, seed])
        x = rng.normal(size=(28, 8))
        margins = ls.MarginConfig(
            alpha1=float(rng.uniform(0.05, 0.3)),
            alpha2=float(rng.uniform(0.4, 0.9)),
            alpha=0.2,
        )
        entries = []
        for _ in range(int(rng.integers(1, 7))):
            r, cm, co, ci = (int(i) for i in rng.choice(28, size=4, replace=False))
            facet = Facet.COMPLIANT if rng.integers(2) == 0 else Facet.NONCOMPLIANT
            entries.append(ls.QuadrupletIndices(facet=facet, r=r, c_match=cm,
                                                c_opp=co, c_irr=ci))
        d = brute_sq_dists(x)
        expected = {Facet.COMPLIANT: 0.0, Facet.NONCOMPLIANT: 0.0}
        for e in entries:
            compliance = max(0.0, d[e.r, e.c_match] - d[e.r, e.c_opp] + margins.alpha1)
            relevance = max(0.0, d[e.r, e.c_opp] - d[e.r, e.c_irr] + margins.alpha2)
            expected[e.facet] += compliance + relevance
        l_plus, l_minus, total = ls.quadruplet_loss(ad.Tensor(x), entries, margins)
        exp_total = 0.5 * (expected[Facet.COMPLIANT] + expected[Facet.NONCOMPLIANT])
        for got, exp in ((l_plus.item(), expected[Facet.COMPLIANT]),
                         (l_minus.item(), expected[Facet.NONCOMPLIANT]),
                         (total.item(), exp_total)):
            worst_quad = max(worst_quad, abs(got - exp) / max(1.0, abs(exp)))
    assert worst_quad <= 1e-9, f"quadruplet loss off by rel {worst_quad:.3e}"

    elapsed = time.perf_counter() - start
    assert elapsed < 10.0, f"loss oracles took {elapsed:.1f}s, budget 10s"
    ok("loss-oracle equivalence",
       f"bmt rel {worst_bmt:.2e}, quad rel {worst_quad:.2e}, {elapsed:.1f}s")


# --- gradient fidelity --------------------------------------------------------------


def test_gradient_fidelity():
    start = time.perf_counter()
    worst = 0.0
    worst_at = ""
    for facet_mode in enc.FacetMode:
        for loss_name in ("bmt", "quadruplet"):
            for cfg_seed in range(20):
                rng = np.random.default_rng([300, cfg_seed])
                params = enc.EncoderParams(
                    token_embeddings=rng.normal(scale=0.5, size=(50, 8)),
                    w1=rng.normal(scale=0.5, size=(8, 16)),
                    b1=rng.normal(scale=0.5, size=16),
                    w2=rng.normal(scale=0.5, size=(16, 8)),
                    b2=rng.normal(scale=0.5, size=8),
                    mask_beta=rng.normal(loc=0.5, scale=0.5, size=(8, 2)),
                )
                facets = (None, Facet.COMPLIANT, Facet.NONCOMPLIANT)
                batch = [
                    enc.TokenizedItem(
                        ids=tuple(int(t) for t in
                                  rng.integers(5, 50, size=int(rng.integers(3, 10)))),
                        facet=facets[int(rng.integers(3))],
                        ref_id=f"item{i}",
                    )
                    for i in range(8)
                ]
                labels = [int(l) for l in rng.integers(0, 3, size=8)]
                if loss_name == "bmt":
                    fn = lambda e: ls.bmt_loss(e.unit, labels, alpha=0.2).loss
                else:
                    entries = [
                        ls.QuadrupletIndices(facet=Facet.COMPLIANT,
                                             r=0, c_match=1, c_opp=2, c_irr=3),
                        ls.QuadrupletIndices(facet=Facet.NONCOMPLIANT,
                                             r=4, c_match=5, c_opp=6, c_irr=7),
                    ]
                    fn = lambda e: ls.quadruplet_loss(e.unit, entries,
                                                      ls.MarginConfig())[2]
                report = enc.grad_check(params, batch, fn,
                                        epsilon=1e-4, facet_mode=facet_mode,
                                        seed=cfg_seed)
                if report.max_rel_error > worst:
                    worst = report.max_rel_error
                    worst_at = f"{loss_name}/{facet_mode.value}/seed{cfg_seed}"
    elapsed = time.perf_counter() - start
    assert worst <= 1e-4, f"gradient error {worst:.3e} at {worst_at}"
    assert elapsed < 60.0, f"gradient audit took {elapsed:.1f}s, budget 60s"
    ok("gradient fidelity", f"max rel error {worst:.2e} at {worst_at}, {elapsed:.1f}s")


# --- mining semantics ----------------------------------------------------------------


def test_mining_semantics():
    dominance_checked = 0
    partitioned = 0
    for seed in range(1000):
        rng = np.random.default_rng([400, seed])
        n = int(rng.integers(4, 16))
        labels = [int(l) for l in rng.integers(0, 4, size=n)]
        x = rng.normal(size=(n, 8))
        alpha = float(rng.uniform(0.05, 0.6))
        d = brute_sq_dists(x)
        lab = np.asarray(labels)
        pos = (lab[:, None] == lab[None, :]) & ~np.eye(n, dtype=bool)
        neg = lab[:, None] != lab[None, :]
        valid = pos[:, :, None] & neg[:, None, :]
        if not valid.any():
            continue

        all_hinges = np.maximum(0.0, d[:, :, None] - d[:, None, :] + alpha)
        anchors = np.flatnonzero(pos.any(axis=1) & neg.any(axis=1))
        hard_terms = []
        for a in anchors:
            hardest_pos = d[a][pos[a]].max()
            hardest_neg = d[a][neg[a]].min()
            hard = max(0.0, hardest_pos - hardest_neg + alpha)
            hard_terms.append(hard)
            # the hard triplet dominates every valid triplet of its anchor
            assert all_hinges[a][valid[a]].max() <= hard + 1e-12
            dominance_checked += 1
        got = ls.bmt_loss(ad.Tensor(x), labels, alpha,
                          strategy=ls.MiningStrategy.BATCH_HARD,
                          reduction="sum").loss.item()
        assert abs(got - sum(hard_terms)) <= 1e-9 * max(1.0, abs(got))

        # difficulty partition: every valid triplet in exactly one class
        easy = valid & (d[:, :, None] + alpha < d[:, None, :])
        hard_cls = valid & (d[:, None, :] < d[:, :, None])
        medium = valid & ~easy & ~hard_cls
        assert not (easy & hard_cls).any()
        n_valid = int(valid.sum())
        assert int(easy.sum() + hard_cls.sum() + medium.sum()) == n_valid
        counts = ls.difficulty_counts(x, labels, alpha)
        assert counts[ls.Difficulty.EASY] == int(easy.sum())
        assert counts[ls.Difficulty.HARD] == int(hard_cls.sum())
        assert counts[ls.Difficulty.MEDIUM] == int(medium.sum())
        assert sum(counts.values()) == n_valid
        partitioned += n_valid
    ok("mining semantics",
       f"{dominance_checked} anchors dominated, {partitioned} triplets partitioned")


# --- metric exactness ------------------------------------------------------------------


def test_metric_exactness():
    assert abs(asr.mrr([1]) - 1.0) <= 1e-12
    assert abs(asr.mrr([5]) - 0.2) <= 1e-12
    assert abs(asr.mrr([1, 5]) - 0.6) <= 1e-12
    with pytest.raises(asr.AssessError):
        asr.mrr([])

    judgments = (
        [{"facet": "compliant", "decision": "accept"}] * 3
        + [{"facet": "compliant", "decision": "reject"}] * 28
        + [{"facet": "noncompliant", "decision": "accept"}] * 6
        + [{"facet": "noncompliant", "decision": "reject"}] * 88
    )
    rates = asr.acceptance_rate(judgments)
    assert rates.compliant == pytest.approx(100 * 3 / 31, abs=1e-9)
    assert rates.noncompliant == pytest.approx(100 * 6 / 94, abs=1e-9)
    # overall pools all judgments; with unequal facet counts it must NOT be
    # the mean of the two facet rates
    assert rates.overall == pytest.approx(7.2, abs=1e-9)
    facet_mean = (rates.compliant + rates.noncompliant) / 2
    assert abs(rates.overall - facet_mean) > 0.5

    solo = asr.acceptance_rate([{"facet": "compliant", "decision": "accept"}])
    assert solo.compliant == 100.0
    assert solo.noncompliant is None
    assert solo.overall == 100.0
    ok("metric exactness",
       f"mrr fixtures exact; rates {rates.compliant:.2f}/{rates.noncompliant:.2f}"
       f"/{rates.overall:.1f}")


# --- synthetic zero-shot benchmark -------------------------------------------------------


@pytest.fixture(scope="session")
def benchmark_result():
    return bm.run_benchmark()


def test_zero_shot_benchmark(benchmark_result):
    result = benchmark_result
    cfg = result.config
    assert (cfg.n_train_families, cfg.n_heldout_families) == (20, 10)
    assert (cfg.snippets_per_family, cfg.n_distractors) == (20, 1000)
    assert len(result.arm_runs(bm.Arm.DOC_CC_FILTER)) == 5

    accuracy = result.median_accuracy(bm.Arm.DOC_CC_FILTER)
    mrr_plus = result.median_mrr_compliant(bm.Arm.DOC_CC_FILTER)
    mrr_minus = result.median_mrr_noncompliant(bm.Arm.DOC_CC_FILTER)
    assert accuracy >= 0.85, f"median held-out accuracy {accuracy:.3f} < 0.85"
    assert mrr_plus >= 0.5, f"median compliant MRR {mrr_plus:.3f} < 0.5"
    assert mrr_minus >= 0.5, f"median noncompliant MRR {mrr_minus:.3f} < 0.5"
    assert result.wall_time_s <= 300.0, f"benchmark took {result.wall_time_s:.0f}s"
    ok("zero-shot benchmark",
       f"accuracy {accuracy:.3f}, mrr+ {mrr_plus:.3f}, mrr- {mrr_minus:.3f}, "
       f"{result.wall_time_s:.0f}s for all arms")


def test_ablation_ordering(benchmark_result):
    result = benchmark_result
    tolerance = 0.02
    none = result.median_accuracy(bm.Arm.NONE)
    doc_cc = result.median_accuracy(bm.Arm.DOC_CC)
    filtered = result.median_accuracy(bm.Arm.DOC_CC_FILTER)
    assert none <= doc_cc + tolerance, (
        f"pre-training hurt: none {none:.3f} > doc_cc {doc_cc:.3f} + {tolerance}"
    )
    assert doc_cc <= filtered + tolerance, (
        f"filtering hurt: doc_cc {doc_cc:.3f} > filtered {filtered:.3f} + {tolerance}"
    )
    ok("ablation ordering",
       f"none {none:.3f} <= doc_cc {doc_cc:.3f} <= filtered {filtered:.3f} "
       f"(band {tolerance})")


# --- search correctness --------------------------------------------------------------


def test_search_correctness():
    corpus = synth.synth_corpus(seed=0, n_policy_families=30,
                                snippets_per_family=20, n_distractors=27_400)
    assert len(corpus.snippets) == 28_000
    rng = np.random.default_rng(0)
    sample = [corpus.snippets[int(i)].code
              for i in rng.integers(len(corpus.snippets), size=200)]
    vocab = bpe.train_bpe([p.text for p in corpus.policies] + sample, vocab_size=300)
    model = enc.Model(vocab=vocab,
                      params=enc.init_params(vocab.size, d=16, h=32, seed=0),
                      facet_mode=enc.FacetMode.PREFIXED)
    index = asr.build_index(corpus.snippets, model)
    ivf = asr.build_ivf(index, n_clusters=64, n_probe=8, seed=0)

    ids = np.asarray(index.snippet_ids)
    picks = rng.choice(len(corpus.policies), size=25, replace=False)
    queries = [(corpus.policies[int(i)].text, facet)
               for i in picks for facet in Facet]
    assert len(queries) == 50

    recalls = []
    for text, facet in queries:
        f_plus, f_minus = asr.facet_embeddings(text, model)
        query = f_plus if facet is Facet.COMPLIANT else f_minus
        dists = np.array([float((row - query) @ (row - query))
                          for row in index.embeddings])
        brute_order = sorted(range(len(ids)), key=lambda i: (dists[i], ids[i]))

        results = asr.search(text, facet, index, k=len(ids), model=model)
        assert [r.snippet_id for r in results] == [ids[i] for i in brute_order]
        assert [r.rank for r in results] == list(range(1, len(ids) + 1))
        got = np.array([r.distance for r in results])
        want = dists[brute_order]
        assert np.allclose(got, want, rtol=0, atol=1e-9)

        exact_top = {r.snippet_id for r in results[:10]}
        ann_top = {r.snippet_id for r in asr.ann_search(text, facet, ivf, 10, model)}
        recalls.append(len(exact_top & ann_top) / 10)

    recall = float(np.mean(recalls))
    assert recall >= 0.95, f"ANN recall@10 {recall:.3f} < 0.95"
    ok("search correctness",
       f"50 queries exact-ordered over 28,000 snippets, ANN recall@10 {recall:.3f}")


# --- reproducibility --------------------------------------------------------------------


def test_reproducibility(benchmark_result):
    first = next(r for r in benchmark_result.arm_runs(bm.Arm.DOC_CC_FILTER)
                 if r.seed == 0)
    second = bm.run_arm(benchmark_result.config, bm.Arm.DOC_CC_FILTER, seed=0)
    assert second.report.model_hash == first.report.model_hash
    assert second.report.to_json_dict() == first.report.to_json_dict()
    assert second.stages_run == first.stages_run
    assert second.n_finetune_pairs == first.n_finetune_pairs
    ok("reproducibility",
       f"identical model hash {first.report.model_hash[:12]} and report "
       f"on an independent rerun")

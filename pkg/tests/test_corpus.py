"""Corpus contracts: reinterpretation steps, labeling rules, formats, generators."""

from __future__ import annotations

import json

import pytest

from codecomply.corpus import io as cio
from codecomply.corpus import ops, synth
from codecomply.corpus.types import (
    BugFixRecord,
    CodeSnippet,
    Corpus,
    Facet,
    LabeledItem,
    Modality,
    Policy,
    Quadruplet,
)
from codecomply.errors import CorpusError


# --- domain type invariants -----------------------------------------------------


def test_policy_rejects_blank_text_and_unknown_source():
    with pytest.raises(CorpusError, match="empty"):
        Policy(id="p", text="   ", source="cwe")
    with pytest.raises(CorpusError, match="source"):
        Policy(id="p", text="close handles", source="folklore")


def test_snippet_rejects_empty_code():
    with pytest.raises(CorpusError, match="empty"):
        CodeSnippet(id="s", code="")


def test_quadruplet_rejects_repeated_code_ids():
    with pytest.raises(CorpusError, match="distinct"):
        Quadruplet(policy_id="p", facet=Facet.COMPLIANT,
                   matching_code_id="c1", opposite_code_id="c1")
    # None slots are absent, not duplicates
    Quadruplet(policy_id="p", facet=Facet.COMPLIANT, matching_code_id="c1")


def test_bugfix_record_rejects_degenerate_fix():
    with pytest.raises(CorpusError, match="identical"):
        BugFixRecord(id="r", comment="use locks", code_before="x = 1", code_after="x = 1")
    with pytest.raises(CorpusError, match="comment"):
        BugFixRecord(id="r", comment=" ", code_before="x = 1", code_after="x = 2")


def test_labeled_item_facet_only_on_text():
    with pytest.raises(CorpusError, match="facet"):
        LabeledItem(content="x = 1", label=0, modality=Modality.CODE,
                    facet=Facet.COMPLIANT)


def test_facet_has_exactly_two_values_with_opposites():
    assert {f.value for f in Facet} == {"compliant", "noncompliant"}
    assert Facet.COMPLIANT.opposite is Facet.NONCOMPLIANT
    assert Facet.NONCOMPLIANT.opposite is Facet.COMPLIANT


def test_corpus_enforces_unique_ids_and_resolution():
    corpus = Corpus()
    corpus.add_policy(Policy(id="p1", text="close handles", source="cwe"))
    with pytest.raises(CorpusError, match="duplicate"):
        corpus.add_policy(Policy(id="p1", text="again", source="cwe"))
    corpus.add_snippet(CodeSnippet(id="s1", code="f.close()",
                                   ground_truth=(("p9", Facet.COMPLIANT),)))
    with pytest.raises(CorpusError, match="p9"):
        corpus.validate()


# --- segment_documentation --------------------------------------------------------


def words(n: int, prefix: str = "w") -> str:
    return " ".join(f"{prefix}{i}" for i in range(n))


def test_exact_division_shares_one_label():
    items = ops.segment_documentation([words(16)], passage_len=8)
    assert len(items) == 2
    assert items[0].label == items[1].label
    assert all(i.modality is Modality.TEXT for i in items)


def test_paragraphs_get_distinct_labels():
    items = ops.segment_documentation([words(8, "a"), words(8, "b")], passage_len=8)
    assert len(items) == 2
    assert items[0].label != items[1].label


def test_single_word_remainder_dropped():
    items = ops.segment_documentation([words(9)], passage_len=8)
    assert len(items) == 1
    assert items[0].content == words(8)


def test_half_length_remainder_kept():
    # remainder of 4 meets passage_len/2 and survives
    items = ops.segment_documentation([words(12)], passage_len=8)
    assert [len(i.content.split()) for i in items] == [8, 4]
    assert items[0].label == items[1].label


def test_passages_never_span_paragraphs():
    paragraphs = [words(20, "a"), words(11, "b"), words(8, "c")]
    items = ops.segment_documentation(paragraphs, passage_len=8)
    for item in items:
        source = paragraphs[item.label]
        assert item.content in source


def test_blank_paragraphs_vanish():
    assert ops.segment_documentation([], passage_len=8) == []
    items = ops.segment_documentation(["", "   ", words(8)], passage_len=8)
    assert len(items) == 1


def test_passage_len_floor():
    with pytest.raises(CorpusError, match="passage_len"):
        ops.segment_documentation([words(16)], passage_len=4)


# --- reinterpret_bugfix -------------------------------------------------------------


REVIEW_RECORD = BugFixRecord(
    id="gh:4711",
    comment="Probably better to use `SecureRandom` for anything security related..",
    code_before=(
        "private String generatePassword(){\n"
        "  Random random=new Random();\n"
        "  StringBuilder password=new StringBuilder();\n"
        "  return password.toString();\n}"
    ),
    code_after=(
        "private String generatePassword() throws NoSuchAlgorithmException {\n"
        "  SecureRandom random=SecureRandom.getInstanceStrong();\n"
        "  char[] password=new char[20];\n"
        "  return new String(password);\n}"
    ),
)


def test_review_comment_becomes_the_policy():
    fix = ops.reinterpret_bugfix(REVIEW_RECORD)
    assert fix.policy.text == REVIEW_RECORD.comment
    assert fix.policy.source == "bugfix_comment"
    # before is the violating side, after the conforming one
    assert "Random random" in fix.before_snippet.code
    assert "SecureRandom" in fix.after_snippet.code
    assert fix.before_snippet.facet_for(fix.policy.id) is Facet.NONCOMPLIANT
    assert fix.after_snippet.facet_for(fix.policy.id) is Facet.COMPLIANT


def test_both_quadruplets_reference_one_minted_policy():
    fix = ops.reinterpret_bugfix(REVIEW_RECORD)
    assert fix.compliant.policy_id == fix.noncompliant.policy_id == fix.policy.id
    assert fix.compliant.facet is Facet.COMPLIANT
    assert fix.noncompliant.facet is Facet.NONCOMPLIANT
    assert fix.compliant.matching_code_id == fix.after_snippet.id
    assert fix.compliant.opposite_code_id == fix.before_snippet.id
    assert fix.noncompliant.matching_code_id == fix.before_snippet.id
    assert fix.noncompliant.opposite_code_id == fix.after_snippet.id
    # irrelevant slots stay open for the mining step
    assert fix.compliant.irrelevant_code_id is None
    assert fix.noncompliant.irrelevant_code_id is None


def test_two_records_mint_two_policies_four_quadruplets():
    other = BugFixRecord(id="gh:4712", comment="Always close the file handle",
                         code_before="f = open(p)", code_after="with open(p) as f: pass")
    fixes = [ops.reinterpret_bugfix(r) for r in (REVIEW_RECORD, other)]
    quads = [q for f in fixes for q in (f.compliant, f.noncompliant)]
    assert len(quads) == 2 * len(fixes)
    assert len({f.policy.id for f in fixes}) == 2


# --- mine_irrelevant ------------------------------------------------------------------


def fix_records(n: int) -> list[BugFixRecord]:
    return [
        BugFixRecord(id=f"r{i}", comment=f"use guard {i} here",
                     code_before=f"a{i} = {i}", code_after=f"a{i} = {i} + 1")
        for i in range(n)
    ]


def test_pool_of_two_picks_the_other_record():
    pool = fix_records(2)
    snippet_id = ops.mine_irrelevant("r0", pool, rng_seed=7)
    assert snippet_id.split(":")[0] == "r1"


def test_mining_is_deterministic_per_seed():
    pool = fix_records(10)
    assert ops.mine_irrelevant("r3", pool, rng_seed=42) == ops.mine_irrelevant(
        "r3", pool, rng_seed=42
    )


def test_mining_covers_the_whole_pool():
    pool = fix_records(10)
    seen_records, seen_sides = set(), set()
    for seed in range(1000):
        picked = ops.mine_irrelevant("r0", pool, rng_seed=seed)
        record_id, side = picked.rsplit(":", 1)
        assert record_id != "r0"
        seen_records.add(record_id)
        seen_sides.add(side)
    assert seen_records == {f"r{i}" for i in range(1, 10)}
    assert seen_sides == {"before", "after"}


def test_mining_needs_an_unrelated_record():
    with pytest.raises(CorpusError, match="pool"):
        ops.mine_irrelevant("r0", fix_records(1), rng_seed=0)


# --- filter_policy_like ------------------------------------------------------------


def test_filter_with_trivial_predicates():
    comments = ["use guards here please", "lgtm", "should not mutate shared state"]
    assert ops.filter_policy_like(comments, lambda c: True) == comments
    assert ops.filter_policy_like(comments, lambda c: False) == []


def test_default_heuristic_keeps_policies_drops_chatter():
    kept = ops.filter_policy_like(["use SecureRandom for security", "lgtm"])
    assert kept == ["use SecureRandom for security"]


def test_default_heuristic_needs_cue_and_length():
    assert ops.filter_policy_like(["should fix this"]) == []          # 3 tokens
    assert ops.filter_policy_like(["we fixed the parser today"]) == []  # no cue
    assert ops.filter_policy_like(["You MUST validate every input"]) == [
        "You MUST validate every input"
    ]


def test_default_heuristic_rejects_all_noise_comments():
    assert ops.filter_policy_like(list(synth.NOISE_COMMENTS)) == []


def test_filter_preserves_order():
    comments = ["never block the event loop", "ok", "prefer immutable payload types"]
    assert ops.filter_policy_like(comments) == [comments[0], comments[2]]


# --- unpivot ---------------------------------------------------------------------


def full_pair(tag: str) -> tuple[Quadruplet, Quadruplet, dict, dict]:
    policy_id = f"p{tag}"
    plus = Quadruplet(policy_id=policy_id, facet=Facet.COMPLIANT,
                      matching_code_id=f"c+{tag}", opposite_code_id=f"c-{tag}",
                      irrelevant_code_id=f"c~{tag}")
    minus = Quadruplet(policy_id=policy_id, facet=Facet.NONCOMPLIANT,
                       matching_code_id=f"c-{tag}", opposite_code_id=f"c+{tag}",
                       irrelevant_code_id=f"c~{tag}")
    texts = {policy_id: f"policy text {tag}"}
    codes = {f"c+{tag}": f"good_{tag}()", f"c-{tag}": f"bad_{tag}()",
             f"c~{tag}": f"noise_{tag}()"}
    return plus, minus, texts, codes


def test_one_pair_unpivots_to_five_items_three_labels():
    plus, minus, texts, codes = full_pair("a")
    items = ops.unpivot([(plus, minus)], texts, codes)
    assert len(items) == 5
    assert len({i.label for i in items}) == 3
    # emitted as (r+, c+), (r-, c-), then the shared irrelevant
    assert items[0].label == items[1].label
    assert items[2].label == items[3].label
    assert [i.modality for i in items] == [
        Modality.TEXT, Modality.CODE, Modality.TEXT, Modality.CODE, Modality.CODE
    ]
    assert items[0].facet is Facet.COMPLIANT
    assert items[2].facet is Facet.NONCOMPLIANT
    assert all(i.facet is None for i in items if i.modality is Modality.CODE)
    assert items[4].content == "noise_a()"


def test_two_pairs_ten_items_six_labels():
    plus_a, minus_a, texts_a, codes_a = full_pair("a")
    plus_b, minus_b, texts_b, codes_b = full_pair("b")
    items = ops.unpivot([(plus_a, minus_a), (plus_b, minus_b)],
                        {**texts_a, **texts_b}, {**codes_a, **codes_b})
    assert len(items) == 10
    assert len({i.label for i in items}) == 6


def test_partial_pair_emits_present_facet_only():
    _, minus, texts, codes = full_pair("a")
    items = ops.unpivot([(None, minus)], texts, codes)
    assert len(items) == 3
    assert items[0].label == items[1].label
    assert items[0].facet is Facet.NONCOMPLIANT
    assert items[2].label != items[0].label
    assert items[2].content == "noise_a()"


def test_irrelevant_labels_are_globally_unique():
    pairs, texts, codes = [], {}, {}
    for tag in "abcd":
        plus, minus, t, c = full_pair(tag)
        pairs.append((plus, minus))
        texts.update(t)
        codes.update(c)
    items = ops.unpivot(pairs, texts, codes)
    irrelevant = [i for i in items if i.ref_id and i.ref_id.startswith("c~")]
    assert len(irrelevant) == 4
    their_labels = {i.label for i in irrelevant}
    assert len(their_labels) == 4
    # no other item shares a label with any irrelevant snippet
    other_labels = {i.label for i in items if i not in irrelevant}
    assert not their_labels & other_labels


def test_label_groups_are_single_policy_facet_or_singleton():
    pairs, texts, codes = [], {}, {}
    for tag in "abc":
        plus, minus, t, c = full_pair(tag)
        pairs.append((plus, minus))
        texts.update(t)
        codes.update(c)
    items = ops.unpivot(pairs, texts, codes)
    by_label: dict[int, list] = {}
    for item in items:
        by_label.setdefault(item.label, []).append(item)
    for group in by_label.values():
        if len(group) == 1:
            assert group[0].modality is Modality.CODE
        else:
            facets = {i.facet for i in group if i.modality is Modality.TEXT}
            assert len(group) == 2
            assert len(facets) == 1


def test_unpivot_rejects_malformed_pairs():
    plus, minus, texts, codes = full_pair("a")
    with pytest.raises(CorpusError, match="compliant"):
        ops.unpivot([(minus, plus)], texts, codes)
    plus_b, _, texts_b, codes_b = full_pair("b")
    with pytest.raises(CorpusError, match="one policy"):
        ops.unpivot([(plus_b, minus)], {**texts, **texts_b}, {**codes, **codes_b})


def test_unpivot_skips_fully_absent_pairs():
    plus, minus, texts, codes = full_pair("a")
    items = ops.unpivot([(None, None), (plus, minus)], texts, codes)
    assert len(items) == 5


# --- quadruplets_from_records -------------------------------------------------------


def test_record_quadruplets_share_the_irrelevant_slot():
    records = fix_records(6)
    pairs, policy_texts, snippet_codes = ops.quadruplets_from_records(records)
    assert len(pairs) == 6
    for (plus, minus), record in zip(pairs, records):
        assert plus.irrelevant_code_id == minus.irrelevant_code_id
        assert not plus.irrelevant_code_id.startswith(f"{record.id}:")
        assert plus.irrelevant_code_id in snippet_codes
        assert policy_texts[plus.policy_id] == record.comment
    # stable across calls and processes: ids seed the mining
    again, _, _ = ops.quadruplets_from_records(records)
    assert [(p.irrelevant_code_id) for p, _ in again] == [
        (p.irrelevant_code_id) for p, _ in pairs
    ]


def test_record_quadruplets_alternate_into_a_foreign_pool():
    records = fix_records(6)
    foreign = [CodeSnippet(id=f"f{i}", code=f"foreign_{i}()") for i in range(3)]
    pairs, _, snippet_codes = ops.quadruplets_from_records(records, foreign, seed=1)
    for i, (plus, _) in enumerate(pairs):
        if i % 2 == 1:
            assert plus.irrelevant_code_id.startswith("aux:")
            assert snippet_codes[plus.irrelevant_code_id].startswith("foreign_")
        else:
            assert not plus.irrelevant_code_id.startswith("aux:")


# --- synthetic corpus ----------------------------------------------------------------


def test_synth_corpus_is_deterministic_per_seed():
    build = lambda: synth.synth_corpus(seed=9, n_policy_families=5,
                                       snippets_per_family=4, n_distractors=7)
    a, b = build(), build()
    assert [(p.id, p.text) for p in a.policies] == [(p.id, p.text) for p in b.policies]
    assert [(s.id, s.code, s.ground_truth) for s in a.snippets] == [
        (s.id, s.code, s.ground_truth) for s in b.snippets
    ]
    different = synth.synth_corpus(seed=10, n_policy_families=5,
                                   snippets_per_family=4, n_distractors=7)
    assert [s.code for s in different.snippets] != [s.code for s in a.snippets]


def test_zero_distractors_means_full_ground_truth():
    corpus = synth.synth_corpus(seed=1, n_policy_families=4,
                                snippets_per_family=4, n_distractors=0)
    assert all(s.ground_truth for s in corpus.snippets)


def test_planted_patterns_match_facets_everywhere():
    corpus = synth.synth_corpus(seed=2, n_policy_families=6,
                                snippets_per_family=5, n_distractors=40)
    good, bad = set(synth.GOOD_WORDS), set(synth.BAD_WORDS)
    for snippet in corpus.snippets:
        tokens = set(snippet.code.split())
        if not snippet.ground_truth:
            assert not tokens & (good | bad)
            continue
        facet = snippet.ground_truth[0][1]
        if facet is Facet.COMPLIANT:
            assert tokens & good and not tokens & bad
        else:
            assert tokens & bad and not tokens & good


def test_family_partition_is_zero_shot():
    corpus = synth.synth_corpus(seed=3, n_policy_families=6,
                                snippets_per_family=2, n_distractors=0,
                                n_held_out=2)
    train, held = set(corpus.train_policy_ids), set(corpus.heldout_policy_ids)
    assert len(train) == 4 and len(held) == 2
    assert not train & held
    assert train | held == {p.id for p in corpus.policies}
    # held-out stems never appear in training families' snippets
    held_stems = {
        w for pid in held for w in corpus.policy_by_id(pid).text.split()[1:3]
    }
    train_snippets = [
        s for s in corpus.snippets
        if s.ground_truth and s.ground_truth[0][0] in train
    ]
    for snippet in train_snippets:
        assert not held_stems & set(snippet.code.split())


def test_policy_filter_separates_true_fixes_from_noise():
    records = synth.synth_bugfixes(seed=4, n_policy_families=3, n_held_out=1)
    noise = [r for r in records if r.id.startswith("noise:")]
    true = [r for r in records if r.id.startswith("fix:")]
    assert noise and true
    kept = set(ops.filter_policy_like([r.comment for r in records]))
    assert all(r.comment in kept for r in true)
    assert all(r.comment not in kept for r in noise)


# --- file formats ----------------------------------------------------------------


def test_policies_round_trip(tmp_path):
    policies = [Policy(id="p1", text="close handles", source="cwe"),
                Policy(id="p2", text="validate lengths", source="user")]
    path = tmp_path / "policies.jsonl"
    cio.write_policies(path, policies)
    assert cio.read_policies(path) == policies


def test_snippets_round_trip_with_optional_ground_truth(tmp_path):
    snippets = [
        CodeSnippet(id="s1", code="f.close()",
                    ground_truth=(("p1", Facet.COMPLIANT), ("p2", Facet.NONCOMPLIANT))),
        CodeSnippet(id="s2", code="pass"),
    ]
    path = tmp_path / "snippets.jsonl"
    cio.write_snippets(path, snippets)
    assert cio.read_snippets(path) == snippets
    # absent ground truth stays absent on disk rather than becoming []
    lines = [json.loads(l) for l in path.read_text().splitlines()]
    assert "ground_truth" not in lines[1]


def test_bugfixes_round_trip(tmp_path):
    records = fix_records(3)
    path = tmp_path / "bugfix.jsonl"
    cio.write_bugfixes(path, records)
    assert cio.read_bugfixes(path) == records


def test_docs_round_trip_blank_line_separated(tmp_path):
    paragraphs = ["first paragraph with words", "second one"]
    path = tmp_path / "docs.txt"
    cio.write_docs(path, paragraphs)
    assert cio.read_docs(path) == paragraphs
    raw = path.read_text()
    assert "\n\n" in raw


def test_docs_reader_joins_wrapped_lines(tmp_path):
    path = tmp_path / "docs.txt"
    path.write_text("a paragraph\nwrapped over lines\n\nnext paragraph\n")
    assert cio.read_docs(path) == ["a paragraph wrapped over lines", "next paragraph"]


def test_jsonl_errors_carry_path_and_line(tmp_path):
    path = tmp_path / "policies.jsonl"
    path.write_text('{"id": "p1", "text": "t", "source": "cwe"}\n{"id": "p2"}\n')
    with pytest.raises(CorpusError, match=r"policies\.jsonl:2.*text"):
        cio.read_policies(path)
    path.write_text("not json\n")
    with pytest.raises(CorpusError, match=r"policies\.jsonl:1"):
        cio.read_policies(path)


def test_blank_lines_are_skipped(tmp_path):
    path = tmp_path / "policies.jsonl"
    path.write_text('\n{"id": "p1", "text": "t", "source": "cwe"}\n\n')
    assert len(cio.read_policies(path)) == 1

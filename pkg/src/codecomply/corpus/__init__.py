"""Corpus handling: domain types, byte-level BPE, re-interpretation ops,
synthetic corpora and file formats."""

from codecomply.corpus.bpe import (
    DEFAULT_MAX_SEQ_LEN,
    FACET_MINUS,
    FACET_PLUS,
    PAD,
    RESERVED_TOKENS,
    SEP,
    UNK,
    Vocabulary,
    detokenize,
    load_vocab,
    save_vocab,
    tokenize,
    train_bpe,
)
from codecomply.corpus.io import (
    read_bugfixes,
    read_docs,
    read_policies,
    read_snippets,
    write_bugfixes,
    write_docs,
    write_policies,
    write_snippets,
)
from codecomply.corpus.ops import (
    POLICY_CUE_WORDS,
    ReinterpretedFix,
    default_policy_predicate,
    filter_policy_like,
    label_counter,
    mine_irrelevant,
    reinterpret_bugfix,
    segment_documentation,
    unpivot,
)
from codecomply.corpus.synth import (
    BAD_WORDS,
    GOOD_WORDS,
    Family,
    SynthCorpus,
    build_lexicon,
    cc_pairs_from_records,
    synth_bugfixes,
    synth_corpus,
    synth_docs,
)
from codecomply.corpus.types import (
    POLICY_SOURCES,
    BugFixRecord,
    CodeSnippet,
    Corpus,
    Facet,
    LabeledItem,
    Modality,
    Policy,
    Quadruplet,
)

__all__ = [
    "BAD_WORDS",
    "BugFixRecord",
    "CodeSnippet",
    "Corpus",
    "DEFAULT_MAX_SEQ_LEN",
    "FACET_MINUS",
    "FACET_PLUS",
    "Facet",
    "Family",
    "GOOD_WORDS",
    "LabeledItem",
    "Modality",
    "PAD",
    "POLICY_CUE_WORDS",
    "POLICY_SOURCES",
    "Policy",
    "Quadruplet",
    "RESERVED_TOKENS",
    "ReinterpretedFix",
    "SEP",
    "SynthCorpus",
    "UNK",
    "Vocabulary",
    "build_lexicon",
    "cc_pairs_from_records",
    "default_policy_predicate",
    "detokenize",
    "filter_policy_like",
    "label_counter",
    "load_vocab",
    "mine_irrelevant",
    "read_bugfixes",
    "read_docs",
    "read_policies",
    "read_snippets",
    "reinterpret_bugfix",
    "save_vocab",
    "segment_documentation",
    "synth_bugfixes",
    "synth_corpus",
    "synth_docs",
    "tokenize",
    "train_bpe",
    "unpivot",
    "write_bugfixes",
    "write_docs",
    "write_policies",
    "write_snippets",
]

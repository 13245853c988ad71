"""codecomply: a faceted embedding space for code compliance.

Policies and code snippets share one vector space; each policy owns a
compliant and a non-compliant representation, and distance to those encodes
relevance and compliance. Subpackages:

- ``corpus``: domain types, BPE tokenizer, corpus re-interpretation, synthetic data
- ``autodiff``: reverse-mode gradients over numpy arrays
- ``encoder``: the bimodal faceted encoder
- ``losses``: quadruplet and batched-multimodal-triplet losses
- ``trainer``: pre-training / pre-fine-tuning pipeline
- ``assessor``: classification, search and evaluation metrics
- ``service`` / ``cli``: HTTP review service and command line
"""

__version__ = "0.1.0"

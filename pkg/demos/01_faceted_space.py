"""
One policy, two faces: geometry of the compliance space
========================================================

A coding policy is embedded twice: once as "code that follows this rule"
and once as "code that violates it". Code snippets land in the same space,
so distance to each face reads out relevance and compliance at once. This
demo trains a small model on synthetic policies and walks one held-out
policy through the geometry.
"""

import numpy as np

from codecomply import assessor as asr
from codecomply import benchmark as bm
from codecomply import encoder as enc

# ---- train on synthetic policy families -------------------------------------
# build_inputs carves the corpus into train / calibration / held-out families;
# train_arm runs documentation pre-training, code-comment matching, then
# triplet fine-tuning on reinterpreted bug fixes (comments filtered to the
# policy-like ones).

config = bm.BenchmarkConfig()
inputs = bm.build_inputs(config, seed=0)
pipeline, n_pairs = bm.train_arm(inputs, bm.Arm.DOC_CC_FILTER, config)
model = enc.Model(vocab=inputs.vocab, params=pipeline.params,
                  facet_mode=enc.FacetMode.PREFIXED)
alpha = bm.calibrate_alpha(inputs, model, config)
print(f"stages run: {' -> '.join(pipeline.stages_run)}  "
      f"({n_pairs} fine-tune quadruplets)")
print(f"calibrated relevance threshold alpha = {alpha}")

# ---- a held-out policy and its two embeddings --------------------------------
# The model never saw this family during training. facet_embeddings returns
# the unit vectors for the compliant and non-compliant readings of the text.

policy = inputs.heldout_policies[0]
f_plus, f_minus = asr.facet_embeddings(policy.text, model)
gap = float(np.sum((f_plus - f_minus) ** 2))
print(f"\npolicy {policy.id}: {policy.text!r}")
print(f"squared distance between its two faces: {gap:.3f}")

# ---- three snippets, three verdicts ------------------------------------------
# One snippet that follows the policy, one that violates it, one distractor.
# classify() measures the distance to the renormalized average of the two
# faces first: farther than alpha means the policy does not apply at all.
# Only then does the nearer face decide compliant vs non-compliant.

from codecomply.corpus.types import Facet

compliant = next(s for s in inputs.heldout_snippets
                 if s.facet_for(policy.id) is Facet.COMPLIANT)
violating = next(s for s in inputs.heldout_snippets
                 if s.facet_for(policy.id) is Facet.NONCOMPLIANT)
distractor = inputs.distractors[0]

print(f"\n{'snippet':<12} {'d(f+)':>8} {'d(f-)':>8} {'d(avg)':>8}  verdict")
for name, snippet in (("follows", compliant), ("violates", violating),
                      ("unrelated", distractor)):
    code_vec = asr.encode_snippets([snippet.code], model)[0]
    d_plus = float(np.sum((code_vec - f_plus) ** 2))
    d_minus = float(np.sum((code_vec - f_minus) ** 2))
    verdict = asr.classify(policy.text, snippet.code, model, alpha=alpha)
    probability = ("" if verdict.p_compliant is None
                   else f"  (p_compliant={verdict.p_compliant:.2f})")
    print(f"{name:<12} {d_plus:8.3f} {d_minus:8.3f} {verdict.d_avg:8.3f}"
          f"  {verdict.label.value}{probability}")

# The compliant snippet sits nearer the compliant face, the violating one
# nearer the non-compliant face, and the distractor beyond alpha from both —
# one embedding space answering "does this rule apply?" and "is it followed?"
# in a single distance computation.

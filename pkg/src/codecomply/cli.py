"""Command-line entry points: corpus generation, training stages, search, serving.

Exit codes: 0 success, 1 user error (bad flags, bad files, failed checks),
2 internal error. Every command with randomness takes --seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback
from pathlib import Path

import numpy as np

from . import assessor as asr
from . import autodiff as ad
from . import encoder as enc
from . import losses as ls
from . import trainer as tr
from .corpus import bpe, io as cio, ops, synth
from .corpus.types import Facet
from .errors import CodecomplyError

GRADCHECK_TOLERANCE = 1e-4


class _UserExit(Exception):
    """Usage problem: carries the message, mapped to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse would exit(2)
        raise _UserExit(f"{message}\n{self.format_usage()}")


def _print(obj: dict) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


# --- shared flag groups ------------------------------------------------------


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--learning-rate", type=float, default=0.05)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--grad-clip", type=float, default=1.0)
    p.add_argument("--momentum", type=float, default=0.0)
    p.add_argument("--weight-reg", type=float, default=0.0)
    p.add_argument("--mask-reg", type=float, default=0.0)
    p.add_argument("--loss", choices=[m.value for m in tr.LossMode], default="bmt")
    p.add_argument("--mining", choices=[m.value for m in ls.MiningStrategy],
                   default="batch_all")
    p.add_argument("--facet-mode", choices=[m.value for m in enc.FacetMode],
                   default="prefixed")
    p.add_argument("--margin", type=float, default=0.2,
                   help="triplet margin alpha (also alpha1; alpha2 is 2x)")
    p.add_argument("--seed", type=int, default=0)


def _train_config(args: argparse.Namespace) -> tr.TrainConfig:
    return tr.TrainConfig(
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        epochs=args.epochs,
        margins=ls.MarginConfig(alpha1=args.margin, alpha2=2 * args.margin, alpha=args.margin),
        facet_mode=enc.FacetMode(args.facet_mode),
        loss_mode=tr.LossMode(args.loss),
        mining=ls.MiningStrategy(args.mining),
        seed=args.seed,
        weight_reg=args.weight_reg,
        mask_reg=args.mask_reg,
        momentum=args.momentum,
        patience=args.patience,
        grad_clip=args.grad_clip,
    )


def _add_model_io(p: argparse.ArgumentParser, out_required: bool = True) -> None:
    p.add_argument("--vocab", required=True, help="vocabulary file (train-bpe output)")
    p.add_argument("--model-in", help="continue from this model instead of a fresh init")
    p.add_argument("--out", required=out_required, help="where to write the trained model")
    p.add_argument("--dim", type=int, default=32, help="embedding width for fresh inits")
    p.add_argument("--hidden", type=int, default=64, help="hidden width for fresh inits")


def _load_or_init(args: argparse.Namespace) -> tuple[bpe.Vocabulary, enc.EncoderParams]:
    vocab = bpe.load_vocab(args.vocab)
    if args.model_in:
        model = enc.load_model(args.model_in)
        if model.vocab.content_hash() != vocab.content_hash():
            raise _UserExit("--model-in was trained under a different vocabulary")
        return vocab, model.params
    return vocab, enc.init_params(vocab.size, d=args.dim, h=args.hidden, seed=args.seed)


def _save_stage_output(args: argparse.Namespace, vocab: bpe.Vocabulary,
                       params: enc.EncoderParams, report: tr.TrainReport) -> None:
    model = enc.Model(vocab=vocab, params=params,
                      facet_mode=enc.FacetMode(args.facet_mode))
    enc.save_model(model, args.out)
    _print({"model": args.out, "model_hash": model.model_hash,
            "report": report.to_json_dict()})


# --- subcommands -------------------------------------------------------------


def cmd_train_bpe(args: argparse.Namespace) -> int:
    texts: list[str] = []
    for path in args.docs or []:
        texts.extend(cio.read_docs(path))
    for path in args.policies or []:
        texts.extend(p.text for p in cio.read_policies(path))
    for path in args.snippets or []:
        texts.extend(s.code for s in cio.read_snippets(path))
    for path in args.bugfixes or []:
        for r in cio.read_bugfixes(path):
            texts.extend((r.comment, r.code_before, r.code_after))
    if not texts:
        raise _UserExit("no input texts; pass --docs/--policies/--snippets/--bugfixes")
    vocab = bpe.train_bpe(texts, vocab_size=args.vocab_size)
    bpe.save_vocab(vocab, args.out)
    _print({"vocab": args.out, "size": vocab.size, "n_texts": len(texts)})
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpus = synth.synth_corpus(
        seed=args.seed,
        n_policy_families=args.families,
        snippets_per_family=args.snippets_per_family,
        n_distractors=args.distractors,
        n_held_out=args.held_out,
    )
    docs = synth.synth_docs(seed=args.seed, n_policy_families=args.families,
                            n_held_out=args.held_out)
    records = synth.synth_bugfixes(seed=args.seed, n_policy_families=args.families,
                                   n_held_out=args.held_out)
    cio.write_policies(out / "policies.jsonl", corpus.policies)
    cio.write_snippets(out / "snippets.jsonl", corpus.snippets)
    cio.write_bugfixes(out / "bugfix.jsonl", records)
    cio.write_docs(out / "docs.txt", docs)
    _print({
        "out_dir": str(out),
        "n_policies": len(corpus.policies),
        "n_snippets": len(corpus.snippets),
        "n_bugfixes": len(records),
        "n_docs": len(docs),
        "train_policy_ids": list(corpus.train_policy_ids),
        "heldout_policy_ids": list(corpus.heldout_policy_ids),
    })
    return 0


def cmd_pretrain_doc(args: argparse.Namespace) -> int:
    vocab, params = _load_or_init(args)
    passages = ops.segment_documentation(cio.read_docs(args.docs))
    params, report = tr.pretrain_doc(passages, vocab, _train_config(args), params)
    _save_stage_output(args, vocab, params, report)
    return 0


def cmd_pretrain_cc(args: argparse.Namespace) -> int:
    vocab, params = _load_or_init(args)
    pairs = synth.cc_pairs_from_records(cio.read_bugfixes(args.bugfixes))
    params, report = tr.pretrain_cc(pairs, vocab, _train_config(args), params)
    _save_stage_output(args, vocab, params, report)
    return 0


def _finetune_pairs(args: argparse.Namespace):
    records = cio.read_bugfixes(args.bugfixes)
    if not args.no_filter:
        kept = set(ops.filter_policy_like([r.comment for r in records]))
        records = [r for r in records if r.comment in kept]
    if not records:
        raise _UserExit("no records left to fine-tune on")
    return ops.quadruplets_from_records(records, seed=args.seed)


def cmd_finetune(args: argparse.Namespace) -> int:
    vocab, params = _load_or_init(args)
    pairs, policy_texts, snippet_codes = _finetune_pairs(args)
    params, report = tr.prefinetune(
        pairs, policy_texts, snippet_codes, vocab, _train_config(args), params
    )
    _save_stage_output(args, vocab, params, report)
    return 0


def cmd_gridsearch(args: argparse.Namespace) -> int:
    vocab, params = _load_or_init(args)
    raw = json.loads(Path(args.configs).read_text(encoding="utf-8"))
    if not isinstance(raw, list):
        raise _UserExit("--configs must hold a JSON array of training configs")
    configs = [tr.TrainConfig.from_json_dict(c) for c in raw]

    if args.stage == "doc":
        passages = ops.segment_documentation(cio.read_docs(args.docs))
        train_fn = lambda cfg: tr.pretrain_doc(passages, vocab, cfg, params)
    elif args.stage == "cc":
        pairs = synth.cc_pairs_from_records(cio.read_bugfixes(args.bugfixes))
        train_fn = lambda cfg: tr.pretrain_cc(pairs, vocab, cfg, params)
    else:
        quads, policy_texts, snippet_codes = _finetune_pairs(args)
        train_fn = lambda cfg: tr.prefinetune(
            quads, policy_texts, snippet_codes, vocab, cfg, params
        )

    result = tr.grid_search(configs, train_fn)
    model = enc.Model(vocab=vocab, params=result.best_params,
                      facet_mode=result.best_config.facet_mode)
    enc.save_model(model, args.out)
    _print({
        "model": args.out,
        "model_hash": model.model_hash,
        "n_configs": len(configs),
        "best_config": result.best_config.to_json_dict(),
        "best_report": result.best_report.to_json_dict(),
    })
    return 0


def cmd_index(args: argparse.Namespace) -> int:
    model = enc.load_model(args.model)
    snippets = cio.read_snippets(args.snippets)
    index = asr.build_index(snippets, model)
    asr.save_index(index, args.out)
    _print({"index": args.out, "count": len(index), "model_hash": index.model_hash})
    return 0


def _policy_text(args: argparse.Namespace) -> str:
    if args.policy_text is not None:
        return args.policy_text
    return Path(args.policy_file).read_text(encoding="utf-8").strip()


def cmd_search(args: argparse.Namespace) -> int:
    model = enc.load_model(args.model)
    index = asr.load_index(args.index)
    results = asr.search(_policy_text(args), Facet(args.facet), index, args.k, model)
    for r in results:
        print(f"{r.rank}\t{r.snippet_id}\t{r.distance:.6f}")
    return 0


def cmd_classify(args: argparse.Namespace) -> int:
    model = enc.load_model(args.model)
    code = args.code if args.code is not None else Path(args.code_file).read_text(
        encoding="utf-8"
    )
    verdict = asr.classify(_policy_text(args), code, model, alpha=args.alpha)
    _print({
        "label": verdict.label.value,
        "d_avg": verdict.d_avg,
        "p_compliant": verdict.p_compliant,
        "p_noncompliant": verdict.p_noncompliant,
        "model_hash": model.model_hash,
    })
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    model = enc.load_model(args.model)
    policies = cio.read_policies(args.policies)
    snippets = cio.read_snippets(args.snippets)
    report = asr.evaluate(policies, snippets, model, alpha=args.alpha,
                          distractor_seed=args.seed)
    _print(report.to_json_dict())
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    rng = np.random.default_rng(args.seed)
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
            ids=tuple(int(t) for t in rng.integers(5, 50, size=int(rng.integers(3, 10)))),
            facet=facets[int(rng.integers(3))],
            ref_id=f"item{k}",
        )
        for k in range(8)
    ]
    labels = [int(l) for l in rng.integers(0, 3, size=len(batch))]

    def bmt_fn(encoding: enc.BatchEncoding) -> ad.Tensor:
        out = ls.bmt_loss(encoding.unit, labels, alpha=0.2).loss
        if args.inject_gradient_error:
            # value shifts with the parameters but contributes no gradient,
            # so analytic and numeric derivatives must disagree
            out = out + ad.Tensor(float(np.sum(encoding.unit.data)) * 1e-3)
        return out

    entries = [
        ls.QuadrupletIndices(facet=Facet.COMPLIANT, r=0, c_match=1, c_opp=2, c_irr=3),
        ls.QuadrupletIndices(facet=Facet.NONCOMPLIANT, r=4, c_match=5, c_opp=6, c_irr=7),
    ]

    def quad_fn(encoding: enc.BatchEncoding) -> ad.Tensor:
        return ls.quadruplet_loss(encoding.unit, entries, ls.MarginConfig())[2]

    worst: dict = {"max_rel_error": 0.0}
    for mode in enc.FacetMode:
        for name, fn in (("bmt", bmt_fn), ("quadruplet", quad_fn)):
            report = enc.grad_check(params, batch, fn, facet_mode=mode, seed=args.seed)
            if report.max_rel_error >= worst["max_rel_error"]:
                worst = {
                    "max_rel_error": float(report.max_rel_error),
                    "loss": name,
                    "facet_mode": mode.value,
                    "worst_param": report.worst_param,
                    "n_checked": int(report.n_checked),
                }
    worst["tolerance"] = GRADCHECK_TOLERANCE
    worst["ok"] = worst["max_rel_error"] <= GRADCHECK_TOLERANCE
    _print(worst)
    return 0 if worst["ok"] else 1


def cmd_serve(args: argparse.Namespace) -> int:
    from . import service as svc

    models = args.model or _env_list("P2C_MODEL")
    indexes = args.index or _env_list("P2C_INDEX")
    judgments = args.judgments or os.environ.get("P2C_JUDGMENTS")
    port = args.port if args.port is not None else int(os.environ.get("P2C_PORT", "8765"))
    if not models or not indexes:
        raise _UserExit("need --model and --index (or P2C_MODEL / P2C_INDEX)")
    if not judgments:
        raise _UserExit("need --judgments (or P2C_JUDGMENTS)")
    if not args.snippets:
        raise _UserExit("need --snippets so search responses can include code")
    state = svc.load_state(
        model_paths=models,
        index_paths=indexes,
        snippet_paths=args.snippets,
        judgments_path=judgments,
        alpha=args.alpha,
        seed=args.seed,
    )
    server = svc.Service(state, host=args.host, port=port, static_dir=args.static)
    print(json.dumps({"port": server.port, "model_tags": sorted(state.served)}))
    sys.stdout.flush()
    server.serve_forever()
    return 0


def _env_list(name: str) -> list[str]:
    raw = os.environ.get(name, "")
    return [part for part in raw.split(",") if part]


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="codecomply", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-bpe", help="learn a byte-pair vocabulary from corpus files")
    p.add_argument("--docs", action="append")
    p.add_argument("--policies", action="append")
    p.add_argument("--snippets", action="append")
    p.add_argument("--bugfixes", action="append")
    p.add_argument("--vocab-size", type=int, default=500)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_bpe)

    p = sub.add_parser("synth", help="generate a synthetic labeled corpus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--families", type=int, default=30)
    p.add_argument("--held-out", type=int, default=10)
    p.add_argument("--snippets-per-family", type=int, default=20)
    p.add_argument("--distractors", type=int, default=1000)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pretrain-doc", help="collocation pre-training on documentation")
    p.add_argument("--docs", required=True)
    _add_model_io(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_pretrain_doc)

    p = sub.add_parser("pretrain-cc", help="code/comment matching pre-training")
    p.add_argument("--bugfixes", required=True)
    _add_model_io(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_pretrain_cc)

    p = sub.add_parser("finetune", help="faceted fine-tuning on bug-fix records")
    p.add_argument("--bugfixes", required=True)
    p.add_argument("--no-filter", action="store_true",
                   help="skip the policy-likeness filter")
    _add_model_io(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("gridsearch", help="train several configs, keep the best")
    p.add_argument("--stage", choices=["doc", "cc", "finetune"], required=True)
    p.add_argument("--configs", required=True, help="JSON array of training configs")
    p.add_argument("--docs")
    p.add_argument("--bugfixes")
    p.add_argument("--no-filter", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    _add_model_io(p)
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("index", help="embed snippets into a search index")
    p.add_argument("--snippets", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("search", help="rank indexed snippets against a policy facet")
    p.add_argument("--index", required=True)
    p.add_argument("--model", required=True)
    text = p.add_mutually_exclusive_group(required=True)
    text.add_argument("--policy-text")
    text.add_argument("--policy-file")
    p.add_argument("--facet", choices=[f.value for f in Facet], required=True)
    p.add_argument("--k", type=int, default=5)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("classify", help="three-way verdict for one policy and one snippet")
    p.add_argument("--model", required=True)
    text = p.add_mutually_exclusive_group(required=True)
    text.add_argument("--policy-text")
    text.add_argument("--policy-file")
    code = p.add_mutually_exclusive_group(required=True)
    code.add_argument("--code")
    code.add_argument("--code-file")
    p.add_argument("--alpha", type=float, default=0.2)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("eval", help="accuracy and per-facet MRR on a labeled corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--policies", required=True)
    p.add_argument("--snippets", required=True)
    p.add_argument("--alpha", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0, help="distractor sampling seed")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference audit of the gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-gradient-error", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("serve", help="HTTP search/classify/judgment service")
    p.add_argument("--model", action="append", help="model file; repeat to serve several")
    p.add_argument("--index", action="append", help="index file, one per --model")
    p.add_argument("--snippets", action="append", help="snippet corpus backing the index")
    p.add_argument("--judgments", help="append-only judgment log path")
    p.add_argument("--port", type=int)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--alpha", type=float, default=0.2)
    p.add_argument("--static", help="directory of UI assets to serve at /")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except _UserExit as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except _UserExit as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (CodecomplyError, asr.AssessError, tr.TrainingError,
            ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 130
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())

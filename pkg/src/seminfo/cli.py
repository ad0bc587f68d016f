"""Command-line entry point: ``seminfo <verb> ...``."""

import argparse
import glob
import json
import logging
import os
import sys

import numpy as np

log = logging.getLogger("seminfo")


def _sources(paraphrase_path, options=None):
    from .corpusio import corpus_records, read_paraphrase_records
    from .textnorm import NormalizationOptions

    return corpus_records(read_paraphrase_records(paraphrase_path), options or NormalizationOptions())


def _aligned_scores(records, score_path):
    from .maxsub import read_scores

    by_id = {t.id: t for t in read_scores(score_path)}
    out = []
    for r in records:
        if r.id not in by_id:
            raise SystemExit(f"error: {score_path} has no scores for sentence {r.id!r}")
        t = by_id[r.id]
        if t.n != len(r.normalized):
            raise SystemExit(f"error: score table for {r.id!r} covers {t.n} tokens, sentence has {len(r.normalized)}")
        out.append(t)
    return out


def _punct_masks(golds):
    from .textnorm import is_punct_token

    return [[is_punct_token(t) for t in g.tokens] if g.tokens else [False] * g.n for g in golds]


# ---------------------------------------------------------------------------
# verbs


def cmd_synth(args):
    from .experiment import prepare_synthetic
    from .synth import SynthConfig

    cfg = SynthConfig(args.sentences, args.min_len, args.max_len, args.paraphrases, args.swap_prob,
                      args.front_prob, identity_only=args.identity)
    data = prepare_synthetic(args.out, cfg, args.seed, args.jobs)
    print(f"wrote {len(data.ids)} sentences to {args.out}")


def cmd_paraphrase(args):
    from .client import fetch_paraphrases, select_templates

    with open(args.input, encoding="utf-8") as fh:
        sentences = [l.strip() for l in fh if l.strip()]
    templates = select_templates(args.templates.split(",") if args.templates else None)
    recs = fetch_paraphrases(args.endpoint, args.model, sentences, args.out, templates, args.lang,
                             args.samples_per_prompt, args.jobs, retries=args.retries)
    print(f"wrote {len(recs)} paraphrase sets to {args.out}")


def cmd_score(args):
    from .corpusio import read_paraphrases
    from .maxsub import ScoreOptions, score_corpus, write_scores

    sets = read_paraphrases(args.paraphrases)
    tables, _ = score_corpus(sets, ScoreOptions(log_tf=not args.raw_tf), jobs=args.jobs)
    write_scores(args.out, tables)
    print(f"wrote {len(tables)} score tables to {args.out}")


def _train_config(args):
    from .train import load_config

    over = {k: getattr(args, k) for k in ("policy", "samples_per_sentence", "entropy_coef", "entropy_placement",
                                          "ll_weight", "learning_rate", "batch_size", "max_steps", "clip_norm",
                                          "objective", "num_nonterminals", "checkpoint_every", "eval_every")}
    over["seed"] = args.seed
    return load_config(args.config, over)


def cmd_train(args):
    from .corpusio import read_bracketed
    from .evaluate import evaluate_grammar
    from .train import train

    cfg = _train_config(args)
    recs = _sources(args.paraphrases)
    sentences = [list(r.normalized.normalized_tokens) for r in recs]
    scores = _aligned_scores(recs, args.scores) if args.scores else None
    if scores is None and cfg.objective == "seminfo":
        raise SystemExit("error: the seminfo objective needs --scores (or use --objective ll)")
    gold = evaluate_fn = None
    if args.gold:
        gold = read_bracketed(args.gold)
        masks = _punct_masks(gold)
        tabs = scores or [None] * len(sentences)
        from .maxsub import SpanScoreTable

        tabs = [t or SpanScoreTable(r.id, len(s)) for t, r, s in zip(tabs, recs, sentences)]
        evaluate_fn = lambda g: evaluate_grammar(g, sentences, tabs, gold, masks).corpus_f1  # noqa: E731
    train(sentences, scores, cfg, args.out, gold=gold, resume=args.resume, evaluate_fn=evaluate_fn)
    print(f"trained {cfg.max_steps} steps; checkpoints and metrics.jsonl in {args.out}")


def cmd_parse(args):
    from . import parse
    from .pcfg import load_checkpoint
    from .trees import write_trees_jsonl

    recs = _sources(args.paraphrases)
    sentences = [list(r.normalized.normalized_tokens) for r in recs]
    if args.checkpoint:
        grammar, _ = load_checkpoint(args.checkpoint)
        trees = parse.parse_mbr_batch(grammar, sentences) if args.decoder == "mbr" else [parse.parse_viterbi(grammar, s) for s in sentences]
    elif args.scores:
        trees = [parse.parse_mtd(t) for t in _aligned_scores(recs, args.scores)]
    elif args.baseline:
        rng = np.random.default_rng(args.seed)
        trees = [parse.parse_baseline(len(s), args.baseline, rng) for s in sentences]
    else:
        raise SystemExit("error: give one of --checkpoint, --scores, --baseline")
    ids = [r.id for r in recs]
    if args.format in ("jsonl", "both"):
        write_trees_jsonl(args.out, trees, ids)
    if args.format in ("brackets", "both"):
        path = args.out if args.format == "brackets" else os.path.splitext(args.out)[0] + ".txt"
        with open(path, "w", encoding="utf-8") as fh:
            for t, s in zip(trees, sentences):
                fh.write(t.to_brackets(s) + "\n")
    print(f"parsed {len(trees)} sentences")


def cmd_eval(args):
    from .corpusio import as_span_tree, read_any_trees, read_bracketed
    from .evaluate import SKIP, corpus_f1, label_recall, sentence_f1

    preds = [as_span_tree(t) for t in read_any_trees(args.pred)]
    gold = read_bracketed(args.gold)
    if len(preds) != len(gold):
        raise SystemExit(f"error: {len(preds)} predictions vs {len(gold)} gold trees")
    masks = _punct_masks(gold)
    f1 = [sentence_f1(p, g, m) for p, g, m in zip(preds, gold, masks)]
    recall, counts = label_recall(preds, gold, punct_masks=masks, return_counts=True)
    top = sorted(counts, key=lambda l: (-counts[l], l))[: args.labels]
    report = {
        "corpus_f1": corpus_f1(f1),
        "scored": sum(v is not SKIP for v in f1),
        "skipped": sum(v is SKIP for v in f1),
        "label_recall": {l: {"recall": recall[l], "count": counts[l]} for l in top},
        "sentence_f1": f1,
    }
    text = json.dumps(report, indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(json.dumps({k: v for k, v in report.items() if k != "sentence_f1"}, indent=2))


def cmd_correlate(args):
    from .corpusio import read_bracketed
    from .evaluate import correlation_study
    from .plotting import plot_correlation

    paths = []
    for p in args.checkpoints:
        paths += sorted(glob.glob(os.path.join(p, "ckpt_*.json"))) if os.path.isdir(p) else [p]
    recs = _sources(args.paraphrases)
    sentences = [list(r.normalized.normalized_tokens) for r in recs]
    scores = _aligned_scores(recs, args.scores)
    gold = read_bracketed(args.gold)
    rep = correlation_study(paths, sentences, scores, gold, _punct_masks(gold), args.window, args.stride)
    os.makedirs(args.out, exist_ok=True)
    rep.write_csv(os.path.join(args.out, "correlation.csv"))
    rep.write_json(os.path.join(args.out, "correlation.json"))
    plot_correlation(rep, os.path.join(args.out, "correlation.png"))
    print(f"sentence-level Spearman: SemInfo-F1 {rep.sentence_seminfo_f1}, LL-F1 {rep.sentence_ll_f1}")


def cmd_experiment(args):
    from .experiment import run_experiment

    seeds = [int(s) for s in args.seeds.split(",")]
    res = run_experiment(args.out, seeds, args.steps, data_seed=args.seed, train_cfg=_train_config(args), jobs=args.jobs)
    print(json.dumps(res.summary(), indent=2))


# ---------------------------------------------------------------------------


def _train_flags(p):
    g = p.add_argument_group("training config (overrides --config)")
    g.add_argument("--policy", choices=["treecrf-mbr", "pcfg-posterior"])
    g.add_argument("--samples-per-sentence", type=int)
    g.add_argument("--entropy-coef", type=float)
    g.add_argument("--entropy-placement", choices=["inside-advantage", "additive"])
    g.add_argument("--ll-weight", type=float)
    g.add_argument("--learning-rate", type=float)
    g.add_argument("--batch-size", type=int)
    g.add_argument("--max-steps", type=int)
    g.add_argument("--clip-norm", type=float)
    g.add_argument("--objective", choices=["seminfo", "ll"])
    g.add_argument("--num-nonterminals", type=int)
    g.add_argument("--checkpoint-every", type=int)
    g.add_argument("--eval-every", type=int)


def _common(defaults=True):
    # sub-parsers get suppressed defaults so flags given before the verb survive
    d = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=d(None), help="key = value file mirroring the training config")
    p.add_argument("--seed", type=int, default=d(0))
    p.add_argument("--jobs", type=int, default=d(1))
    p.add_argument("-v", "--verbose", action="store_true", default=d(False))
    return p


def build_parser():
    common = _common(False)
    ap = argparse.ArgumentParser(prog="seminfo", description=__doc__, parents=[_common()])
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus with gold trees and paraphrases")
    p.add_argument("--out", required=True)
    p.add_argument("--sentences", type=int, default=500)
    p.add_argument("--min-len", type=int, default=5)
    p.add_argument("--max-len", type=int, default=12)
    p.add_argument("--paraphrases", type=int, default=16)
    p.add_argument("--swap-prob", type=float, default=0.35)
    p.add_argument("--front-prob", type=float, default=0.3)
    p.add_argument("--identity", action="store_true", help="paraphrases equal their source")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("paraphrase", parents=[common], help="collect paraphrases from a chat-completion service")
    p.add_argument("--input", required=True, help="one raw sentence per line")
    p.add_argument("--out", required=True)
    p.add_argument("--endpoint", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--lang", default="English")
    p.add_argument("--templates", help="comma-separated template names")
    p.add_argument("--samples-per-prompt", type=int, default=1)
    p.add_argument("--retries", type=int, default=4)
    p.set_defaults(func=cmd_paraphrase)

    p = sub.add_parser("score", parents=[common], help="build the df index and per-span score tables")
    p.add_argument("--paraphrases", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--raw-tf", action="store_true", help="use raw instead of log-normalized tf")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("train", parents=[common], help="train a grammar")
    p.add_argument("--paraphrases", required=True)
    p.add_argument("--scores")
    p.add_argument("--gold", help="gold brackets for periodic F1 in the metrics log")
    p.add_argument("--out", required=True)
    p.add_argument("--resume", help="checkpoint to continue from")
    _train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("parse", parents=[common], help="decode trees")
    p.add_argument("--paraphrases", required=True, help="paraphrase file whose sources are parsed")
    p.add_argument("--checkpoint")
    p.add_argument("--decoder", choices=["mbr", "viterbi"], default="mbr")
    p.add_argument("--scores", help="decode maximum-SemInfo trees from these tables")
    p.add_argument("--baseline", choices=["left", "right", "random"])
    p.add_argument("--format", choices=["jsonl", "brackets", "both"], default="jsonl")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("eval", parents=[common], help="sentence-F1 and label recall")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--labels", type=int, default=6)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("correlate", parents=[common], help="correlation study over checkpoints")
    p.add_argument("--checkpoints", nargs="+", required=True, help="checkpoint files or run directories")
    p.add_argument("--paraphrases", required=True)
    p.add_argument("--scores", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--window", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("experiment", parents=[common], help="synthetic SemInfo vs LL study")
    p.add_argument("--out", required=True)
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--steps", type=int, default=1000)
    _train_flags(p)
    p.set_defaults(func=cmd_experiment)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

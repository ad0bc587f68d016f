"""Synthetic end-to-end study: SemInfo vs likelihood training on a gold grammar."""

import dataclasses
import json
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from . import evaluate as ev
from .corpusio import ParaphraseRecord, normalize_records, write_paraphrase_records
from .maxsub import score_corpus, write_scores
from .parse import parse_baseline, parse_mtd
from .synth import SynthConfig, gold_brackets, synth_corpus
from .textnorm import NormalizationOptions
from .train import TrainingConfig, train

log = logging.getLogger(__name__)


@dataclass
class SyntheticData:
    ids: List[str]
    sentences: List[List[str]]
    tables: list
    golds: list
    masks: List[List[bool]]


def prepare_synthetic(out_dir, synth_cfg: SynthConfig = SynthConfig(), seed=0, jobs=1) -> SyntheticData:
    """Sample the corpus, write paraphrase/gold/score files, return aligned data."""
    os.makedirs(out_dir, exist_ok=True)
    data = synth_corpus(synth_cfg, np.random.default_rng(seed))
    records = [ParaphraseRecord(s.id, s.raw, [" ".join(p) for p in s.paraphrases]) for s in data]
    write_paraphrase_records(os.path.join(out_dir, "paraphrases.jsonl"), records)
    with open(os.path.join(out_dir, "gold.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(gold_brackets(data)) + "\n")
    sets = normalize_records(records, NormalizationOptions())
    tables, _ = score_corpus(sets, jobs=jobs)
    write_scores(os.path.join(out_dir, "scores.jsonl"), tables)
    return SyntheticData(
        [s.id for s in data],
        [list(p.source.normalized_tokens) for p in sets],
        tables,
        [s.gold for s in data],
        [p.source.punct_mask for p in sets],
    )


@dataclass
class RunResult:
    name: str
    objective: str
    seed: int
    corpus_f1: float
    seconds: float
    checkpoint: str


@dataclass
class ExperimentResult:
    runs: List[RunResult]
    baselines: Dict[str, float]
    sentence_rho_seminfo: Optional[float]
    sentence_rho_ll: Optional[float]
    report: Optional[ev.CorrelationReport] = None

    def mean_f1(self, objective):
        return float(np.mean([r.corpus_f1 for r in self.runs if r.objective == objective]))

    def summary(self):
        return {
            "runs": [dataclasses.asdict(r) for r in self.runs],
            "baselines": self.baselines,
            "mean_f1": {o: self.mean_f1(o) for o in sorted({r.objective for r in self.runs})},
            "sentence_rho_seminfo_f1": self.sentence_rho_seminfo,
            "sentence_rho_ll_f1": self.sentence_rho_ll,
        }


def baseline_f1(data: SyntheticData) -> Dict[str, float]:
    out = {}
    for kind in ("left", "right"):
        out[kind] = ev.corpus_f1([ev.sentence_f1(parse_baseline(len(s), kind), g, m)
                                  for s, g, m in zip(data.sentences, data.golds, data.masks)])
    out["mtd"] = ev.corpus_f1([ev.sentence_f1(parse_mtd(t), g, m) for t, g, m in zip(data.tables, data.golds, data.masks)])
    return out


def run_experiment(out_dir, seeds=(0, 1, 2), steps=1000, synth_cfg: SynthConfig = SynthConfig(),
                   data_seed=0, train_cfg: TrainingConfig = None, jobs=1, plot=True) -> ExperimentResult:
    """Train SemInfo and LL-only grammars for each seed, evaluate, correlate.

    Evaluation is transductive: F1 is measured on the training sentences.
    """
    data = prepare_synthetic(os.path.join(out_dir, "data"), synth_cfg, data_seed, jobs)
    base = train_cfg or TrainingConfig()
    runs, evals = [], []
    for objective in ("seminfo", "ll"):
        for seed in seeds:
            cfg = base.replace(objective=objective, seed=seed, max_steps=steps)
            name = f"{objective}-seed{seed}"
            run_dir = os.path.join(out_dir, name)
            t0 = time.time()
            grammar = train(data.sentences, data.tables if objective == "seminfo" else None, cfg, run_dir)
            secs = time.time() - t0
            e = ev.evaluate_grammar(grammar, data.sentences, data.tables, data.golds, data.masks, name, steps)
            evals.append(e)
            runs.append(RunResult(name, objective, seed, e.corpus_f1, secs, os.path.join(run_dir, f"ckpt_{steps:06d}.json")))
            log.info("%s: F1 %.4f (%.0fs)", name, e.corpus_f1, secs)
    if len(evals) >= 3:
        report = ev.correlation_study(evals)
        rho_s, rho_l = report.sentence_seminfo_f1, report.sentence_ll_f1
    else:
        log.warning("only %d runs; skipping the correlation study", len(evals))
        report, rho_s, rho_l = None, None, None
    result = ExperimentResult(runs, baseline_f1(data), rho_s, rho_l, report)
    with open(os.path.join(out_dir, "results.json"), "w", encoding="utf-8") as fh:
        json.dump(result.summary(), fh, indent=2)
    if report is not None:
        report.write_csv(os.path.join(out_dir, "correlation.csv"))
    if plot:
        from .plotting import plot_experiment

        plot_experiment(result, os.path.join(out_dir, "f1.png"))
    return result

"""SemInfo-maximization training for the tabular PCFG.

Per sentence the ascended surrogate is

    ll_weight * log Z(x) + 1/K sum_k log P(t_k | x) * (R_k - Rbar + beta * H)

with ``H`` detached (the default ``inside-advantage`` placement) or moved out
of the bracket as ``+ beta * H`` (``additive``).  Under the ``treecrf-mbr``
policy P(t | x) is the TreeCRF whose potentials are the grammar's span
posteriors, so its parameter gradient flows through a reverse pass over the
inside chart (second order).  Under ``pcfg-posterior`` P(t | x) is the
grammar's own posterior over unlabeled trees.
"""

import dataclasses
import json
import logging
import math
import os
import typing
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import torch

from . import pcfg
from .pcfg import Grammar, inside_chart, log_rule_probs, pad_batch, posteriors_from_chart
from .treecrf import crf_entropy_batch, crf_inside, sample_batch, tree_masks
from .trees import ConstituentTree, enumerate_trees

log = logging.getLogger(__name__)

POLICIES = ("treecrf-mbr", "pcfg-posterior")
PLACEMENTS = ("inside-advantage", "additive")
OBJECTIVES = ("seminfo", "ll")
NEG = -1e5


@dataclass
class TrainingConfig:
    policy: str = "treecrf-mbr"
    samples_per_sentence: int = 8
    entropy_coef: float = 0.01
    entropy_placement: str = "inside-advantage"
    ll_weight: float = 1.0
    learning_rate: float = 0.05
    batch_size: int = 16
    max_steps: int = 1000
    seed: int = 0
    clip_norm: float = 5.0
    objective: str = "seminfo"
    num_nonterminals: int = 10
    init_scale: float = 0.1
    baseline_decay: float = 0.9
    checkpoint_every: int = 0
    eval_every: int = 0

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}; expected one of {POLICIES}")
        if self.entropy_placement not in PLACEMENTS:
            raise ValueError(f"unknown entropy placement {self.entropy_placement!r}")
        if self.objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.samples_per_sentence < 1:
            raise ValueError("samples_per_sentence must be >= 1")
        if self.entropy_coef < 0:
            raise ValueError("entropy_coef must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)


def _coerce(value: str, typ):
    if typ is bool:
        return value.strip().lower() in ("1", "true", "yes", "on")
    return typ(value.strip())


def load_config(path=None, overrides=None) -> TrainingConfig:
    """Read ``key = value`` lines (``#`` comments) then apply overrides."""
    hints = typing.get_type_hints(TrainingConfig)
    values = {}
    if path:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected 'key = value'")
                k, v = (s.strip() for s in line.split("=", 1))
                k = k.replace("-", "_")
                if k not in hints:
                    raise ValueError(f"{path}:{lineno}: unknown config key {k!r}")
                values[k] = _coerce(v, hints[k])
    for k, v in (overrides or {}).items():
        if v is None:
            continue
        k = k.replace("-", "_")
        if k not in hints:
            raise ValueError(f"unknown config key {k!r}")
        values[k] = _coerce(v, hints[k]) if isinstance(v, str) else v
    return TrainingConfig(**values)


@dataclass
class StepStats:
    step: int
    log_Z: float
    reward: float
    baseline: float
    entropy: float
    grad_norm: float

    def to_json(self):
        return dataclasses.asdict(self)


class NonFiniteGradient(FloatingPointError):
    pass


# ---------------------------------------------------------------------------
# rewards


def seminfo_reward(tree: ConstituentTree, scores) -> float:
    if tree.n != scores.n:
        raise ValueError(f"tree over {tree.n} tokens scored against a table over {scores.n}")
    return float(sum(scores.get(i, j) for i, j in tree.internal))


# ---------------------------------------------------------------------------
# optimizer


class Adam:
    """Bias-corrected adaptive moments; ``step`` ascends."""

    def __init__(self, size, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params, grad):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mhat = self.m / (1 - self.beta1 ** self.t)
        vhat = self.v / (1 - self.beta2 ** self.t)
        return params + self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def state_dict(self):
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps,
                "t": self.t, "m": self.m.tolist(), "v": self.v.tolist()}

    @classmethod
    def from_state(cls, state):
        opt = cls(len(state["m"]), state["lr"], state["beta1"], state["beta2"], state["eps"])
        opt.t = state["t"]
        opt.m = np.array(state["m"], dtype=np.float64)
        opt.v = np.array(state["v"], dtype=np.float64)
        return opt


# ---------------------------------------------------------------------------
# surrogate objectives


def _tree_bias(trees, lengths, N, reps):
    """Span biases restricting the inside pass to one tree per row."""
    rows = len(trees)
    bias = {w: torch.zeros(rows, N - w + 1, dtype=pcfg.DTYPE) for w in range(1, N + 1)}
    for r, tree in enumerate(trees):
        n = lengths[r // reps]
        allowed = set(tree.internal)
        for w in range(2, n + 1):
            for i in range(n - w + 1):
                if (i, i + w) not in allowed:
                    bias[w][r, i] = NEG
    return bias


def pcfg_tree_logprob(lb, ll, tok, lengths, trees_per_sentence, logZ):
    """log P(t | x) under the grammar posterior for K trees per sentence -> [B, K]."""
    reps = len(trees_per_sentence[0])
    flat = [t for ts in trees_per_sentence for t in ts]
    bias = _tree_bias(flat, lengths, tok.shape[1], reps)
    _, logZt = inside_chart(lb, ll, tok, lengths, span_bias=bias)
    return logZt.reshape(len(lengths), reps) - logZ[:, None]


def _policy_logprobs(cfg, lb, ll, tok, lengths, chart, logZ, rng, trees=None, k=None, want_entropy_grad=False):
    """Sample (or take given) trees and return (trees, logP [B, K], H [B] or None)."""
    N = tok.shape[1]
    if cfg.policy == "treecrf-mbr":
        phi = posteriors_from_chart(chart, logZ, create_graph=True, widths=range(2, N + 1)) if N >= 2 else {}
        cchart, logZc = crf_inside(phi, lengths)
        H, _, _ = crf_entropy_batch(phi, lengths, create_graph=want_entropy_grad)
        if trees is None:
            trees = sample_batch(cchart, lengths, rng, k)
        K = len(trees[0])
        logP = -logZc[:, None].expand(len(lengths), K)
        masks = [tree_masks(ts, N) for ts in trees]
        for w in range(2, N + 1):
            m = torch.stack([mk[w] for mk in masks])
            logP = logP + (m * phi[w][:, None, :]).sum(-1)
        return trees, logP, H
    if trees is None:
        lbn = lb.detach().numpy()
        trees = []
        for b, n in enumerate(lengths):
            beta = np.full((n + 1, n + 1, lb.shape[0]), -np.inf)
            for w in range(1, n + 1):
                arr = chart[w][b].detach().numpy()
                for i in range(n - w + 1):
                    beta[i, i + w] = arr[i]
            trees.append(pcfg._sample_labeled(lbn, beta, n, 0, rng, k))
    logP = pcfg_tree_logprob(lb, ll, tok, lengths, trees, logZ)
    return trees, logP, None


def batch_surrogate(b_logits, l_logits, grammar, batch, cfg, rng, baseline=None):
    """Monte-Carlo surrogate whose gradient is the training direction.

    ``batch`` holds ``(sentence, SpanScoreTable)`` pairs.  Returns
    ``(J, stats dict, new running baseline)``.
    """
    lb, ll = log_rule_probs(b_logits, l_logits)
    ids = [grammar.encode(s) for s, _ in batch]
    tok, lengths = pad_batch(ids)
    chart, logZ = inside_chart(lb, ll, tok, lengths)
    bad = [k for k, z in enumerate(logZ.detach().tolist()) if not math.isfinite(z)]
    if bad:
        raise _Unparsable(bad)
    J = cfg.ll_weight * logZ.mean()
    stats = {"log_Z": float(logZ.detach().mean()), "reward": 0.0, "baseline": 0.0, "entropy": 0.0}
    if cfg.objective == "ll":
        return J, stats, baseline

    K = cfg.samples_per_sentence
    beta = cfg.entropy_coef
    additive = cfg.entropy_placement == "additive"
    trees, logP, H = _policy_logprobs(cfg, lb, ll, tok, lengths, chart, logZ, rng, k=K,
                                      want_entropy_grad=additive and beta > 0)
    R = torch.tensor([[seminfo_reward(t, sc) for t in ts] for ts, (_, sc) in zip(trees, batch)], dtype=pcfg.DTYPE)
    if K > 1:
        Rbar = R.mean(dim=1, keepdim=True)
        new_baseline = baseline
    else:
        b0 = float(R.mean()) if baseline is None else baseline
        Rbar = torch.full_like(R, b0)
        new_baseline = cfg.baseline_decay * b0 + (1 - cfg.baseline_decay) * float(R.mean())
    adv = R - Rbar

    if H is None:
        # sample estimate of the posterior entropy; its gradient via the score function
        lp = logP.detach()
        H_est = -lp.mean(dim=1)
        if additive and beta > 0:
            centred = lp - lp.mean(dim=1, keepdim=True)
            J = J - beta * (logP * centred).mean(dim=1).mean()
        H_val = H_est
    else:
        H_val = H.detach()
        if additive and beta > 0:
            J = J + beta * H.mean()
    if not additive:
        adv = adv + beta * H_val[:, None]
    J = J + (logP * adv).mean(dim=1).mean()
    stats.update(reward=float(R.mean()), baseline=float(Rbar.mean()), entropy=float(H_val.mean()))
    return J, stats, new_baseline


def surrogate_gradient(grammar: Grammar, batch, cfg: TrainingConfig, rng, baseline=None):
    b, l = grammar.torch_params(requires_grad=True)
    J, stats, new_baseline = batch_surrogate(b, l, grammar, batch, cfg, rng, baseline)
    gb, gl = torch.autograd.grad(J, [b, l])
    grad = np.concatenate([gb.numpy().ravel(), gl.numpy().ravel()])
    return grad, stats, new_baseline


class _Unparsable(Exception):
    def __init__(self, rows):
        super().__init__(rows)
        self.rows = rows


def training_step(grammar: Grammar, batch, cfg: TrainingConfig, rng, optimizer: Adam = None, baseline=None, step=0):
    """One clipped ascent step.  Returns (grammar, StepStats, optimizer, baseline)."""
    if optimizer is None:
        optimizer = Adam(grammar.flat_params().size, cfg.learning_rate)
    try:
        grad, stats, baseline = surrogate_gradient(grammar, batch, cfg, rng, baseline)
    except _Unparsable as e:
        log.warning("step %d: skipping %d unparsable sentence(s)", step, len(e.rows))
        batch = [x for k, x in enumerate(batch) if k not in set(e.rows)]
        if not batch:
            raise NonFiniteGradient(f"step {step}: no parsable sentence in the batch") from None
        grad, stats, baseline = surrogate_gradient(grammar, batch, cfg, rng, baseline)
    if not np.all(np.isfinite(grad)):
        bad = int((~np.isfinite(grad)).sum())
        raise NonFiniteGradient(f"step {step}: {bad} non-finite gradient entries (mean log Z {stats['log_Z']:.4g})")
    norm = float(np.linalg.norm(grad))
    if cfg.clip_norm and norm > cfg.clip_norm:
        grad = grad * (cfg.clip_norm / norm)
    params = optimizer.step(grammar.flat_params(), grad)
    return grammar.with_flat_params(params), StepStats(step, grad_norm=norm, **stats), optimizer, baseline


# ---------------------------------------------------------------------------
# exact (enumerated) objective and gradient


def exact_policy_gradient(grammar: Grammar, sentence, scores, cfg: TrainingConfig, max_len=8):
    """Gradient of the surrogate with the tree expectation taken exactly.

    Returns ``(binary_logit_grad, lexical_logit_grad)``.
    """
    n = len(sentence)
    if n > max_len:
        raise ValueError(f"exact policy gradient enumerates trees; n={n} exceeds {max_len}")
    b, l = grammar.torch_params(requires_grad=True)
    J = _exact_surrogate(b, l, grammar, sentence, scores, cfg)
    gb, gl = torch.autograd.grad(J, [b, l])
    return gb.numpy(), gl.numpy()


def _exact_surrogate(b, l, grammar, sentence, scores, cfg):
    lb, ll = log_rule_probs(b, l)
    tok, lengths = pad_batch([grammar.encode(sentence)])
    chart, logZ = inside_chart(lb, ll, tok, lengths)
    J = cfg.ll_weight * logZ[0]
    if cfg.objective == "ll":
        return J
    trees = enumerate_trees(len(sentence))
    _, logP, _ = _policy_logprobs(cfg, lb, ll, tok, lengths, chart, logZ, None, trees=[trees])
    logP = logP[0]
    P = logP.detach().exp()
    R = torch.tensor([seminfo_reward(t, scores) for t in trees], dtype=pcfg.DTYPE)
    Rbar = (P * R).sum()
    H = -(logP.exp() * logP).sum()
    beta = cfg.entropy_coef
    if cfg.entropy_placement == "additive":
        return J + (P * logP * (R - Rbar)).sum() + beta * H
    return J + (P * logP * (R - Rbar + beta * H.detach())).sum()


def exact_objective(grammar: Grammar, sentence, scores, cfg: TrainingConfig) -> float:
    """ll_weight * log Z + E_t[R] (+ beta * H when additive), by enumeration."""
    with torch.no_grad():
        b, l = grammar.torch_params()
    lb, ll = log_rule_probs(b, l)
    tok, lengths = pad_batch([grammar.encode(sentence)])
    with torch.enable_grad():
        lbg = lb.detach().requires_grad_(True)
        chart, logZ = inside_chart(lbg, ll, tok, lengths)
        J = cfg.ll_weight * float(logZ[0].detach())
        if cfg.objective == "ll":
            return J
        trees = enumerate_trees(len(sentence))
        _, logP, _ = _policy_logprobs(cfg, lbg, ll, tok, lengths, chart, logZ, None, trees=[trees])
    logP = logP[0].detach().numpy()
    P = np.exp(logP)
    R = np.array([seminfo_reward(t, scores) for t in trees])
    J += float((P * R).sum())
    if cfg.entropy_placement == "additive":
        J += cfg.entropy_coef * float(-(P * logP).sum())
    return J


def exact_policy_entropy(grammar, sentence, cfg):
    """Entropy of the policy's tree distribution by enumeration."""
    tmp = cfg.replace(objective="seminfo")
    lb, ll = log_rule_probs(*grammar.torch_params())
    tok, lengths = pad_batch([grammar.encode(sentence)])
    lbg = lb.detach().requires_grad_(True)
    chart, logZ = inside_chart(lbg, ll, tok, lengths)
    trees = enumerate_trees(len(sentence))
    _, logP, _ = _policy_logprobs(tmp, lbg, ll, tok, lengths, chart, logZ, None, trees=[trees])
    lp = logP[0].detach().numpy()
    return float(-(np.exp(lp) * lp).sum())


# ---------------------------------------------------------------------------
# training loop


class _EpochSampler:
    def __init__(self, size, rng):
        self.size, self.rng = size, rng
        self.order, self.pos = [], 0

    def next(self, k):
        out = []
        while len(out) < k:
            if self.pos >= len(self.order):
                self.order = self.rng.permutation(self.size).tolist()
                self.pos = 0
            take = min(k - len(out), len(self.order) - self.pos)
            out += self.order[self.pos:self.pos + take]
            self.pos += take
        return out

    def state(self):
        return {"order": self.order, "pos": self.pos}

    def load(self, st):
        self.order, self.pos = list(st["order"]), st["pos"]


def _rng_state(rng):
    return rng.bit_generator.state


def _set_rng(rng, state):
    rng.bit_generator.state = state
    return rng


def train(sentences: Sequence[Sequence[str]], scores, cfg: TrainingConfig, out_dir, gold=None,
          resume=None, evaluate_fn=None):
    """Run ``cfg.max_steps`` ascent steps, writing checkpoints and a metrics log.

    ``scores`` aligns with ``sentences`` (SpanScoreTable per sentence; may be
    None for the LL objective).  ``gold`` (GoldTree per sentence) enables a
    corpus F1 column every ``eval_every`` steps.  Returns the final grammar.
    """
    os.makedirs(out_dir, exist_ok=True)
    torch.set_num_threads(1)
    if scores is None:
        scores = [None] * len(sentences)
    if len(scores) != len(sentences):
        raise ValueError("scores and sentences differ in length")
    init_rng = np.random.default_rng(cfg.seed)
    data_rng = np.random.default_rng([cfg.seed, 1])
    policy_rng = np.random.default_rng([cfg.seed, 2])
    sampler = _EpochSampler(len(sentences), data_rng)
    words = sorted({w for s in sentences for w in s})

    metrics_path = os.path.join(out_dir, "metrics.jsonl")
    if resume:
        grammar, obj = pcfg.load_checkpoint(resume)
        optimizer = Adam.from_state(obj["optimizer"])
        _set_rng(data_rng, obj["rng_state"]["data"])
        _set_rng(policy_rng, obj["rng_state"]["policy"])
        sampler.load(obj["extra"]["sampler"])
        baseline = obj["extra"].get("baseline")
        start = obj["step"]
        _truncate_metrics(metrics_path, start)
    else:
        grammar = Grammar.random(cfg.num_nonterminals, words, init_rng, cfg.init_scale)
        optimizer = Adam(grammar.flat_params().size, cfg.learning_rate)
        baseline = None
        start = 0
        open(metrics_path, "w").close()

    def checkpoint(step):
        path = os.path.join(out_dir, f"ckpt_{step:06d}.json")
        pcfg.save_checkpoint(
            path, grammar, step, optimizer.state_dict(),
            {"data": _rng_state(data_rng), "policy": _rng_state(policy_rng)},
            {"sampler": sampler.state(), "baseline": baseline, "config": dataclasses.asdict(cfg)},
        )
        return path

    if start == 0:
        checkpoint(0)
    with open(metrics_path, "a", encoding="utf-8") as mfh:
        for step in range(start + 1, cfg.max_steps + 1):
            idx = sampler.next(min(cfg.batch_size, len(sentences)))
            batch = [(sentences[i], scores[i]) for i in idx]
            try:
                grammar, stats, optimizer, baseline = training_step(grammar, batch, cfg, policy_rng, optimizer, baseline, step)
            except NonFiniteGradient as e:
                log.warning("aborting step: %s", e)
                continue
            rec = stats.to_json()
            if gold is not None and evaluate_fn is not None and cfg.eval_every and step % cfg.eval_every == 0:
                rec["dev_f1"] = evaluate_fn(grammar)
            mfh.write(json.dumps(rec) + "\n")
            if cfg.checkpoint_every and step % cfg.checkpoint_every == 0 and step != cfg.max_steps:
                checkpoint(step)
    if cfg.max_steps > start:
        checkpoint(cfg.max_steps)
    return grammar


def _truncate_metrics(path, step):
    if not os.path.exists(path):
        return
    with open(path, encoding="utf-8") as fh:
        keep = [l for l in fh if l.strip() and json.loads(l)["step"] <= step]
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(keep)

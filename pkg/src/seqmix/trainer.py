"""Training loop, evaluation metrics, and the multi-method experiment runner."""

from __future__ import annotations

import json
import math
import os
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import numkit as nk
from .data import Dataset, EOS_ID, PAD_ID, Vocabulary, build_vocab
from .errors import ParameterError, TrainingAbort
from .mixer import SequencePair, augment_batch, encode_pair
from .model import (
    ModelParams,
    batch_loss,
    greedy_decode_batch,
    init_params,
    pack_batch,
    param_leaves,
)
from .sampling import Method, MethodConfig, RngStream

METHOD_ORDER = (
    Method.BASELINE,
    Method.WORDDROP,
    Method.SWITCHOUT,
    Method.SEQMIX_HARD,
    Method.SEQMIX_SOFT,
)


@dataclass
class TrainConfig:
    method: MethodConfig
    seed: int
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 30
    clip_norm: float = 5.0
    hidden_size: int = 64
    embed_size: int = 32
    eval_every: int = 1
    val_fraction: float = 0.1
    max_decode_len: int = 64
    expansion_factor: int = 1
    attention: bool = False

    def __post_init__(self) -> None:
        if self.seed is None:
            raise ParameterError("seed is mandatory")
        for name in ("lr", "batch_size", "epochs", "clip_norm", "hidden_size", "embed_size",
                     "eval_every", "expansion_factor", "max_decode_len"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be positive")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ParameterError("val_fraction must be in [0, 1)")


@dataclass
class MetricsRecord:
    epoch: int
    loss: float
    exact_match: float | None
    bleu: float | None
    seconds: float
    method: str
    seed: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "epoch": self.epoch,
                "loss": self.loss,
                "exact_match": self.exact_match,
                "bleu": self.bleu,
                "seconds": self.seconds,
                "method": self.method,
                "seed": self.seed,
            }
        )


class Adam:
    def __init__(self, params: ModelParams, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(arr) for name, arr in params.items()}
        self.v = {name: np.zeros_like(arr) for name, arr in params.items()}

    def step(self, params: ModelParams, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, arr in params.items():
            g = grads[name]
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            m_hat = self.m[name] / (1 - b1 ** self.t)
            v_hat = self.v[name] / (1 - b2 ** self.t)
            arr -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> tuple[dict[str, np.ndarray], float]:
    """Scale all gradients so the global L2 norm is at most max_norm."""
    norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if norm > max_norm:
        factor = max_norm / norm
        grads = {name: g * factor for name, g in grads.items()}
    return grads, norm


def encode_dataset(data: Dataset, vocab: Vocabulary) -> list[SequencePair]:
    return [encode_pair(src, tgt, vocab, i) for i, (src, tgt) in enumerate(data)]


def reference_tokens(pair: SequencePair) -> list[int]:
    """Target ids up to (excluding) EOS, with BOS and PAD stripped."""
    out = []
    for tok in pair.target[1:]:
        if tok == EOS_ID:
            break
        if tok != PAD_ID:
            out.append(tok)
    return out


def evaluate_exact_match(params: ModelParams, pairs: list[SequencePair], max_len: int = 64) -> float:
    """Fraction of greedy decodes equal to the reference token-for-token."""
    if not pairs:
        return 0.0
    decoded = greedy_decode_batch([p.source for p in pairs], params, max_len)
    hits = sum(1 for p, hyp in zip(pairs, decoded) if hyp == reference_tokens(p))
    return hits / len(pairs)


def _ngram_counts(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def evaluate_bleu(hypotheses: list[list], references: list[list]) -> float:
    """Corpus BLEU-4: modified n-gram precisions (add-one smoothing on zero
    counts for n >= 2), times brevity penalty min(1, e^{1 - r/c})."""
    if not hypotheses:
        raise ParameterError("empty hypothesis list")
    if len(hypotheses) != len(references):
        raise ParameterError("hypothesis / reference counts differ")
    if any(not r for r in references):
        raise ParameterError("references must be nonempty")
    log_p = 0.0
    for n in range(1, 5):
        match = 0
        total = 0
        for hyp, ref in zip(hypotheses, references):
            h_counts = _ngram_counts(hyp, n)
            r_counts = _ngram_counts(ref, n)
            match += sum(min(c, r_counts[g]) for g, c in h_counts.items())
            total += max(len(hyp) - n + 1, 0)
        if n == 1:
            if match == 0:
                return 0.0
            p = match / total
        elif match == 0:
            p = (match + 1) / (total + 1)
        else:
            p = match / total
        log_p += 0.25 * math.log(p)
    c = sum(len(h) for h in hypotheses)
    r = sum(len(ref) for ref in references)
    bp = min(1.0, math.exp(1.0 - r / c)) if c > 0 else 0.0
    return bp * math.exp(log_p)


def split_validation(pairs: list[SequencePair], fraction: float, rng: RngStream):
    """Seed-deterministic held-out slice, preserving original order."""
    n = len(pairs)
    n_val = int(round(n * fraction))
    perm = rng.gen.permutation(n)
    val_idx = set(int(i) for i in perm[:n_val])
    train = [p for i, p in enumerate(pairs) if i not in val_idx]
    val = [p for i, p in enumerate(pairs) if i in val_idx]
    return train, val


def train(
    data: Dataset,
    cfg: TrainConfig,
    vocab: Vocabulary | None = None,
    params: ModelParams | None = None,
) -> tuple[ModelParams, Vocabulary, list[MetricsRecord]]:
    """Train one model with the configured augmentation method.

    All randomness derives from cfg.seed through named substreams (val split,
    init, shuffling, augmentation), so changing the method never perturbs
    initialization or data order.
    """
    vocab = vocab or build_vocab(data)
    pairs = encode_dataset(data, vocab)
    root = RngStream(cfg.seed)
    train_pairs, val_pairs = split_validation(pairs, cfg.val_fraction, root.child("val"))
    if params is None:
        params = init_params(
            len(vocab), cfg.hidden_size, cfg.embed_size, root.child("init"),
            attention=cfg.attention,
        )
    opt = Adam(params, cfg.lr)
    shuffle = root.child("shuffle")
    aug = root.child("augment")
    v = len(vocab)
    records: list[MetricsRecord] = []
    start = time.perf_counter()
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle.gen.permutation(len(train_pairs))
        loss_sum = 0.0
        weight_sum = 0.0
        for b0 in range(0, len(order), cfg.batch_size):
            batch = [train_pairs[int(i)] for i in order[b0:b0 + cfg.batch_size]]
            mixed = []
            for _ in range(cfg.expansion_factor):
                mixed.extend(augment_batch(cfg.method, batch, v, aug))
            src, tgt, w = pack_batch(mixed, v)
            tape = nk.Tape()
            leaves = param_leaves(tape, params)
            loss, wt = batch_loss(tape, leaves, src, tgt, w)
            loss_value = float(loss.value)
            if not np.isfinite(loss_value):
                raise TrainingAbort(
                    f"non-finite loss {loss_value} at epoch {epoch}, "
                    f"batch {b0 // cfg.batch_size}, step {opt.t + 1}"
                )
            grad_map = nk.backward(loss)
            grads = {
                name: grad_map.get(leaves[name].node_id, np.zeros_like(arr))
                for name, arr in params.items()
            }
            grads, _ = clip_gradients(grads, cfg.clip_norm)
            opt.step(params, grads)
            loss_sum += loss_value * wt
            weight_sum += wt
        exact = None
        if val_pairs and (epoch % cfg.eval_every == 0 or epoch == cfg.epochs):
            exact = evaluate_exact_match(params, val_pairs, cfg.max_decode_len)
        records.append(
            MetricsRecord(
                epoch=epoch,
                loss=loss_sum / max(weight_sum, 1.0),
                exact_match=exact,
                bleu=None,
                seconds=time.perf_counter() - start,
                method=cfg.method.method.value,
                seed=cfg.seed,
            )
        )
    return params, vocab, records


# ---------------------------------------------------------------------------
# experiment runner (Table-2-style comparison)
# ---------------------------------------------------------------------------


@dataclass
class CellResult:
    method: Method
    seed: int
    test_exact: float | None
    records: list[MetricsRecord] = field(default_factory=list)
    error: str | None = None


@dataclass
class ExperimentReport:
    cells: list[CellResult]
    methods: tuple[Method, ...]

    def method_scores(self, method: Method) -> list[float]:
        return sorted(
            c.test_exact for c in self.cells if c.method is method and c.error is None
        )

    def rows(self) -> list[dict]:
        out = []
        for method in self.methods:
            scores = self.method_scores(method)
            n_failed = sum(1 for c in self.cells if c.method is method and c.error is not None)
            if scores:
                out.append(
                    {
                        "method": method.display_name,
                        "median": float(np.median(scores)),
                        "min": scores[0],
                        "max": scores[-1],
                        "cells": len(scores),
                        "failed": n_failed,
                    }
                )
            else:
                out.append(
                    {"method": method.display_name, "median": None, "min": None,
                     "max": None, "cells": 0, "failed": n_failed}
                )
        return out

    def render_tsv(self) -> str:
        lines = ["method\tmedian\tmin\tmax\tcells\tfailed"]
        for row in self.rows():
            fmt = lambda x: "-" if x is None else f"{x:.4f}"
            lines.append(
                f"{row['method']}\t{fmt(row['median'])}\t{fmt(row['min'])}"
                f"\t{fmt(row['max'])}\t{row['cells']}\t{row['failed']}"
            )
        return "\n".join(lines) + "\n"

    def render_text(self) -> str:
        lines = [f"{'method':<16}{'median':>8}{'min':>8}{'max':>8}{'cells':>7}{'failed':>8}"]
        for row in self.rows():
            fmt = lambda x: "-" if x is None else f"{x:.1%}"
            lines.append(
                f"{row['method']:<16}{fmt(row['median']):>8}{fmt(row['min']):>8}"
                f"{fmt(row['max']):>8}{row['cells']:>7}{row['failed']:>8}"
            )
        return "\n".join(lines) + "\n"


def _run_cell(args) -> CellResult:
    train_data, test_data, cfg = args
    try:
        params, vocab, records = train(train_data, cfg)
        test_pairs = encode_dataset(test_data, vocab)
        score = evaluate_exact_match(params, test_pairs, cfg.max_decode_len)
        return CellResult(cfg.method.method, cfg.seed, score, records)
    except Exception as exc:  # cell failures must not sink the other cells
        return CellResult(cfg.method.method, cfg.seed, None, [], error=f"{type(exc).__name__}: {exc}")


def max_workers_from_env(default: int | None = None) -> int:
    env = os.environ.get("SEQMIX_THREADS")
    if env:
        return max(1, int(env))
    return default or os.cpu_count() or 1


def run_experiment(
    train_data: Dataset,
    test_data: Dataset,
    base_cfg: TrainConfig,
    methods: tuple[Method, ...] = METHOD_ORDER,
    seeds: tuple[int, ...] = (0, 1, 2),
    max_workers: int | None = None,
) -> ExperimentReport:
    """Train every (method, seed) cell on the shared split; aggregate
    median/min/max test exact-match per method."""
    jobs = []
    for method in methods:
        m_cfg = replace(base_cfg.method, method=method)
        for seed in seeds:
            jobs.append((train_data, test_data, replace(base_cfg, method=m_cfg, seed=seed)))
    workers = max_workers_from_env(max_workers) if max_workers is None else max_workers
    workers = min(workers, len(jobs))
    if workers <= 1:
        cells = [_run_cell(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_run_cell, jobs))
    return ExperimentReport(cells=cells, methods=tuple(methods))

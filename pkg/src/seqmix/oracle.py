"""Sandwich checks between the exact log marginal over masks and the
sampled-mask training objective, on enumerable tiny instances."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import BOS_ID, EOS_ID
from .errors import ContractError
from .mixer import SequencePair, align_lengths
from .model import (
    ModelParams,
    enumerate_mask_logps,
    init_params,
    log_marginal_bruteforce,
    mc_expected_logprob,
    sequence_logprob,
    _mask_log_weights,
)
from .sampling import RngStream

ORACLE_BOUND = 12  # max s + t per trial


@dataclass
class OracleTrial:
    lam: float
    log_marginal: float
    expected_logprob: float
    mc_estimate: float
    mc_stderr: float
    jensen_holds: bool
    mc_within_3se: bool


def _random_tiny_pair(vocab_size: int, max_src: int, max_tgt: int, rng: RngStream) -> SequencePair:
    s = int(rng.gen.integers(1, max_src + 1))
    t = int(rng.gen.integers(1, max_tgt + 1))
    lo = EOS_ID + 1
    src = [int(x) for x in rng.gen.integers(lo, vocab_size, s)]
    body = [int(x) for x in rng.gen.integers(lo, vocab_size, t)]
    return SequencePair(source=src, target=[BOS_ID] + body + [EOS_ID])


def run_oracle_trial(
    a: SequencePair,
    b: SequencePair,
    lam: float,
    params: ModelParams,
    mc_samples: int,
    rng: RngStream,
) -> OracleTrial:
    if a.s + a.t > ORACLE_BOUND:
        raise ContractError(f"trial size {a.s + a.t} exceeds oracle bound {ORACLE_BOUND}")
    logps = enumerate_mask_logps(a, b, params)
    n = a.s + a.t
    lw = _mask_log_weights(n, lam)
    vals = lw + logps
    finite = vals[np.isfinite(vals)]
    m = finite.max()
    log_marginal = float(m + np.log(np.exp(finite - m).sum()))
    expected = float((np.exp(lw) * logps).sum())
    mc_mean, mc_se = mc_expected_logprob(a, b, lam, params, mc_samples, rng, logps=logps)
    return OracleTrial(
        lam=lam,
        log_marginal=log_marginal,
        expected_logprob=expected,
        mc_estimate=mc_mean,
        mc_stderr=mc_se,
        jensen_holds=expected <= log_marginal + 1e-12,
        mc_within_3se=abs(mc_mean - expected) <= 3.0 * max(mc_se, 1e-300),
    )


@dataclass
class OracleReport:
    trials: list[OracleTrial]
    endpoint_gap: float  # worst |log_marginal - single-parent logprob| at lam in {0,1}

    @property
    def jensen_count(self) -> int:
        return sum(t.jensen_holds for t in self.trials)

    @property
    def mc_count(self) -> int:
        return sum(t.mc_within_3se for t in self.trials)

    def passed(self) -> bool:
        n = len(self.trials)
        return (
            self.jensen_count == n
            and self.mc_count >= int(np.ceil(0.99 * n))
            and self.endpoint_gap <= 1e-9
        )


def run_oracle_check(
    n_trials: int = 100,
    mc_samples: int = 10_000,
    seed: int = 0,
    vocab_size: int = 6,
    hidden_size: int = 4,
    embed_size: int = 3,
    max_side: int = 3,
) -> OracleReport:
    """N seeded tiny instances: Jensen sandwich, MC convergence, endpoints."""
    root = RngStream(seed, ("oracle",))
    trials = []
    endpoint_gap = 0.0
    for k in range(n_trials):
        rng = root.child(k)
        params = init_params(vocab_size, hidden_size, embed_size, rng.child("init"))
        a = _random_tiny_pair(vocab_size, max_side, max_side, rng.child("a"))
        b = _random_tiny_pair(vocab_size, max_side, max_side, rng.child("b"))
        a, b = align_lengths(a, b)
        lam = float(rng.child("lam").gen.uniform(0.02, 0.98))
        trials.append(run_oracle_trial(a, b, lam, params, mc_samples, rng.child("mc")))
        for lam_end, parent in ((1.0, a), (0.0, b)):
            gap = abs(
                log_marginal_bruteforce(a, b, lam_end, params)
                - sequence_logprob(parent, params)
            )
            endpoint_gap = max(endpoint_gap, gap)
    return OracleReport(trials=trials, endpoint_gap=endpoint_gap)

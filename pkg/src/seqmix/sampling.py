"""Stochastic ingredients of the augmentation family.

Each method is described by a mixing-weight prior, a mask distribution, and a
partner distribution; this module owns the first two (the partner draw lives
in :mod:`seqmix.mixer`). All randomness flows through :class:`RngStream`, a
splittable counter-based generator, so any sampling path can be replayed
exactly from (seed, stream path).
"""

from __future__ import annotations

import enum
import hashlib
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

# tuned range reported for the Beta shape; outside it we warn, not fail
ALPHA_TUNED_RANGE = (0.1, 1.5)


class Method(str, enum.Enum):
    BASELINE = "baseline"
    WORDDROP = "worddrop"
    SWITCHOUT = "switchout"
    SEQMIX_HARD = "seqmix-hard"
    SEQMIX_SOFT = "seqmix"

    @property
    def display_name(self) -> str:
        return {
            Method.BASELINE: "Baseline",
            Method.WORDDROP: "WordDrop",
            Method.SWITCHOUT: "SwitchOut",
            Method.SEQMIX_HARD: "SeqMix (Hard)",
            Method.SEQMIX_SOFT: "SeqMix",
        }[self]


@dataclass
class MethodConfig:
    """Augmentation method plus the hyperparameters that method actually reads.

    Parameters irrelevant to the selected method are never read or validated.
    ``lambda_override`` pins the mixing weight to a constant (ablation /
    equivalence-testing hook).
    """

    method: Method = Method.SEQMIX_SOFT
    alpha: float = 1.0
    eta: float = 1.0
    rho: float = 0.1
    p_mix: float = 1.0
    worddrop_source_only: bool = False
    lambda_override: float | None = None

    def __post_init__(self) -> None:
        self.method = Method(self.method)
        if not 0.0 <= self.p_mix <= 1.0:
            raise ParameterError(f"p_mix must be in [0,1], got {self.p_mix}")
        if self.method in (Method.SEQMIX_HARD, Method.SEQMIX_SOFT):
            if self.alpha <= 0:
                raise ParameterError(f"alpha must be > 0, got {self.alpha}")
            lo, hi = ALPHA_TUNED_RANGE
            if not lo <= self.alpha <= hi:
                warnings.warn(
                    f"alpha={self.alpha} is outside the tuned range [{lo}, {hi}]",
                    stacklevel=2,
                )
        elif self.method is Method.SWITCHOUT:
            if self.eta <= 0:
                raise ParameterError(f"eta must be > 0, got {self.eta}")
        elif self.method is Method.WORDDROP:
            if not 0.0 <= self.rho <= 1.0:
                raise ParameterError(f"rho must be in [0,1], got {self.rho}")
        if self.lambda_override is not None and not 0.0 <= self.lambda_override <= 1.0:
            raise ParameterError(f"lambda_override must be in [0,1], got {self.lambda_override}")


class RngStream:
    """Deterministic splittable random stream (Philox counter generator).

    The generator key is derived from (seed, path) by hashing, so sibling
    streams are statistically independent and every stream is reproducible
    from its name alone. Same seed and path give the same draw sequence on
    every platform.
    """

    def __init__(self, seed: int, path: tuple[str, ...] = ()):
        self.seed = int(seed)
        self.path = tuple(str(p) for p in path)
        digest = hashlib.sha256(repr((self.seed, self.path)).encode("utf-8")).digest()
        key = int.from_bytes(digest[:16], "little")
        self.gen = np.random.Generator(np.random.Philox(key=key))

    def child(self, name) -> "RngStream":
        return RngStream(self.seed, self.path + (str(name),))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, path={self.path})"


def sample_lambda_beta(alpha: float, rng: RngStream) -> float:
    """One draw of the mixing weight from Beta(alpha, alpha) via two Gammas."""
    if alpha <= 0:
        raise ParameterError(f"alpha must be > 0, got {alpha}")
    g1 = rng.gen.standard_gamma(alpha)
    g2 = rng.gen.standard_gamma(alpha)
    return float(g1 / (g1 + g2))


def sample_switchout_rate(s: int, eta: float, rng: RngStream) -> float:
    """Draw a swap count k in {0..s} with weight e^{-k/eta}; return k/s."""
    if s < 1:
        raise ParameterError(f"sequence length must be >= 1, got {s}")
    if eta <= 0:
        raise ParameterError(f"eta must be > 0, got {eta}")
    k = np.arange(s + 1)
    w = np.exp(-k / eta)
    p = w / w.sum()
    lam = int(rng.gen.choice(s + 1, p=p))
    return lam / s


def switchout_pmf(s: int, eta: float) -> np.ndarray:
    """Normalized swap-count distribution over {0..s} (for audits)."""
    if s < 1:
        raise ParameterError(f"sequence length must be >= 1, got {s}")
    if eta <= 0:
        raise ParameterError(f"eta must be > 0, got {eta}")
    w = np.exp(-np.arange(s + 1) / eta)
    return w / w.sum()


def sample_mask(lambda_keep: float, n: int, rng: RngStream) -> np.ndarray:
    """i.i.d. Bernoulli(lambda_keep) keep-mask of length n (1 = keep original)."""
    if not 0.0 <= lambda_keep <= 1.0:
        raise ParameterError(f"lambda_keep must be in [0,1], got {lambda_keep}")
    if n < 0:
        raise ParameterError(f"mask length must be >= 0, got {n}")
    return (rng.gen.random(n) < lambda_keep).astype(np.int64)


def expected_mask(lambda_keep: float, n: int) -> np.ndarray:
    """The relaxed mask: every entry equals the keep probability."""
    if not 0.0 <= lambda_keep <= 1.0:
        raise ParameterError(f"lambda_keep must be in [0,1], got {lambda_keep}")
    return np.full(n, float(lambda_keep))

"""Building augmented examples: partner selection, length alignment, hard
token swapping, and soft convex mixing of one-hot sequence rows.

Targets carry per-position loss weights alongside the mixed rows: a position
where both parents have a real token weighs 1, a position padded in one
parent weighs that parent's mixing share, and a both-PAD position weighs 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import BOS_ID, EOS_ID, PAD_ID, Vocabulary
from .errors import ContractError, ParameterError
from .sampling import (
    Method,
    MethodConfig,
    RngStream,
    sample_lambda_beta,
    sample_mask,
    sample_switchout_rate,
)


@dataclass
class SequencePair:
    """Token-id source/target pair; target is BOS-prefixed and EOS-terminated."""

    source: list[int]
    target: list[int]
    pair_id: int = -1

    @property
    def s(self) -> int:
        return len(self.source)

    @property
    def t(self) -> int:
        return len(self.target)


def encode_pair(src_tokens, tgt_tokens, vocab: Vocabulary, pair_id: int = -1) -> SequencePair:
    return SequencePair(
        source=vocab.encode(src_tokens),
        target=[BOS_ID] + vocab.encode(tgt_tokens) + [EOS_ID],
        pair_id=pair_id,
    )


def one_hot(ids, vocab_size: int) -> np.ndarray:
    rows = np.zeros((len(ids), vocab_size))
    rows[np.arange(len(ids)), list(ids)] = 1.0
    return rows


@dataclass
class SoftSequence:
    """Per-position distributions over the vocabulary (rows on the simplex,
    except WordDrop's dropped rows, which are all-zero)."""

    rows: np.ndarray  # (L, V)

    @property
    def length(self) -> int:
        return self.rows.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.rows.shape[1]


@dataclass
class MixedExample:
    """One augmented training instance with full provenance."""

    soft_source: SoftSequence
    soft_target: SoftSequence
    lam: float | None
    mask_source: np.ndarray | None
    mask_target: np.ndarray | None
    parents: tuple[int, int]
    method: Method
    target_weights: np.ndarray = field(default=None)  # (t,), loss weight per target row


def align_lengths(a: SequencePair, b: SequencePair, pad_id: int = PAD_ID) -> tuple[SequencePair, SequencePair]:
    """Right-pad both pairs so source and target lengths match (never truncate)."""
    s = max(a.s, b.s)
    t = max(a.t, b.t)

    def padded(p: SequencePair) -> SequencePair:
        return SequencePair(
            source=p.source + [pad_id] * (s - p.s),
            target=p.target + [pad_id] * (t - p.t),
            pair_id=p.pair_id,
        )

    return padded(a), padded(b)


def _target_weights_soft(a: SequencePair, b: SequencePair, lam: float) -> np.ndarray:
    wa = np.array([1.0 if tok != PAD_ID else 0.0 for tok in a.target])
    wb = np.array([1.0 if tok != PAD_ID else 0.0 for tok in b.target])
    return np.where(wa * wb > 0, 1.0, lam * wa + (1.0 - lam) * wb)


def mix_soft(a: SequencePair, b: SequencePair, lam: float, vocab_size: int) -> MixedExample:
    """Convex combination of the two parents' one-hot rows with weight lam on a."""
    if not 0.0 <= lam <= 1.0:
        raise ParameterError(f"lambda must be in [0,1], got {lam}")
    if a.s != b.s or a.t != b.t:
        raise ContractError(f"mix_soft: unaligned lengths ({a.s},{a.t}) vs ({b.s},{b.t})")
    src = lam * one_hot(a.source, vocab_size) + (1.0 - lam) * one_hot(b.source, vocab_size)
    tgt = lam * one_hot(a.target, vocab_size) + (1.0 - lam) * one_hot(b.target, vocab_size)
    return MixedExample(
        soft_source=SoftSequence(src),
        soft_target=SoftSequence(tgt),
        lam=lam,
        mask_source=None,
        mask_target=None,
        parents=(a.pair_id, b.pair_id),
        method=Method.SEQMIX_SOFT,
        target_weights=_target_weights_soft(a, b, lam),
    )


def mix_hard(
    a: SequencePair,
    b: SequencePair,
    mask_src: np.ndarray,
    mask_tgt: np.ndarray,
    vocab_size: int,
    method: Method = Method.SEQMIX_HARD,
    lam: float | None = None,
    zero_partner: bool = False,
) -> MixedExample:
    """Per-position parent choice: mask 1 takes a's token, mask 0 takes b's.

    With ``zero_partner`` (WordDrop), mask-0 rows become all-zero vectors
    instead of b's one-hots.
    """
    if a.s != b.s or a.t != b.t:
        raise ContractError(f"mix_hard: unaligned lengths ({a.s},{a.t}) vs ({b.s},{b.t})")
    if len(mask_src) != a.s or len(mask_tgt) != a.t:
        raise ContractError(
            f"mix_hard: mask lengths ({len(mask_src)},{len(mask_tgt)}) vs ({a.s},{a.t})"
        )
    mask_src = np.asarray(mask_src)
    mask_tgt = np.asarray(mask_tgt)
    src_tokens = np.where(mask_src == 1, a.source, b.source)
    tgt_tokens = np.where(mask_tgt == 1, a.target, b.target)
    src = one_hot(src_tokens, vocab_size)
    tgt = one_hot(tgt_tokens, vocab_size)
    if zero_partner:
        src[mask_src == 0] = 0.0
        tgt[mask_tgt == 0] = 0.0
        weights = np.array([1.0 if tok != PAD_ID else 0.0 for tok in a.target])
    else:
        weights = np.array([1.0 if tok != PAD_ID else 0.0 for tok in tgt_tokens])
    return MixedExample(
        soft_source=SoftSequence(src),
        soft_target=SoftSequence(tgt),
        lam=lam,
        mask_source=mask_src,
        mask_target=mask_tgt,
        parents=(a.pair_id, b.pair_id),
        method=method,
        target_weights=weights,
    )


def passthrough(a: SequencePair, vocab_size: int, method: Method = Method.BASELINE) -> MixedExample:
    """Unaugmented example as one-hot rows (the p_mix gate / baseline path)."""
    weights = np.array([1.0 if tok != PAD_ID else 0.0 for tok in a.target])
    return MixedExample(
        soft_source=SoftSequence(one_hot(a.source, vocab_size)),
        soft_target=SoftSequence(one_hot(a.target, vocab_size)),
        lam=None,
        mask_source=None,
        mask_target=None,
        parents=(a.pair_id, a.pair_id),
        method=method,
        target_weights=weights,
    )


def _derangement(n: int, rng: RngStream) -> np.ndarray:
    perm = rng.gen.permutation(n)
    if n == 1:
        return perm
    for i in range(n):
        if perm[i] == i:
            j = (i + 1) % n
            perm[i], perm[j] = perm[j], perm[i]
    return perm


def _random_token_pair(like: SequencePair, vocab_size: int, rng: RngStream) -> SequencePair:
    """Same-shape pair of uniform tokens from the non-reserved vocabulary."""
    lo, hi = EOS_ID + 1, vocab_size
    if hi <= lo:
        raise ParameterError("vocabulary has no non-reserved tokens to draw from")
    src = [int(x) for x in rng.gen.integers(lo, hi, like.s)]
    body = [int(x) for x in rng.gen.integers(lo, hi, like.t - 2)]
    return SequencePair(source=src, target=[BOS_ID] + body + [EOS_ID], pair_id=-2)


def partner_select(
    cfg: MethodConfig, batch: list[SequencePair], vocab_size: int, rng: RngStream
) -> list[SequencePair]:
    """Draw one partner per batch element from the method's partner distribution."""
    if not batch:
        raise ContractError("partner_select: empty batch")
    if cfg.method in (Method.SEQMIX_HARD, Method.SEQMIX_SOFT):
        perm = _derangement(len(batch), rng)
        return [batch[int(j)] for j in perm]
    if cfg.method is Method.SWITCHOUT:
        return [_random_token_pair(p, vocab_size, rng) for p in batch]
    if cfg.method is Method.WORDDROP:
        return [
            SequencePair(source=[PAD_ID] * p.s, target=[PAD_ID] * p.t, pair_id=-2)
            for p in batch
        ]
    return list(batch)


def augment_batch(
    cfg: MethodConfig, batch: list[SequencePair], vocab_size: int, rng: RngStream
) -> list[MixedExample]:
    """Apply the configured method to every element of a minibatch."""
    if cfg.method is Method.BASELINE:
        return [passthrough(p, vocab_size) for p in batch]
    partners = partner_select(cfg, batch, vocab_size, rng)
    out = []
    for a, b in zip(batch, partners):
        if cfg.p_mix < 1.0 and rng.gen.random() >= cfg.p_mix:
            out.append(passthrough(a, vocab_size, method=cfg.method))
            continue
        if cfg.method is Method.SEQMIX_SOFT:
            a2, b2 = align_lengths(a, b)
            lam = cfg.lambda_override if cfg.lambda_override is not None else sample_lambda_beta(cfg.alpha, rng)
            out.append(mix_soft(a2, b2, lam, vocab_size))
        elif cfg.method is Method.SEQMIX_HARD:
            a2, b2 = align_lengths(a, b)
            lam = cfg.lambda_override if cfg.lambda_override is not None else sample_lambda_beta(cfg.alpha, rng)
            m_src = sample_mask(lam, a2.s, rng)
            m_tgt = sample_mask(lam, a2.t, rng)
            out.append(mix_hard(a2, b2, m_src, m_tgt, vocab_size, method=Method.SEQMIX_HARD, lam=lam))
        elif cfg.method is Method.SWITCHOUT:
            rate_src = sample_switchout_rate(a.s, cfg.eta, rng)
            rate_tgt = sample_switchout_rate(a.t, cfg.eta, rng)
            m_src = sample_mask(1.0 - rate_src, a.s, rng)
            m_tgt = sample_mask(1.0 - rate_tgt, a.t, rng)
            out.append(mix_hard(a, b, m_src, m_tgt, vocab_size, method=Method.SWITCHOUT))
        elif cfg.method is Method.WORDDROP:
            m_src = sample_mask(1.0 - cfg.rho, a.s, rng)
            if cfg.worddrop_source_only:
                m_tgt = np.ones(a.t, dtype=np.int64)
            else:
                m_tgt = sample_mask(1.0 - cfg.rho, a.t, rng)
            out.append(
                mix_hard(a, b, m_src, m_tgt, vocab_size, method=Method.WORDDROP, zero_partner=True)
            )
        else:
            raise ContractError(f"unhandled method {cfg.method}")
    return out


def dump_mixed_example(ex: MixedExample) -> str:
    """One tab-separated audit line: parents, lambda, method, sparse rows."""

    def sparse(rows: np.ndarray) -> str:
        triples = []
        for pos, row in enumerate(rows):
            for idx in np.nonzero(row)[0]:
                triples.append(f"{pos}:{int(idx)}:{row[idx]:.6g}")
        return " ".join(triples)

    lam = "-" if ex.lam is None else f"{ex.lam:.6g}"
    return "\t".join(
        [
            str(ex.parents[0]),
            str(ex.parents[1]),
            lam,
            ex.method.value,
            sparse(ex.soft_source.rows),
            sparse(ex.soft_target.rows),
        ]
    )

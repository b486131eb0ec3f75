"""Tests for partner selection, alignment, and hard/soft mixing."""

import numpy as np
import pytest

from seqmix.data import BOS_ID, EOS_ID, PAD_ID, Vocabulary
from seqmix.errors import ContractError, ParameterError
from seqmix.mixer import (
    MixedExample,
    SequencePair,
    align_lengths,
    augment_batch,
    dump_mixed_example,
    encode_pair,
    mix_hard,
    mix_soft,
    one_hot,
    partner_select,
    passthrough,
)
from seqmix.sampling import Method, MethodConfig, RngStream

V = 10


def pair(src, tgt, pid=-1):
    return SequencePair(source=list(src), target=[BOS_ID] + list(tgt) + [EOS_ID], pair_id=pid)


A = pair([4, 5, 6], [5, 6, 4, 7], pid=0)
B = pair([6, 4], [7, 5], pid=1)


class TestAlignment:
    def test_right_pad_to_max_lengths(self):
        a2, b2 = align_lengths(A, B)
        assert a2.s == b2.s == 3 and a2.t == b2.t == 6
        assert b2.source == [6, 4, PAD_ID]
        assert b2.target == [BOS_ID, 7, 5, EOS_ID, PAD_ID, PAD_ID]

    def test_alignment_never_truncates(self):
        a2, b2 = align_lengths(A, B)
        assert a2.source[: A.s] == A.source
        assert b2.target[: B.t] == B.target

    def test_equal_lengths_unchanged(self):
        a2, b2 = align_lengths(A, A)
        assert a2.source == A.source and b2.target == A.target


class TestSoftMix:
    def test_endpoint_lambda_one_is_parent_a(self):
        a2, b2 = align_lengths(A, B)
        ex = mix_soft(a2, b2, 1.0, V)
        assert np.array_equal(ex.soft_source.rows, one_hot(a2.source, V))
        assert np.array_equal(ex.soft_target.rows, one_hot(a2.target, V))

    def test_endpoint_lambda_zero_is_parent_b(self):
        a2, b2 = align_lengths(A, B)
        ex = mix_soft(a2, b2, 0.0, V)
        assert np.array_equal(ex.soft_source.rows, one_hot(b2.source, V))

    def test_symmetry(self):
        a2, b2 = align_lengths(A, B)
        lhs = mix_soft(a2, b2, 0.3, V)
        rhs = mix_soft(b2, a2, 0.7, V)
        assert np.allclose(lhs.soft_source.rows, rhs.soft_source.rows, atol=1e-12)
        assert np.allclose(lhs.soft_target.rows, rhs.soft_target.rows, atol=1e-12)
        assert np.allclose(lhs.target_weights, rhs.target_weights, atol=1e-12)

    def test_rows_stay_on_simplex(self):
        a2, b2 = align_lengths(A, B)
        for lam in (0.0, 0.25, 0.5, 0.9, 1.0):
            ex = mix_soft(a2, b2, lam, V)
            assert np.allclose(ex.soft_source.rows.sum(axis=1), 1.0, atol=1e-12)
            assert np.allclose(ex.soft_target.rows.sum(axis=1), 1.0, atol=1e-12)
            assert ex.soft_source.rows.min() >= 0.0

    def test_target_weights_rule(self):
        a2, b2 = align_lengths(A, B)  # b2 target real through position 3
        ex = mix_soft(a2, b2, 0.3, V)
        # both real -> 1; only a real -> lam; both PAD -> 0
        assert np.allclose(ex.target_weights, [1, 1, 1, 1, 0.3, 0.3], atol=1e-12)

    def test_lambda_range_validated(self):
        a2, b2 = align_lengths(A, B)
        with pytest.raises(ParameterError):
            mix_soft(a2, b2, 1.5, V)

    def test_unaligned_inputs_rejected(self):
        with pytest.raises(ContractError):
            mix_soft(A, B, 0.5, V)


class TestHardMix:
    def test_mask_picks_parents_per_position(self):
        a2, b2 = align_lengths(A, B)
        m_src = np.array([1, 0, 1])
        m_tgt = np.array([1, 1, 0, 0, 1, 0])
        ex = mix_hard(a2, b2, m_src, m_tgt, V)
        want_src = np.where(m_src == 1, a2.source, b2.source)
        want_tgt = np.where(m_tgt == 1, a2.target, b2.target)
        assert np.array_equal(ex.soft_source.rows, one_hot(want_src, V))
        assert np.array_equal(ex.soft_target.rows, one_hot(want_tgt, V))

    def test_all_ones_mask_is_parent_a(self):
        a2, b2 = align_lengths(A, B)
        ex = mix_hard(a2, b2, np.ones(3, int), np.ones(6, int), V)
        assert np.array_equal(ex.soft_source.rows, one_hot(a2.source, V))

    def test_zero_partner_rows_are_all_zero(self):
        drop = SequencePair([PAD_ID] * A.s, [PAD_ID] * A.t, pair_id=-2)
        m_src = np.array([1, 0, 1])
        m_tgt = np.array([1, 0, 1, 1, 0, 1])[: A.t]
        ex = mix_hard(A, drop, m_src, m_tgt, V, method=Method.WORDDROP, zero_partner=True)
        assert np.array_equal(ex.soft_source.rows[1], np.zeros(V))
        assert ex.soft_source.rows[0].sum() == 1.0
        # dropped target rows still carry full loss weight (the reference is intact)
        assert np.array_equal(ex.target_weights, [1.0] * A.t)

    def test_hard_mask_mc_converges_to_soft_rows(self):
        # E[hard mix] over Bernoulli(lam) masks equals the soft mix rows
        a2, b2 = align_lengths(A, B)
        lam = 0.35
        rng = RngStream(0, ("mc",))
        n = 100_000
        bits_src = (rng.gen.random((n, a2.s)) < lam).astype(int)
        acc = np.zeros((a2.s, V))
        rows_a, rows_b = one_hot(a2.source, V), one_hot(b2.source, V)
        for k in range(a2.s):
            p = bits_src[:, k].mean()
            acc[k] = p * rows_a[k] + (1 - p) * rows_b[k]
        soft = mix_soft(a2, b2, lam, V).soft_source.rows
        se = np.sqrt(lam * (1 - lam) / n)
        assert np.all(np.abs(acc - soft) <= 3 * se + 1e-12)

    def test_mask_length_mismatch_rejected(self):
        a2, b2 = align_lengths(A, B)
        with pytest.raises(ContractError):
            mix_hard(a2, b2, np.ones(2, int), np.ones(6, int), V)


class TestPartnerSelect:
    def test_seqmix_partner_never_self(self):
        batch = [pair([4 + i], [4 + i], pid=i) for i in range(6)]
        cfg = MethodConfig(method=Method.SEQMIX_SOFT)
        for trial in range(200):
            partners = partner_select(cfg, batch, V, RngStream(trial, ("p",)))
            assert all(p.pair_id != q.pair_id for p, q in zip(batch, partners))

    def test_seqmix_partner_roughly_uniform(self):
        batch = [pair([4], [4], pid=i) for i in range(5)]
        cfg = MethodConfig(method=Method.SEQMIX_SOFT)
        rng = RngStream(0, ("uniform",))
        counts = np.zeros(5)
        n = 20_000
        for _ in range(n):
            partners = partner_select(cfg, batch, V, rng)
            counts[partners[0].pair_id] += 1
        freq = counts / n
        assert freq[0] == 0.0  # never itself
        # the fixpoint repair skews the distribution, but every partner stays reachable
        assert np.all(freq[1:] > 0.1) and np.all(freq[1:] < 0.5)

    def test_switchout_partner_is_random_tokens(self):
        batch = [A]
        cfg = MethodConfig(method=Method.SWITCHOUT)
        partners = partner_select(cfg, batch, V, RngStream(0, ("s",)))
        p = partners[0]
        assert p.s == A.s and p.t == A.t
        assert p.target[0] == BOS_ID and p.target[-1] == EOS_ID
        assert all(t > EOS_ID for t in p.source)

    def test_worddrop_partner_is_all_pad(self):
        cfg = MethodConfig(method=Method.WORDDROP)
        partners = partner_select(cfg, [A], V, RngStream(0, ("w",)))
        assert partners[0].source == [PAD_ID] * A.s
        assert partners[0].target == [PAD_ID] * A.t

    def test_empty_batch_rejected(self):
        with pytest.raises(ContractError):
            partner_select(MethodConfig(method=Method.SEQMIX_SOFT), [], V, RngStream(0))


class TestAugmentBatch:
    BATCH = [A, B, pair([7, 8], [8, 7], pid=2), pair([9], [9], pid=3)]

    def test_baseline_is_identity(self):
        out = augment_batch(MethodConfig(method=Method.BASELINE), self.BATCH, V, RngStream(0))
        for ex, p in zip(out, self.BATCH):
            assert np.array_equal(ex.soft_source.rows, one_hot(p.source, V))
            assert ex.lam is None

    def test_lambda_override_one_reproduces_baseline_rows(self):
        cfg = MethodConfig(method=Method.SEQMIX_SOFT, lambda_override=1.0)
        out = augment_batch(cfg, self.BATCH, V, RngStream(0, ("a",)))
        for ex, p in zip(out, self.BATCH):
            s = ex.soft_source.length
            assert np.array_equal(ex.soft_source.rows[: p.s], one_hot(p.source, V))
            # padded tail, if any, is exact PAD one-hots with zero loss weight
            assert np.array_equal(ex.soft_source.rows[p.s:], one_hot([PAD_ID] * (s - p.s), V))
            assert np.array_equal(ex.target_weights[p.t:], np.zeros(ex.soft_target.length - p.t))

    def test_p_mix_zero_passes_everything_through(self):
        cfg = MethodConfig(method=Method.SEQMIX_SOFT, p_mix=0.0)
        out = augment_batch(cfg, self.BATCH, V, RngStream(0, ("a",)))
        for ex, p in zip(out, self.BATCH):
            assert np.array_equal(ex.soft_source.rows, one_hot(p.source, V))

    @pytest.mark.parametrize("method", list(Method))
    def test_every_method_produces_valid_examples(self, method):
        cfg = MethodConfig(method=method)
        out = augment_batch(cfg, self.BATCH, V, RngStream(1, ("a",)))
        assert len(out) == len(self.BATCH)
        for ex in out:
            assert isinstance(ex, MixedExample)
            assert ex.soft_source.rows.shape[1] == V
            assert ex.target_weights.shape == (ex.soft_target.length,)
            assert ex.method is method or method is Method.BASELINE

    def test_determinism(self):
        cfg = MethodConfig(method=Method.SEQMIX_HARD)
        a = augment_batch(cfg, self.BATCH, V, RngStream(5, ("a",)))
        b = augment_batch(cfg, self.BATCH, V, RngStream(5, ("a",)))
        for x, y in zip(a, b):
            assert np.array_equal(x.soft_source.rows, y.soft_source.rows)
            assert np.array_equal(x.soft_target.rows, y.soft_target.rows)


class TestEncodedPairsAndDump:
    def test_encode_pair_frames_target(self):
        vocab = Vocabulary(["walk", "jump", "WALK", "JUMP"])
        p = encode_pair(["jump"], ["JUMP"], vocab, pair_id=3)
        assert p.source == vocab.encode(["jump"])
        assert p.target[0] == BOS_ID and p.target[-1] == EOS_ID
        assert p.pair_id == 3

    def test_passthrough_weights_zero_on_pad(self):
        padded, _ = align_lengths(B, A)
        ex = passthrough(padded, V)
        assert np.array_equal(ex.target_weights, [1, 1, 1, 1, 0, 0])

    def test_dump_line_roundtrips_soft_rows(self):
        a2, b2 = align_lengths(A, B)
        ex = mix_soft(a2, b2, 0.25, V)
        line = dump_mixed_example(ex)
        cols = line.split("\t")
        assert cols[0] == "0" and cols[1] == "1"
        assert float(cols[2]) == pytest.approx(0.25)
        assert cols[3] == "seqmix"
        # sparse triples pos:index:weight reconstruct the source rows
        rebuilt = np.zeros_like(ex.soft_source.rows)
        for triple in cols[4].split():
            pos, idx, w = triple.split(":")
            rebuilt[int(pos), int(idx)] = float(w)
        assert np.allclose(rebuilt, ex.soft_source.rows, atol=1e-6)

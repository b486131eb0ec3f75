"""One-layer LSTM encoder-decoder over soft token rows.

Two forward implementations share the same formulas: a pure-numpy path for
evaluation and enumeration oracles, and a tape path (:mod:`seqmix.numkit`)
for training. The training loss is the soft negative log-likelihood
``-sum_t w_t * <soft_target_t, log_softmax(logits_t)>``; with one-hot targets
and unit weights it reduces to ordinary token-level NLL.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import numkit as nk
from .data import BOS_ID, EOS_ID, PAD_ID
from .errors import ContractError, DimensionError, ParseError
from .mixer import MixedExample, SequencePair, SoftSequence, one_hot
from .sampling import RngStream

ENUMERATION_BOUND = 16  # max s + t for the brute-force marginal

PARAM_ORDER = (
    "embedding",
    "enc_wx",
    "enc_wh",
    "enc_b",
    "dec_wx",
    "dec_wh",
    "dec_b",
    "out_w",
    "out_b",
)


@dataclass
class ModelParams:
    """All learnable parameters. Gate blocks in 4h matrices are [i | f | g | o]."""

    embedding: np.ndarray  # (V, e), shared source/target
    enc_wx: np.ndarray  # (e, 4h)
    enc_wh: np.ndarray  # (h, 4h)
    enc_b: np.ndarray  # (4h,)
    dec_wx: np.ndarray  # (e, 4h)
    dec_wh: np.ndarray  # (h, 4h)
    dec_b: np.ndarray  # (4h,)
    out_w: np.ndarray  # (h, V)
    out_b: np.ndarray  # (V,)
    att_w: np.ndarray | None = None  # (2h, h), dot-product attention combiner
    att_b: np.ndarray | None = None  # (h,)

    @property
    def has_attention(self) -> bool:
        return self.att_w is not None

    @property
    def vocab_size(self) -> int:
        return self.embedding.shape[0]

    @property
    def embed_size(self) -> int:
        return self.embedding.shape[1]

    @property
    def hidden_size(self) -> int:
        return self.enc_wh.shape[0]

    def items(self):
        names = PARAM_ORDER + (("att_w", "att_b") if self.has_attention else ())
        for name in names:
            yield name, getattr(self, name)

    def copy(self) -> "ModelParams":
        return ModelParams(**{name: arr.copy() for name, arr in self.items()})


@dataclass
class DecoderState:
    hidden: np.ndarray  # (h,) or (B, h)
    cell: np.ndarray


def init_params(
    vocab_size: int,
    hidden_size: int = 64,
    embed_size: int = 32,
    rng: RngStream | None = None,
    init_scale: float = 0.08,
    forget_bias: float = 1.0,
    attention: bool = False,
) -> ModelParams:
    """Uniform(-init_scale, init_scale) weights, zero biases, +forget_bias on f."""
    rng = rng or RngStream(0, ("init",))
    h, e, v = hidden_size, embed_size, vocab_size

    def uni(*shape):
        return rng.gen.uniform(-init_scale, init_scale, shape)

    enc_b = np.zeros(4 * h)
    dec_b = np.zeros(4 * h)
    enc_b[h:2 * h] = forget_bias
    dec_b[h:2 * h] = forget_bias
    return ModelParams(
        att_w=uni(2 * h, h) if attention else None,
        att_b=np.zeros(h) if attention else None,
        embedding=uni(v, e),
        enc_wx=uni(e, 4 * h),
        enc_wh=uni(h, 4 * h),
        enc_b=enc_b,
        dec_wx=uni(e, 4 * h),
        dec_wh=uni(h, 4 * h),
        dec_b=dec_b,
        out_w=uni(h, v),
        out_b=np.zeros(v),
    )


# ---------------------------------------------------------------------------
# pure-numpy forward path (evaluation, oracles)
# ---------------------------------------------------------------------------


def _np_lstm_step(x, h, c, wx, wh, b):
    nh = h.shape[-1]
    gates = (x @ wx + h @ wh) + b
    i = 1.0 / (1.0 + np.exp(-gates[..., :nh]))
    f = 1.0 / (1.0 + np.exp(-gates[..., nh:2 * nh]))
    g = np.tanh(gates[..., 2 * nh:3 * nh])
    o = 1.0 / (1.0 + np.exp(-gates[..., 3 * nh:]))
    c2 = f * c + i * g
    h2 = o * np.tanh(c2)
    return h2, c2


def _np_log_softmax(x):
    z = x - x.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def soft_embed(soft_seq: SoftSequence, embedding: np.ndarray) -> np.ndarray:
    """Rows times the embedding table; exact lookup for one-hot rows."""
    if soft_seq.vocab_size != embedding.shape[0]:
        raise ContractError(
            f"soft_embed: row dimension {soft_seq.vocab_size} != vocab {embedding.shape[0]}"
        )
    return soft_seq.rows @ embedding


def encode(soft_source: SoftSequence, params: ModelParams):
    """Left-to-right LSTM from zero state; returns final state and hiddens.

    Each step is gated by the row's non-PAD mass: a pure PAD row carries the
    state through unchanged, so padding never alters the encoding of the real
    prefix and padded training batches match unpadded evaluation.
    """
    if soft_source.length == 0:
        raise ContractError("encode: empty source")
    emb = soft_embed(soft_source, params.embedding)
    h = np.zeros(params.hidden_size)
    c = np.zeros(params.hidden_size)
    hiddens = []
    for t in range(soft_source.length):
        g = 1.0 - soft_source.rows[t, PAD_ID]
        h2, c2 = _np_lstm_step(emb[t], h, c, params.enc_wx, params.enc_wh, params.enc_b)
        h = g * h2 + (1.0 - g) * h
        c = g * c2 + (1.0 - g) * c
        hiddens.append(h)
    return DecoderState(hidden=h, cell=c), hiddens


def attention_mask(rows: np.ndarray) -> np.ndarray:
    """Additive attention mask over source rows: -inf on pure-PAD positions.

    ``rows`` is (..., S, V); the result is (..., S). exp(-inf) is exactly zero,
    so masked positions get zero attention weight and padding cannot leak in.
    """
    return np.where(rows[..., PAD_ID] >= 1.0, -np.inf, 0.0)


def _np_attend(h, enc_h, mask, params: ModelParams):
    """Dot-product attention readout; enc_h is (S, h) or (B, S, h)."""
    scores = (enc_h * h[..., None, :]).sum(axis=-1) + mask
    a = np.exp(_np_log_softmax(scores))
    ctx = (a[..., None] * enc_h).sum(axis=-2)
    return np.tanh(np.concatenate([h, ctx], axis=-1) @ params.att_w + params.att_b)


def decode_step(
    state: DecoderState,
    soft_prev: np.ndarray,
    params: ModelParams,
    enc_hiddens: np.ndarray | None = None,
    enc_mask: np.ndarray | None = None,
):
    """One decoder step over the soft previous token; returns (logits, state)."""
    x = soft_prev @ params.embedding
    h, c = _np_lstm_step(x, state.hidden, state.cell, params.dec_wx, params.dec_wh, params.dec_b)
    if params.has_attention:
        if enc_hiddens is None or enc_mask is None:
            raise ContractError("decode_step: attention model needs encoder hiddens and mask")
        readout = _np_attend(h, enc_hiddens, enc_mask, params)
    else:
        readout = h
    logits = readout @ params.out_w + params.out_b
    return logits, DecoderState(hidden=h, cell=c)


def soft_nll(soft_targets: SoftSequence, logit_rows: np.ndarray, position_weights: np.ndarray) -> float:
    """-sum_t w_t * <soft_target_t, log_softmax(logits_t)>."""
    rows = soft_targets.rows
    logit_rows = np.asarray(logit_rows)
    w = np.asarray(position_weights)
    if rows.shape != logit_rows.shape or w.shape != (rows.shape[0],):
        raise DimensionError(
            f"soft_nll: shapes {rows.shape}, {logit_rows.shape}, {w.shape} disagree"
        )
    lp = _np_log_softmax(logit_rows)
    return float(-(w[:, None] * rows * lp).sum())


def example_logits(ex: MixedExample, params: ModelParams) -> np.ndarray:
    """Teacher-forced decoder logits for rows 1..T-1 of a mixed example."""
    state, hiddens = encode(ex.soft_source, params)
    enc_h = np.stack(hiddens)
    mask = attention_mask(ex.soft_source.rows)
    out = []
    for t in range(ex.soft_target.length - 1):
        logits, state = decode_step(state, ex.soft_target.rows[t], params, enc_h, mask)
        out.append(logits)
    return np.array(out)


def mixed_example_loss(ex: MixedExample, params: ModelParams) -> float:
    """Soft NLL of one mixed example (prediction targets are rows 1..T-1)."""
    logits = example_logits(ex, params)
    return soft_nll(
        SoftSequence(ex.soft_target.rows[1:]), logits, ex.target_weights[1:]
    )


def sequence_logprob(pair: SequencePair, params: ModelParams) -> float:
    """Teacher-forced log p(target | source); always <= 0."""
    v = params.vocab_size
    src_rows = one_hot(pair.source, v)
    state, hiddens = encode(SoftSequence(src_rows), params)
    enc_h = np.stack(hiddens)
    mask = attention_mask(src_rows)
    total = 0.0
    prev_rows = one_hot(pair.target, v)
    for t in range(pair.t - 1):
        logits, state = decode_step(state, prev_rows[t], params, enc_h, mask)
        total += float(_np_log_softmax(logits)[pair.target[t + 1]])
    return total


def greedy_decode(source: list[int], params: ModelParams, max_len: int) -> list[int]:
    """Argmax decoding from BOS until EOS or max_len; ties go to the lower id."""
    if max_len < 1:
        raise ContractError(f"max_len must be >= 1, got {max_len}")
    v = params.vocab_size
    src_rows = one_hot(source, v)
    state, hiddens = encode(SoftSequence(src_rows), params)
    enc_h = np.stack(hiddens)
    mask = attention_mask(src_rows)
    prev = one_hot([BOS_ID], v)[0]
    out = []
    for _ in range(max_len):
        logits, state = decode_step(state, prev, params, enc_h, mask)
        tok = int(np.argmax(logits))
        if tok == EOS_ID:
            break
        out.append(tok)
        prev = one_hot([tok], v)[0]
    return out


def greedy_decode_batch(sources: list[list[int]], params: ModelParams, max_len: int) -> list[list[int]]:
    """Batched greedy decode, grouping sources by exact length so results are
    identical to per-example :func:`greedy_decode`."""
    results: list[list[int] | None] = [None] * len(sources)
    by_len: dict[int, list[int]] = {}
    for i, src in enumerate(sources):
        by_len.setdefault(len(src), []).append(i)
    v = params.vocab_size
    for _, idxs in sorted(by_len.items()):
        batch = np.stack([one_hot(sources[i], v) for i in idxs])  # (B, S, V)
        b = len(idxs)
        h = np.zeros((b, params.hidden_size))
        c = np.zeros((b, params.hidden_size))
        steps = []
        for t in range(batch.shape[1]):
            x = batch[:, t, :] @ params.embedding
            g = (1.0 - batch[:, t, PAD_ID])[:, None]
            h2, c2 = _np_lstm_step(x, h, c, params.enc_wx, params.enc_wh, params.enc_b)
            h = g * h2 + (1.0 - g) * h
            c = g * c2 + (1.0 - g) * c
            steps.append(h)
        enc_h = np.stack(steps, axis=1)  # (B, S, h)
        mask = attention_mask(batch)
        prev = np.tile(one_hot([BOS_ID], v), (b, 1))
        done = np.zeros(b, dtype=bool)
        outs: list[list[int]] = [[] for _ in range(b)]
        for _ in range(max_len):
            x = prev @ params.embedding
            h, c = _np_lstm_step(x, h, c, params.dec_wx, params.dec_wh, params.dec_b)
            readout = _np_attend(h, enc_h, mask, params) if params.has_attention else h
            logits = readout @ params.out_w + params.out_b
            toks = np.argmax(logits, axis=-1)
            for j in range(b):
                if done[j]:
                    continue
                if toks[j] == EOS_ID:
                    done[j] = True
                else:
                    outs[j].append(int(toks[j]))
            if done.all():
                break
            prev = one_hot(toks, v)
        for j, i in enumerate(idxs):
            results[i] = outs[j]
    return results


# ---------------------------------------------------------------------------
# brute-force marginal oracle (test/audit only)
# ---------------------------------------------------------------------------


def enumerate_mask_logps(a: SequencePair, b: SequencePair, params: ModelParams) -> np.ndarray:
    """log p(Y(m) | X(m)) for every mask m over the s+t positions.

    Bit j of the mask index covers position j (source first, then target);
    bit 1 takes parent a's token. Index 2^n - 1 therefore reproduces a.
    """
    if a.s != b.s or a.t != b.t:
        raise ContractError("enumerate_mask_logps: pairs must be length-aligned")
    n = a.s + a.t
    if n > ENUMERATION_BOUND:
        raise ContractError(f"enumeration over {n} positions exceeds bound {ENUMERATION_BOUND}")
    asrc, atgt = np.array(a.source), np.array(a.target)
    bsrc, btgt = np.array(b.source), np.array(b.target)
    logps = np.empty(2 ** n)
    for idx in range(2 ** n):
        bits = (idx >> np.arange(n)) & 1
        src = np.where(bits[: a.s] == 1, asrc, bsrc)
        tgt = np.where(bits[a.s:] == 1, atgt, btgt)
        logps[idx] = sequence_logprob(SequencePair(list(src), list(tgt)), params)
    return logps


def _mask_log_weights(n: int, lam: float) -> np.ndarray:
    """log p_lam(m) per mask index (popcount-based; -inf for zero weight)."""
    ones = np.array([bin(i).count("1") for i in range(2 ** n)])
    log_lam = np.log(lam) if lam > 0 else -np.inf
    log_com = np.log(1.0 - lam) if lam < 1 else -np.inf
    with np.errstate(invalid="ignore"):
        lw = np.where(ones > 0, ones * log_lam, 0.0) + np.where(n - ones > 0, (n - ones) * log_com, 0.0)
    return lw


def log_marginal_bruteforce(a: SequencePair, b: SequencePair, lam: float, params: ModelParams) -> float:
    """Exact log E_{m ~ Bernoulli(lam)^n} p(Y(m) | X(m)) by full enumeration."""
    logps = enumerate_mask_logps(a, b, params)
    n = a.s + a.t
    lw = _mask_log_weights(n, lam)
    vals = lw + logps
    finite = vals[np.isfinite(vals)]
    m = finite.max()
    return float(m + np.log(np.exp(finite - m).sum()))


def expected_logprob_bruteforce(a: SequencePair, b: SequencePair, lam: float, params: ModelParams) -> float:
    """Exact E_m[log p(Y(m) | X(m))] (the sampled-mask training objective)."""
    logps = enumerate_mask_logps(a, b, params)
    w = np.exp(_mask_log_weights(a.s + a.t, lam))
    return float((w * logps).sum())


def mc_expected_logprob(
    a: SequencePair,
    b: SequencePair,
    lam: float,
    params: ModelParams,
    n_samples: int,
    rng: RngStream,
    logps: np.ndarray | None = None,
) -> tuple[float, float]:
    """Monte-Carlo estimate (mean, standard error) of E_m[log p]."""
    if logps is None:
        logps = enumerate_mask_logps(a, b, params)
    n = a.s + a.t
    bits = (rng.gen.random((n_samples, n)) < lam).astype(np.int64)
    idx = bits @ (1 << np.arange(n))
    samples = logps[idx]
    return float(samples.mean()), float(samples.std(ddof=1) / np.sqrt(n_samples))


# ---------------------------------------------------------------------------
# tape forward path (training)
# ---------------------------------------------------------------------------


def param_leaves(tape: nk.Tape, params: ModelParams) -> dict[str, nk.Tensor]:
    return {name: tape.leaf(arr) for name, arr in params.items()}


def _tape_lstm_step(tape, x, h, c, wx, wh, b, hidden_size):
    nh = hidden_size
    gates = nk.add_bias(nk.add(nk.matmul(x, wx), nk.matmul(h, wh)), b)
    i = nk.sigmoid(nk.slice_cols(gates, 0, nh))
    f = nk.sigmoid(nk.slice_cols(gates, nh, 2 * nh))
    g = nk.tanh(nk.slice_cols(gates, 2 * nh, 3 * nh))
    o = nk.sigmoid(nk.slice_cols(gates, 3 * nh, 4 * nh))
    c2 = nk.add(nk.mul(f, c), nk.mul(i, g))
    h2 = nk.mul(o, nk.tanh(c2))
    return h2, c2


def batch_loss(
    tape: nk.Tape,
    leaves: dict[str, nk.Tensor],
    src_rows: np.ndarray,  # (B, S, V)
    tgt_rows: np.ndarray,  # (B, T, V)
    weights: np.ndarray,  # (B, T)
) -> tuple[nk.Tensor, float]:
    """Mean weighted soft NLL of a padded batch; returns (loss, weight total)."""
    b, s, v = src_rows.shape
    t = tgt_rows.shape[1]
    hs = leaves["enc_wh"].shape[0]
    attn = "att_w" in leaves
    zeros = tape.leaf(np.zeros((b, hs)))
    h, c = zeros, zeros
    enc_steps = []
    for step in range(s):
        x = nk.matmul(tape.leaf(src_rows[:, step, :]), leaves["embedding"])
        h2, c2 = _tape_lstm_step(tape, x, h, c, leaves["enc_wx"], leaves["enc_wh"], leaves["enc_b"], hs)
        # PAD-mass carry gate: pure PAD rows leave the state untouched
        g_arr = np.broadcast_to((1.0 - src_rows[:, step, PAD_ID])[:, None], (b, hs)).copy()
        gate = tape.leaf(g_arr)
        inv = tape.leaf(1.0 - g_arr)
        h = nk.add(nk.mul(gate, h2), nk.mul(inv, h))
        c = nk.add(nk.mul(gate, c2), nk.mul(inv, c))
        enc_steps.append(h)
    if attn:
        mask_leaf = tape.leaf(attention_mask(src_rows))  # (B, S)
    total = None
    for step in range(t - 1):
        x = nk.matmul(tape.leaf(tgt_rows[:, step, :]), leaves["embedding"])
        h, c = _tape_lstm_step(tape, x, h, c, leaves["dec_wx"], leaves["dec_wh"], leaves["dec_b"], hs)
        if attn:
            scores = nk.concat_cols([nk.rowsum(nk.mul(h, eh)) for eh in enc_steps])
            alpha = nk.exp(nk.log_softmax(nk.add(scores, mask_leaf)))
            ctx = None
            for j, eh in enumerate(enc_steps):
                term = nk.mul_cols(eh, nk.slice_cols(alpha, j, j + 1))
                ctx = term if ctx is None else nk.add(ctx, term)
            readout = nk.tanh(
                nk.add_bias(nk.matmul(nk.concat_cols([h, ctx]), leaves["att_w"]), leaves["att_b"])
            )
        else:
            readout = h
        logits = nk.add_bias(nk.matmul(readout, leaves["out_w"]), leaves["out_b"])
        lp = nk.log_softmax(logits)
        weighted_target = weights[:, step + 1, None] * tgt_rows[:, step + 1, :]
        contrib = nk.tsum(nk.mul(lp, tape.leaf(weighted_target)))
        total = contrib if total is None else nk.add(total, contrib)
    weight_total = float(weights[:, 1:].sum())
    loss = nk.scale(total, -1.0 / weight_total)
    return loss, weight_total


def pack_batch(examples: list[MixedExample], vocab_size: int):
    """Pad a list of mixed examples to common lengths (PAD one-hot rows,
    weight 0 beyond each example's own length)."""
    bsz = len(examples)
    s = max(ex.soft_source.length for ex in examples)
    t = max(ex.soft_target.length for ex in examples)
    src = np.zeros((bsz, s, vocab_size))
    tgt = np.zeros((bsz, t, vocab_size))
    w = np.zeros((bsz, t))
    src[:, :, PAD_ID] = 1.0
    tgt[:, :, PAD_ID] = 1.0
    for i, ex in enumerate(examples):
        src[i, : ex.soft_source.length, :] = ex.soft_source.rows
        tgt[i, : ex.soft_target.length, :] = ex.soft_target.rows
        w[i, : ex.soft_target.length] = ex.target_weights
    return src, tgt, w


def soft_objective_grad_check(ex: MixedExample, params: ModelParams, eps: float = 1e-5) -> float:
    """Max relative error between the tape gradient of the soft objective and
    central finite differences of the numpy forward, over every parameter."""
    src, tgt, w = pack_batch([ex], params.vocab_size)
    tape = nk.Tape()
    leaves = param_leaves(tape, params)
    loss, weight_total = batch_loss(tape, leaves, src, tgt, w)
    grads = nk.backward(loss)

    def numeric_loss(p: ModelParams) -> float:
        return mixed_example_loss(ex, p) / weight_total

    worst = 0.0
    for name, arr in params.items():
        analytic = grads.get(leaves[name].node_id, np.zeros_like(arr))
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + eps
            fp = numeric_loss(params)
            arr[idx] = orig - eps
            fm = numeric_loss(params)
            arr[idx] = orig
            numeric = (fp - fm) / (2 * eps)
            a = float(analytic[idx])
            worst = max(worst, abs(a - numeric) / max(1.0, abs(a), abs(numeric)))
    return worst


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

_CKPT_MAGIC = "seqmix-checkpoint v1"


def save_checkpoint(params: ModelParams, path) -> None:
    """Text header (names and shapes in fixed order), then raw little-endian
    float64 data; round trips bit-exactly."""
    header = " ".join(
        [_CKPT_MAGIC] + [f"{name}:{'x'.join(map(str, arr.shape))}" for name, arr in params.items()]
    )
    with open(path, "wb") as fh:
        fh.write((header + "\n").encode("ascii"))
        for _, arr in params.items():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").rstrip("\n")
        blob = fh.read()
    parts = header.split(" ")
    if " ".join(parts[:2]) != _CKPT_MAGIC:
        raise ParseError(f"{path}: not a checkpoint file")
    arrays = {}
    off = 0
    for entry in parts[2:]:
        name, shape_s = entry.split(":")
        shape = tuple(int(x) for x in shape_s.split("x"))
        count = int(np.prod(shape))
        arrays[name] = (
            np.frombuffer(blob, dtype="<f8", count=count, offset=off).reshape(shape).copy()
        )
        off += count * 8
    names = set(arrays)
    if names != set(PARAM_ORDER) and names != set(PARAM_ORDER) | {"att_w", "att_b"}:
        raise ParseError(f"{path}: checkpoint parameter names {sorted(arrays)} unexpected")
    return ModelParams(**arrays)

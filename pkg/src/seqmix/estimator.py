"""Scikit-learn style wrapper so the seq2seq trainer composes with the wider
ecosystem (get_params/set_params, clone, fit/predict/score)."""

from __future__ import annotations

from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .data import Dataset, build_vocab
from .errors import ParameterError
from .model import greedy_decode_batch
from .sampling import MethodConfig
from .trainer import TrainConfig, encode_dataset, evaluate_exact_match, train


def check_token_sequences(X, name: str = "X") -> list[list[str]]:
    """Validate a list of token-string sequences and return it as lists."""
    if not isinstance(X, (list, tuple)) or not X:
        raise ParameterError(f"{name} must be a nonempty list of token sequences")
    out = []
    for i, seq in enumerate(X):
        if not isinstance(seq, (list, tuple)) or not seq:
            raise ParameterError(f"{name}[{i}] must be a nonempty list of tokens")
        if not all(isinstance(t, str) for t in seq):
            raise ParameterError(f"{name}[{i}] must contain only strings")
        out.append(list(seq))
    return out


class SeqMixSeq2Seq(BaseEstimator):
    """LSTM encoder-decoder trained with soft-mixing data augmentation.

    X and y are lists of token-string sequences. ``predict`` greedy-decodes;
    ``score`` is sequence-level exact match.
    """

    def __init__(
        self,
        method: str = "seqmix",
        alpha: float = 1.0,
        eta: float = 1.0,
        rho: float = 0.1,
        p_mix: float = 1.0,
        hidden_size: int = 64,
        embed_size: int = 32,
        lr: float = 1e-3,
        batch_size: int = 32,
        epochs: int = 30,
        clip_norm: float = 5.0,
        val_fraction: float = 0.0,
        max_decode_len: int = 64,
        attention: bool = False,
        seed: int = 0,
    ):
        self.method = method
        self.alpha = alpha
        self.eta = eta
        self.rho = rho
        self.p_mix = p_mix
        self.hidden_size = hidden_size
        self.embed_size = embed_size
        self.lr = lr
        self.batch_size = batch_size
        self.epochs = epochs
        self.clip_norm = clip_norm
        self.val_fraction = val_fraction
        self.max_decode_len = max_decode_len
        self.attention = attention
        self.seed = seed

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            method=MethodConfig(
                method=self.method,
                alpha=self.alpha,
                eta=self.eta,
                rho=self.rho,
                p_mix=self.p_mix,
            ),
            seed=self.seed,
            lr=self.lr,
            batch_size=self.batch_size,
            epochs=self.epochs,
            clip_norm=self.clip_norm,
            hidden_size=self.hidden_size,
            embed_size=self.embed_size,
            val_fraction=self.val_fraction,
            max_decode_len=self.max_decode_len,
            attention=self.attention,
        )

    def fit(self, X, y):
        X = check_token_sequences(X, "X")
        y = check_token_sequences(y, "y")
        if len(X) != len(y):
            raise ParameterError(f"X and y lengths differ: {len(X)} vs {len(y)}")
        data = Dataset("fit", list(zip(X, y)))
        vocab = build_vocab(data)
        self.params_, self.vocab_, self.history_ = train(data, self._train_config(), vocab=vocab)
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "params_"):
            raise NotFittedError("call fit before predict/score")

    def predict(self, X) -> list[list[str]]:
        self._check_fitted()
        X = check_token_sequences(X, "X")
        sources = [self.vocab_.encode(seq) for seq in X]
        decoded = greedy_decode_batch(sources, self.params_, self.max_decode_len)
        return [self.vocab_.decode(ids) for ids in decoded]

    def score(self, X, y) -> float:
        self._check_fitted()
        X = check_token_sequences(X, "X")
        y = check_token_sequences(y, "y")
        data = Dataset("score", list(zip(X, y)))
        pairs = encode_dataset(data, self.vocab_)
        return evaluate_exact_match(self.params_, pairs, self.max_decode_len)

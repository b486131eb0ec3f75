"""Datasets: SCAN-format files, a hermetic compositional mini-grammar,
primitive-holdout splits, a synthetic reversal corpus, and vocabularies."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import ParameterError, ParseError
from .sampling import RngStream

PAD_ID = 0
BOS_ID = 1
EOS_ID = 2
UNK_ID = 3
RESERVED_TOKENS = ("<pad>", "<bos>", "<eos>", "<unk>")

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


class Vocabulary:
    """Token <-> id bijection with fixed reserved ids 0..3."""

    def __init__(self, tokens):
        extra = sorted(set(tokens) - set(RESERVED_TOKENS))
        self.tokens = list(RESERVED_TOKENS) + extra
        self.index = {tok: i for i, tok in enumerate(self.tokens)}

    @classmethod
    def from_ordered_tokens(cls, tokens) -> "Vocabulary":
        tokens = list(tokens)
        if tokens[: len(RESERVED_TOKENS)] != list(RESERVED_TOKENS):
            raise ParseError("vocabulary list must start with the reserved tokens")
        vocab = cls.__new__(cls)
        vocab.tokens = tokens
        vocab.index = {tok: i for i, tok in enumerate(tokens)}
        return vocab

    def __len__(self) -> int:
        return len(self.tokens)

    def encode(self, toks) -> list[int]:
        return [self.index.get(t, UNK_ID) for t in toks]

    def decode(self, ids) -> list[str]:
        return [self.tokens[i] for i in ids]


@dataclass
class Dataset:
    """Named list of (source tokens, target tokens) pairs."""

    name: str
    pairs: list[tuple[list[str], list[str]]] = field(default_factory=list)

    def __post_init__(self) -> None:
        for src, tgt in self.pairs:
            if not src or not tgt:
                raise ParseError(f"dataset {self.name!r}: empty source or target side")

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def canonical_bytes(self) -> bytes:
        lines = [" ".join(src) + "\t" + " ".join(tgt) for src, tgt in self.pairs]
        return "\n".join(lines).encode("utf-8")

    @property
    def content_hash(self) -> int:
        return fnv1a64(self.canonical_bytes())


@dataclass
class GrammarSpec:
    """Closed command language: atom := P | P dir | 'turn' dir;
    phrase := atom [rep]; command := phrase | phrase conn phrase."""

    primitives: dict[str, str] = field(
        default_factory=lambda: {"jump": "JUMP", "walk": "WALK", "look": "LOOK", "run": "RUN"}
    )
    directions: dict[str, str] = field(
        default_factory=lambda: {"left": "LTURN", "right": "RTURN"}
    )
    repetitions: dict[str, int] = field(default_factory=lambda: {"twice": 2, "thrice": 3})
    connectives: tuple[str, ...] = ("and", "after")


def _atoms(spec: GrammarSpec):
    out = []
    for word, action in spec.primitives.items():
        out.append(([word], [action]))
    for word, action in spec.primitives.items():
        for d, turn in spec.directions.items():
            out.append(([word, d], [turn, action]))
    for d, turn in spec.directions.items():
        out.append((["turn", d], [turn]))
    return out


def gen_minigrammar(spec: GrammarSpec | None = None) -> Dataset:
    """Exhaustively enumerate the mini-grammar in a deterministic order."""
    spec = spec or GrammarSpec()
    phrases = []
    for cmd, act in _atoms(spec):
        phrases.append((cmd, act))
        for rep_word, k in spec.repetitions.items():
            phrases.append((cmd + [rep_word], act * k))
    pairs = [(list(cmd), list(act)) for cmd, act in phrases]
    for conn in spec.connectives:
        for cmd_a, act_a in phrases:
            for cmd_b, act_b in phrases:
                cmd = cmd_a + [conn] + cmd_b
                act = act_a + act_b if conn == "and" else act_b + act_a
                pairs.append((cmd, act))
    return Dataset("minigrammar", pairs)


def gen_reversal(
    n_pairs: int = 2000,
    vocab_size: int = 20,
    min_len: int = 3,
    max_len: int = 8,
    seed: int = 0,
) -> Dataset:
    """Synthetic string-reversal corpus: target is the reversed source."""
    if n_pairs < 1 or vocab_size < 1 or not 1 <= min_len <= max_len:
        raise ParameterError("invalid reversal corpus parameters")
    rng = RngStream(seed, ("reversal",))
    words = [f"w{i:02d}" for i in range(vocab_size)]
    pairs = []
    for _ in range(n_pairs):
        n = int(rng.gen.integers(min_len, max_len + 1))
        src = [words[int(i)] for i in rng.gen.integers(0, vocab_size, n)]
        pairs.append((src, list(reversed(src))))
    return Dataset("reversal", pairs)


_SCAN_RE = re.compile(r"^IN:\s*(.+?)\s*OUT:\s*(.+?)\s*$")


def load_scan_file(path) -> Dataset:
    pairs = []
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            m = _SCAN_RE.match(line)
            if m is None:
                raise ParseError(f"{path}:{lineno}: line does not match 'IN: ... OUT: ...'")
            pairs.append((m.group(1).split(), m.group(2).split()))
    if not pairs:
        raise ParseError(f"{path}: no examples found")
    return Dataset(str(path), pairs)


def save_scan_file(data: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for src, tgt in data:
            fh.write(f"IN: {' '.join(src)} OUT: {' '.join(tgt)}\n")


def load_tsv(path) -> Dataset:
    """Generic `source<TAB>target` loader (UTF-8, LF)."""
    pairs = []
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            cells = line.split("\t")
            if len(cells) != 2:
                raise ParseError(f"{path}:{lineno}: expected 2 tab-separated fields")
            pairs.append((cells[0].split(), cells[1].split()))
    if not pairs:
        raise ParseError(f"{path}: no examples found")
    return Dataset(str(path), pairs)


def save_tsv(data: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for src, tgt in data:
            fh.write(f"{' '.join(src)}\t{' '.join(tgt)}\n")


def _contains_phrase(tokens: list[str], phrase: list[str]) -> bool:
    n = len(phrase)
    return any(tokens[i:i + n] == phrase for i in range(len(tokens) - n + 1))


def make_primitive_split(data: Dataset, held_out: str) -> tuple[Dataset, Dataset]:
    """Hold out every composition containing `held_out`; keep its isolated form.

    Phrase matching is exact contiguous token-subsequence matching, so holding
    out "turn left" does not affect "walk left".
    """
    phrase = held_out.split()
    if not any(_contains_phrase(src, phrase) for src, _ in data):
        raise ParameterError(f"held-out phrase {held_out!r} does not occur in the dataset")
    train, test = [], []
    for src, tgt in data:
        if src == phrase or not _contains_phrase(src, phrase):
            train.append((src, tgt))
        else:
            test.append((src, tgt))
    return Dataset(f"{data.name}-train-{held_out}", train), Dataset(f"{data.name}-test-{held_out}", test)


def build_vocab(data: Dataset, shared: bool = True):
    """Reserved ids then sorted unique tokens; shared merges both sides."""
    if len(data) == 0:
        raise ParameterError("cannot build a vocabulary from an empty dataset")
    if shared:
        toks = set()
        for src, tgt in data:
            toks.update(src)
            toks.update(tgt)
        return Vocabulary(toks)
    src_toks, tgt_toks = set(), set()
    for src, tgt in data:
        src_toks.update(src)
        tgt_toks.update(tgt)
    return Vocabulary(src_toks), Vocabulary(tgt_toks)

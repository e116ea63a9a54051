"""Byte-level byte-pair-encoding tokenizer.

The base alphabet is all 256 byte values, so any string encodes without
an unknown-token path.  Training repeatedly merges the most frequent
adjacent token pair; three special tokens (BOS, EOS, PAD) occupy the
last ids and are never produced by merges.

Vocab file format (line-delimited text)::

    BPEVOCAB v1 <base> <n_merges>
    <left-hex> <right-hex>      one line per merge, in learned order
    ...
    SPECIAL BOS <id>
    SPECIAL EOS <id>
    SPECIAL PAD <id>
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from .errors import (
    CorpusEmptyError,
    InvalidTokenIdError,
    ParseError,
    UnknownFormatError,
)

N_BASE = 256
SPECIAL_NAMES = ("BOS", "EOS", "PAD")


@dataclass(frozen=True)
class Vocab:
    """Immutable tokenizer state: byte-level tokens, merges, special ids.

    ``id_to_token[i]`` is the byte sequence of token ``i`` for the base
    and merged tokens; specials sit after them and decode to "".  The
    merge at index ``i`` rewrites the id pair ``merges[i]`` to id
    ``256 + i``.
    """

    id_to_token: tuple
    merges: tuple
    specials: dict

    def __post_init__(self):
        if len(self.id_to_token) != N_BASE + len(self.merges):
            raise ValueError("id_to_token length inconsistent with merges")
        if len(set(self.id_to_token)) != len(self.id_to_token):
            raise ValueError("duplicate tokens in vocabulary")
        ids = [self.specials[n] for n in SPECIAL_NAMES]
        if len(set(ids)) != len(ids) or min(ids) < len(self.id_to_token):
            raise ValueError("special ids must be distinct and above token ids")

    @property
    def size(self) -> int:
        return len(self.id_to_token) + len(self.specials)

    @property
    def bos_id(self) -> int:
        return self.specials["BOS"]

    @property
    def eos_id(self) -> int:
        return self.specials["EOS"]

    @property
    def pad_id(self) -> int:
        return self.specials["PAD"]

    def encode(self, s: str, wrap: str = "none") -> list:
        return encode(self, s, wrap)

    def decode(self, ids) -> str:
        return decode(self, ids)


def _merge_pair(ids: list, a: int, b: int, new_id: int) -> list:
    out = []
    i = 0
    n = len(ids)
    while i < n:
        if i + 1 < n and ids[i] == a and ids[i + 1] == b:
            out.append(new_id)
            i += 2
        else:
            out.append(ids[i])
            i += 1
    return out


def train_bpe(corpus, target_vocab_size: int = 512) -> Vocab:
    """Learn merges from the corpus until the vocabulary reaches the target.

    ``target_vocab_size`` counts the full vocabulary: 256 base tokens,
    learned merges, and the three specials.  Training stops early when no
    adjacent pair occurs at least twice.  Ties between equally frequent
    pairs go to the lexicographically smaller (left bytes, right bytes).
    """
    corpus = list(corpus)
    if not corpus:
        raise CorpusEmptyError("cannot train a tokenizer on an empty corpus")
    n_specials = len(SPECIAL_NAMES)
    if target_vocab_size <= N_BASE + n_specials:
        raise ValueError(
            f"target_vocab_size must exceed {N_BASE + n_specials}, got {target_vocab_size}"
        )

    id_to_token = [bytes([i]) for i in range(N_BASE)]
    merges = []
    seqs = [list(text.encode("utf-8")) for text in corpus]

    while len(id_to_token) + n_specials < target_vocab_size:
        counts = Counter()
        for seq in seqs:
            for i in range(len(seq) - 1):
                counts[(seq[i], seq[i + 1])] += 1
        if not counts:
            break
        best_pair = min(
            counts,
            key=lambda p: (-counts[p], id_to_token[p[0]], id_to_token[p[1]]),
        )
        if counts[best_pair] < 2:
            break
        a, b = best_pair
        new_id = len(id_to_token)
        id_to_token.append(id_to_token[a] + id_to_token[b])
        merges.append((a, b))
        seqs = [_merge_pair(seq, a, b, new_id) for seq in seqs]

    specials = {
        name: len(id_to_token) + k for k, name in enumerate(SPECIAL_NAMES)
    }
    return Vocab(tuple(id_to_token), tuple(merges), specials)


def _apply_merges(v: Vocab, ids: list) -> list:
    ranks = {pair: i for i, pair in enumerate(v.merges)}
    while len(ids) >= 2:
        best_rank = None
        for i in range(len(ids) - 1):
            r = ranks.get((ids[i], ids[i + 1]))
            if r is not None and (best_rank is None or r < best_rank):
                best_rank = r
        if best_rank is None:
            break
        a, b = v.merges[best_rank]
        ids = _merge_pair(ids, a, b, N_BASE + best_rank)
    return ids


def encode(v: Vocab, s: str, wrap: str = "none") -> list:
    """Tokenize a string; ``wrap="bos_eos"`` adds the sequence delimiters.

    Merges apply in learned order, each rewriting every occurrence left
    to right, so encode(train corpus) reproduces the training segmentation.
    """
    if wrap not in ("none", "bos_eos"):
        raise ValueError(f"wrap must be 'none' or 'bos_eos', got {wrap!r}")
    ids = _apply_merges(v, list(s.encode("utf-8")))
    if wrap == "bos_eos":
        ids = [v.bos_id] + ids + [v.eos_id]
    return ids


def decode(v: Vocab, ids) -> str:
    """Invert :func:`encode`; special tokens render as the empty string."""
    special_ids = set(v.specials.values())
    chunks = []
    for t in ids:
        t = int(t)
        if t in special_ids:
            continue
        if not 0 <= t < len(v.id_to_token):
            raise InvalidTokenIdError(
                f"token id {t} out of range for vocabulary of size {v.size}"
            )
        chunks.append(v.id_to_token[t])
    return b"".join(chunks).decode("utf-8", errors="replace")


def save_vocab(v: Vocab, path) -> None:
    lines = [f"BPEVOCAB v1 {N_BASE} {len(v.merges)}"]
    for a, b in v.merges:
        lines.append(f"{v.id_to_token[a].hex()} {v.id_to_token[b].hex()}")
    for name in SPECIAL_NAMES:
        lines.append(f"SPECIAL {name} {v.specials[name]}")
    with open(path, "w", encoding="ascii") as f:
        f.write("\n".join(lines) + "\n")


def load_vocab(path) -> Vocab:
    with open(path, "r", encoding="ascii") as f:
        lines = [ln.rstrip("\n") for ln in f if ln.strip()]
    if not lines:
        raise UnknownFormatError(f"{path}: empty vocabulary file")
    header = lines[0].split()
    if len(header) != 4 or header[0] != "BPEVOCAB" or header[1] != "v1":
        raise UnknownFormatError(f"{path}: not a BPEVOCAB v1 file")
    try:
        base, n_merges = int(header[2]), int(header[3])
    except ValueError:
        raise UnknownFormatError(f"{path}: bad header counts") from None
    if base != N_BASE:
        raise UnknownFormatError(f"{path}: unsupported base size {base}")
    if len(lines) != 1 + n_merges + len(SPECIAL_NAMES):
        raise ParseError(f"{path}: expected {n_merges} merges and 3 specials")

    id_to_token = [bytes([i]) for i in range(N_BASE)]
    token_to_id = {tok: i for i, tok in enumerate(id_to_token)}
    merges = []
    for ln in lines[1 : 1 + n_merges]:
        parts = ln.split()
        if len(parts) != 2:
            raise ParseError(f"{path}: malformed merge line {ln!r}")
        try:
            left, right = bytes.fromhex(parts[0]), bytes.fromhex(parts[1])
        except ValueError:
            raise ParseError(f"{path}: bad hex in merge line {ln!r}") from None
        if left not in token_to_id or right not in token_to_id:
            raise ParseError(f"{path}: merge refers to unknown token: {ln!r}")
        a, b = token_to_id[left], token_to_id[right]
        merges.append((a, b))
        new_tok = left + right
        token_to_id[new_tok] = len(id_to_token)
        id_to_token.append(new_tok)

    specials = {}
    for ln in lines[1 + n_merges :]:
        parts = ln.split()
        if len(parts) != 3 or parts[0] != "SPECIAL" or parts[1] not in SPECIAL_NAMES:
            raise ParseError(f"{path}: malformed special line {ln!r}")
        specials[parts[1]] = int(parts[2])
    if set(specials) != set(SPECIAL_NAMES):
        raise ParseError(f"{path}: missing special token declarations")
    return Vocab(tuple(id_to_token), tuple(merges), specials)

"""Autoregressive generation conditioned on linearized dialog acts.

Each dialog act yields ``n_candidates`` realizations: the first decoded
greedily, the rest sampled top-k with a per-candidate seeded RNG.  Every
candidate is scored by slot error rate and the winner is the lowest-ERR
candidate, ties broken by higher mean token log-probability, then by
candidate index.  All candidates for all acts decode together in one
left-padded batch with per-row position offsets and cached attention
keys/values, which keeps per-step work to a few wide matrix products.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bpe import Vocab, decode, encode
from .dialog_act import DialogActSet, linearize
from .errors import ContextOverflowError
from .metrics import slot_error
from .model import DecodeSession, ModelParams


@dataclass(frozen=True)
class Greedy:
    pass


@dataclass(frozen=True)
class TopK:
    k: int = 20
    temperature: float = 1.0


@dataclass(frozen=True)
class Temperature:
    t: float = 1.0


@dataclass(frozen=True)
class DecodeConfig:
    n_candidates: int = 5
    max_new_tokens: int = 128
    top_k: int = 20
    temperature: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_candidates < 1:
            raise ValueError("n_candidates must be at least 1")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be at least 1")


@dataclass(frozen=True)
class Candidate:
    text: str
    token_logprob_mean: float
    err: float


def _log_softmax(row: np.ndarray) -> np.ndarray:
    shifted = row.astype(np.float64) - row.max()
    return shifted - np.log(np.exp(shifted).sum())


def select_next_token(logits: np.ndarray, strategy, rng) -> int:
    """Pick the next token id from a logits row under a strategy."""
    if isinstance(strategy, Greedy):
        return int(np.argmax(logits))
    if isinstance(strategy, Temperature):
        if strategy.t < 1e-6:
            return int(np.argmax(logits))
        logp = _log_softmax(logits / strategy.t)
        return int(rng.choice(len(logits), p=np.exp(logp)))
    if isinstance(strategy, TopK):
        k = min(strategy.k, len(logits))
        top = np.argsort(logits)[::-1][:k]
        scaled = logits[top] / max(strategy.temperature, 1e-6)
        logp = _log_softmax(scaled)
        return int(top[rng.choice(k, p=np.exp(logp))])
    raise TypeError(f"unknown decode strategy {strategy!r}")


def _candidate_rng(seed: int, da_index: int, cand_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, da_index, cand_index)))


def _generate_rows(params: ModelParams, v: Vocab, rows, max_new_tokens: int):
    """Decode many (prefix_ids, strategy, rng) rows in one batched session.

    Returns per row (token ids without specials, mean token logprob).
    The mean covers every emitted token including the terminating EOS.
    """
    cfg = params.config
    B = len(rows)
    prefix_lens = [len(r[0]) for r in rows]
    T0 = max(prefix_lens)
    longest = max(
        (pl + max_new_tokens for pl in prefix_lens), default=0
    )
    for pl in prefix_lens:
        if pl + 1 > cfg.max_context:
            raise ContextOverflowError(
                f"dialog-act prefix of {pl} tokens leaves no room to generate "
                f"within max_context {cfg.max_context}"
            )
    max_len = min(cfg.max_context, longest)
    budget = max_len - T0

    ids = np.full((B, T0), v.pad_id, dtype=np.int64)
    keep = np.zeros((B, T0), dtype=bool)
    pos = np.zeros((B, T0), dtype=np.int64)
    for b, (prefix, _, _) in enumerate(rows):
        L = len(prefix)
        ids[b, T0 - L :] = prefix
        keep[b, T0 - L :] = True
        pos[b, T0 - L :] = np.arange(L)

    sess = DecodeSession(params, batch_size=B, max_len=max_len)
    logits = sess.append(ids, pos, keep)

    out_ids = [[] for _ in range(B)]
    logprob_sums = np.zeros(B)
    counts = np.zeros(B, dtype=int)
    done = np.zeros(B, dtype=bool)
    next_pos = np.array(prefix_lens, dtype=np.int64)

    for step in range(budget):
        step_ids = np.zeros(B, dtype=np.int64)
        for b in range(B):
            if done[b]:
                continue
            _, strategy, rng = rows[b]
            tok = select_next_token(logits[b], strategy, rng)
            step_ids[b] = tok
            logprob_sums[b] += _log_softmax(logits[b])[tok]
            counts[b] += 1
            if tok == v.eos_id:
                done[b] = True
            else:
                out_ids[b].append(tok)
        if done.all() or step == budget - 1:
            break
        # finished rows feed an inert masked column; position 0 is arbitrary
        feed_pos = np.where(done, 0, next_pos)
        logits = sess.append(
            step_ids.reshape(B, 1),
            feed_pos.reshape(B, 1),
            (~done).reshape(B, 1),
        )
        next_pos = next_pos + 1

    means = [logprob_sums[b] / counts[b] if counts[b] else 0.0 for b in range(B)]
    return [(out_ids[b], float(means[b])) for b in range(B)]


def _prefix_ids(acts: DialogActSet, v: Vocab) -> list:
    return encode(v, linearize(acts)) + [v.bos_id]


def generate_one(
    params: ModelParams,
    v: Vocab,
    acts: DialogActSet,
    strategy=Greedy(),
    rng: np.random.Generator | None = None,
    max_new_tokens: int = 128,
) -> Candidate:
    """Decode a single realization of one dialog act."""
    rows = [(_prefix_ids(acts, v), strategy, rng)]
    (token_ids, mean_lp), = _generate_rows(params, v, rows, max_new_tokens)
    text = decode(v, token_ids)
    return Candidate(text, mean_lp, slot_error(acts, text).err)


def pick_best(candidates) -> int:
    """Index of the lowest-ERR candidate; ties to higher mean logprob,
    then to the earlier candidate."""
    return min(
        range(len(candidates)),
        key=lambda i: (candidates[i].err, -candidates[i].token_logprob_mean, i),
    )


def generate_candidates(
    params: ModelParams,
    v: Vocab,
    acts_list,
    cfg: DecodeConfig,
) -> list:
    """All candidates for many dialog acts, decoded as one batch.

    Returns one list of ``cfg.n_candidates`` :class:`Candidate` per act.
    Candidate 0 is greedy; the rest are top-k samples whose RNG streams
    depend only on (seed, act index, candidate index).  Re-running the
    same call is bitwise deterministic; decoding an act alone reproduces
    its batched candidates up to float32 accumulation order.
    """
    acts_list = list(acts_list)
    rows = []
    for i, acts in enumerate(acts_list):
        prefix = _prefix_ids(acts, v)
        for j in range(cfg.n_candidates):
            if j == 0:
                rows.append((prefix, Greedy(), None))
            else:
                rows.append(
                    (
                        prefix,
                        TopK(cfg.top_k, cfg.temperature),
                        _candidate_rng(cfg.seed, i, j),
                    )
                )
    decoded = _generate_rows(params, v, rows, cfg.max_new_tokens)
    out = []
    for i, acts in enumerate(acts_list):
        cands = []
        for j in range(cfg.n_candidates):
            token_ids, mean_lp = decoded[i * cfg.n_candidates + j]
            text = decode(v, token_ids)
            cands.append(Candidate(text, mean_lp, slot_error(acts, text).err))
        out.append(cands)
    return out


def generate_reranked(
    params: ModelParams, v: Vocab, acts: DialogActSet, cfg: DecodeConfig
) -> Candidate:
    """Generate n candidates for one act and return the lowest-ERR one."""
    candidates = generate_candidates(params, v, [acts], cfg)[0]
    return candidates[pick_best(candidates)]


def generate_corpus(
    params: ModelParams, v: Vocab, acts_list, cfg: DecodeConfig
) -> list:
    """Reranked winner for every act, decoded in one batch."""
    return [
        cands[pick_best(cands)]
        for cands in generate_candidates(params, v, acts_list, cfg)
    ]

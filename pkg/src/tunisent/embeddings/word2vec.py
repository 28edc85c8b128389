"""Word2vec trained from scratch with negative sampling (skip-gram or CBOW)."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Iterable

import numpy as np
import torch

from ..corpus import LabeledDataset
from ..textproc import token_surfaces
from .static import PAD_TOKEN, UNK_TOKEN, EmbeddingMatrix, Vocabulary, with_special_rows

log = logging.getLogger(__name__)

ALGORITHMS = ("skipgram", "cbow")


class EmptyCorpus(ValueError):
    pass


class InvalidHyperparameter(ValueError):
    pass


@dataclass(frozen=True)
class Word2VecParams:
    dim: int = 300
    window: int = 5
    epochs: int = 5
    algorithm: str = "skipgram"
    negative: int = 5
    min_count: int = 1
    learning_rate: float = 0.025
    batch_size: int = 512
    seed: int = 42

    def validate(self) -> None:
        for name in ("dim", "window", "epochs", "negative", "min_count", "batch_size"):
            if getattr(self, name) < 1:
                raise InvalidHyperparameter(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.algorithm not in ALGORITHMS:
            raise InvalidHyperparameter(f"algorithm must be one of {ALGORITHMS}")
        if not self.learning_rate > 0:
            raise InvalidHyperparameter("learning_rate must be positive")


def _sentences(corpus) -> list[list[str]]:
    if isinstance(corpus, LabeledDataset):
        texts: Iterable = (c.text for c in corpus.comments)
    else:
        texts = corpus
    out = []
    for item in texts:
        out.append(token_surfaces(item) if isinstance(item, str) else list(item))
    return out


def build_vocab(sentences: list[list[str]], min_count: int) -> tuple[list[str], np.ndarray]:
    """Tokens with count >= min_count, most frequent first (ties broken by token)."""
    counts = Counter(t for s in sentences for t in s if t not in (PAD_TOKEN, UNK_TOKEN))
    kept = sorted((t for t, n in counts.items() if n >= min_count), key=lambda t: (-counts[t], t))
    return kept, np.array([counts[t] for t in kept], dtype=np.float64)


def _flatten(sentences, index: dict[str, int]) -> tuple[np.ndarray, np.ndarray]:
    ids, sent = [], []
    for s_id, sentence in enumerate(sentences):
        for tok in sentence:
            i = index.get(tok)
            if i is not None:
                ids.append(i)
                sent.append(s_id)
    return np.array(ids, dtype=np.int64), np.array(sent, dtype=np.int64)


def _skipgram_pairs(ids, sent, window, rng) -> tuple[np.ndarray, np.ndarray]:
    # word2vec's shrunk window: each center samples an effective radius in [1, window]
    radius = rng.integers(1, window + 1, size=len(ids))
    centers, contexts = [], []
    for d in range(1, window + 1):
        same = sent[d:] == sent[:-d]
        left = np.nonzero(same & (radius[:-d] >= d))[0]
        centers.append(ids[left])
        contexts.append(ids[left + d])
        right = np.nonzero(same & (radius[d:] >= d))[0] + d
        centers.append(ids[right])
        contexts.append(ids[right - d])
    centers = np.concatenate(centers)
    contexts = np.concatenate(contexts)
    order = rng.permutation(len(centers))
    return centers[order], contexts[order]


def _cbow_examples(ids, sent, window, rng) -> tuple[np.ndarray, np.ndarray]:
    radius = rng.integers(1, window + 1, size=len(ids))
    n = len(ids)
    ctx = np.full((n, 2 * window), -1, dtype=np.int64)
    for d in range(1, window + 1):
        before = np.arange(d, n)
        ok = (sent[before] == sent[before - d]) & (radius[before] >= d)
        ctx[before[ok], 2 * (d - 1)] = ids[before[ok] - d]
        after = np.arange(0, n - d)
        ok = (sent[after] == sent[after + d]) & (radius[after] >= d)
        ctx[after[ok], 2 * (d - 1) + 1] = ids[after[ok] + d]
    has_ctx = (ctx >= 0).any(axis=1)
    targets, ctx = ids[has_ctx], ctx[has_ctx]
    order = rng.permutation(len(targets))
    return targets[order], ctx[order]


def _sgns_loss(hidden, out_emb, targets, negatives):
    pos = torch.nn.functional.logsigmoid((hidden * out_emb(targets)).sum(-1))
    neg_scores = torch.bmm(out_emb(negatives), hidden.unsqueeze(-1)).squeeze(-1)
    neg = torch.nn.functional.logsigmoid(-neg_scores).sum(-1)
    return -(pos + neg).sum()


def train_word2vec(
    corpus: LabeledDataset | Iterable,
    dim: int = 300,
    window: int = 5,
    epochs: int = 5,
    algorithm: str = "skipgram",
    **kwargs,
) -> tuple[Vocabulary, EmbeddingMatrix]:
    """Train word vectors on ``corpus`` (a dataset, raw texts or token lists).

    Extra keyword arguments are :class:`Word2VecParams` fields. Updates are
    plain SGD on the summed negative-sampling loss of each mini-batch, with
    the learning rate decaying linearly to zero as in the reference tool.
    The result is bitwise reproducible for a fixed seed on one machine.
    """
    params = Word2VecParams(dim=dim, window=window, epochs=epochs, algorithm=algorithm, **kwargs)
    params.validate()
    sentences = _sentences(corpus)
    tokens, counts = build_vocab(sentences, params.min_count)
    if not tokens:
        raise EmptyCorpus("corpus has no tokens at or above min_count")

    index = {t: i for i, t in enumerate(tokens)}
    ids, sent = _flatten(sentences, index)
    rng = np.random.default_rng(params.seed)
    gen = torch.Generator().manual_seed(params.seed)

    v = len(tokens)
    in_emb = torch.nn.Embedding(v, params.dim, sparse=True)
    out_emb = torch.nn.Embedding(v, params.dim, sparse=True)
    with torch.no_grad():
        in_emb.weight.copy_((torch.rand(v, params.dim, generator=gen) - 0.5) / params.dim)
        out_emb.weight.zero_()
    noise = torch.from_numpy(counts**0.75)
    noise /= noise.sum()
    optimizer = torch.optim.SGD(list(in_emb.parameters()) + list(out_emb.parameters()), lr=params.learning_rate)

    make = _skipgram_pairs if params.algorithm == "skipgram" else _cbow_examples
    step, expected_steps = 0, None
    for epoch in range(params.epochs):
        first, second = make(ids, sent, params.window, rng)
        if expected_steps is None:
            # epochs differ slightly in size; the first one sets the decay horizon
            expected_steps = max(1, params.epochs * -(-len(first) // params.batch_size))
        total = 0.0
        for lo in range(0, len(first), params.batch_size):
            if params.algorithm == "skipgram":
                hidden = in_emb(torch.from_numpy(first[lo : lo + params.batch_size]))
                targets = torch.from_numpy(second[lo : lo + params.batch_size])
            else:
                targets = torch.from_numpy(first[lo : lo + params.batch_size])
                ctx = torch.from_numpy(second[lo : lo + params.batch_size])
                present = (ctx >= 0).unsqueeze(-1).float()
                summed = (in_emb(ctx.clamp(min=0)) * present).sum(1)
                hidden = summed / present.sum(1)
            negatives = torch.multinomial(
                noise, targets.numel() * params.negative, replacement=True, generator=gen
            ).view(-1, params.negative)
            lr = params.learning_rate * max(1e-4, 1.0 - step / expected_steps)
            for group in optimizer.param_groups:
                group["lr"] = lr
            optimizer.zero_grad()
            loss = _sgns_loss(hidden, out_emb, targets, negatives)
            loss.backward()
            optimizer.step()
            total += loss.item()
            step += 1
        log.info("word2vec epoch %d/%d: loss %.4f over %d examples", epoch + 1, params.epochs, total, len(first))

    rows = in_emb.weight.detach().numpy()
    vocab, matrix = with_special_rows(tokens, rows)
    matrix.meta = {"provider": "word2vec_self", "n_tokens": int(len(ids)), **asdict(params)}
    return vocab, matrix

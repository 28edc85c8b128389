"""Contextual subword representations from a multilingual BERT-style checkpoint.

The checkpoint directory must hold a ``vocab.txt`` WordPiece vocabulary and
weights loadable by ``transformers``. The encoder is frozen: it only ever
runs in inference mode.
"""

from __future__ import annotations

import enum
import json
import logging
import os
import unicodedata
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .static import SequenceEncoding

log = logging.getLogger(__name__)

MODEL_DIR_ENV = "TUNISENT_MODEL_DIR"


class ProviderUnavailable(RuntimeError):
    pass


class EmbeddingSource(str, enum.Enum):
    EMBEDDING_LAYER_ONLY = "embedding_layer_only"
    FULL_ENCODER = "full_encoder"


def _is_punct(ch: str) -> bool:
    cp = ord(ch)
    # BERT treats all non-alphanumeric ASCII as punctuation
    if 33 <= cp <= 47 or 58 <= cp <= 64 or 91 <= cp <= 96 or 123 <= cp <= 126:
        return True
    return unicodedata.category(ch).startswith("P")


def _strip_accents(text: str) -> str:
    return "".join(c for c in unicodedata.normalize("NFD", text) if unicodedata.category(c) != "Mn")


class WordPieceTokenizer:
    """Greedy longest-match-first WordPiece.

    Unlike the stock BERT tokenizer, a word is never collapsed into a single
    unknown piece: when no vocabulary entry starts at some position, that one
    character becomes its own piece (or the unknown piece if even the
    character is missing) and matching resumes after it.
    """

    def __init__(
        self,
        vocab: Sequence[str],
        *,
        lowercase: bool = False,
        unk_token: str = "[UNK]",
        cls_token: str = "[CLS]",
        sep_token: str = "[SEP]",
        pad_token: str = "[PAD]",
        prefix: str = "##",
        max_chars_per_word: int = 100,
    ):
        self.vocab = {tok: i for i, tok in enumerate(vocab)}
        for special in (unk_token, cls_token, sep_token, pad_token):
            if special not in self.vocab:
                raise ValueError(f"vocabulary lacks special token {special}")
        self.lowercase = lowercase
        self.unk_token, self.cls_token, self.sep_token, self.pad_token = unk_token, cls_token, sep_token, pad_token
        self.prefix = prefix
        self.max_chars_per_word = max_chars_per_word
        self._longest = max(len(t) for t in self.vocab)

    @classmethod
    def from_file(cls, path: str | Path, **kwargs) -> "WordPieceTokenizer":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return cls([line.rstrip("\r") for line in lines], **kwargs)

    @property
    def pad_id(self) -> int:
        return self.vocab[self.pad_token]

    def basic_split(self, text: str) -> list[list[str]]:
        """Words per whitespace token, with punctuation split off as separate words."""
        groups = []
        for chunk in text.split():
            if self.lowercase:
                chunk = _strip_accents(chunk.lower())
            words, current = [], []
            for ch in chunk:
                if _is_punct(ch):
                    if current:
                        words.append("".join(current))
                        current = []
                    words.append(ch)
                elif unicodedata.category(ch) in ("Cc", "Cf") or ch == "�":
                    continue
                else:
                    current.append(ch)
            if current:
                words.append("".join(current))
            groups.append(words)
        return groups

    def wordpiece(self, word: str) -> list[str]:
        if len(word) > self.max_chars_per_word:
            return [self._char_piece(ch, i > 0) for i, ch in enumerate(word)]
        pieces = []
        start = 0
        while start < len(word):
            end = min(len(word), start + self._longest)
            piece = None
            while end > start:
                candidate = word[start:end]
                if start > 0:
                    candidate = self.prefix + candidate
                if candidate in self.vocab:
                    piece = candidate
                    break
                end -= 1
            if piece is None:
                piece = self._char_piece(word[start], start > 0)
                end = start + 1
            pieces.append(piece)
            start = end
        return pieces

    def _char_piece(self, ch: str, continuation: bool) -> str:
        candidate = self.prefix + ch if continuation else ch
        return candidate if candidate in self.vocab else self.unk_token

    def tokenize_words(self, text: str) -> list[list[str]]:
        """Pieces grouped by whitespace token; every group is non-empty."""
        out = []
        for words in self.basic_split(text):
            pieces = [p for w in words for p in self.wordpiece(w)]
            # a token made only of dropped control characters still gets a piece
            out.append(pieces or [self.unk_token])
        return out

    def tokenize(self, text: str) -> list[str]:
        return [p for group in self.tokenize_words(text) for p in group]

    def encode(self, text: str, max_len: int) -> tuple[list[int], list[bool]]:
        if max_len < 2:
            raise ValueError("max_len must leave room for the two boundary pieces")
        pieces = self.tokenize(text)[: max_len - 2]
        ids = [self.vocab[self.cls_token]] + [self.vocab[p] for p in pieces] + [self.vocab[self.sep_token]]
        n = len(ids)
        return ids + [self.pad_id] * (max_len - n), [True] * n + [False] * (max_len - n)


def resolve_model_dir(path: str | Path | None = None) -> Path:
    if path is None:
        path = os.environ.get(MODEL_DIR_ENV)
        if not path:
            raise ProviderUnavailable(f"no contextual checkpoint given and ${MODEL_DIR_ENV} is unset")
    path = Path(path)
    if not (path / "vocab.txt").is_file() or not (path / "config.json").is_file():
        raise ProviderUnavailable(f"{path} is not a checkpoint directory (needs vocab.txt and config.json)")
    return path


class ContextualProvider:
    """Frozen multilingual encoder plus its WordPiece tokenizer."""

    def __init__(
        self,
        model_dir: str | Path | None = None,
        mode: EmbeddingSource | str = EmbeddingSource.FULL_ENCODER,
        device: str = "cpu",
    ):
        self.model_dir = resolve_model_dir(model_dir)
        self.mode = EmbeddingSource(mode)
        self.device = torch.device(device)
        lowercase = False
        tok_cfg = self.model_dir / "tokenizer_config.json"
        if tok_cfg.is_file():
            lowercase = bool(json.loads(tok_cfg.read_text(encoding="utf-8")).get("do_lower_case", False))
        self.tokenizer = WordPieceTokenizer.from_file(self.model_dir / "vocab.txt", lowercase=lowercase)
        try:
            from transformers import AutoModel
            from transformers.utils import logging as hf_logging

            hf_logging.disable_progress_bar()
            self.model = AutoModel.from_pretrained(str(self.model_dir), local_files_only=True)
        except (OSError, ValueError) as exc:
            raise ProviderUnavailable(f"cannot load checkpoint from {self.model_dir}: {exc}") from exc
        self.model.to(self.device).eval().requires_grad_(False)
        self.hidden_dim = int(self.model.config.hidden_size)
        if len(self.tokenizer.vocab) > self.model.get_input_embeddings().num_embeddings:
            raise ProviderUnavailable("vocab.txt is larger than the model's embedding matrix")

    def describe(self) -> dict:
        return {"model_dir": str(self.model_dir), "mode": self.mode.value, "hidden_dim": self.hidden_dim}

    @torch.no_grad()
    def encode_batch(self, texts: Sequence[str], max_len: int) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Return (ids, mask, vectors) with shapes (B, L), (B, L), (B, L, hidden)."""
        encoded = [self.tokenizer.encode(t, max_len) for t in texts]
        ids = torch.tensor([e[0] for e in encoded], dtype=torch.long, device=self.device).view(len(texts), max_len)
        mask = torch.tensor([e[1] for e in encoded], dtype=torch.bool, device=self.device).view(len(texts), max_len)
        if self.mode is EmbeddingSource.EMBEDDING_LAYER_ONLY:
            vectors = self.model.get_input_embeddings()(ids)
        else:
            vectors = self.model(input_ids=ids, attention_mask=mask.long()).last_hidden_state
        vectors = vectors * mask.unsqueeze(-1)
        return ids, mask, vectors.float()


def encode_contextual(text: str, provider: ContextualProvider, max_len: int = 128) -> SequenceEncoding:
    """Encode one text as ``[CLS] pieces [SEP]`` padded to ``max_len`` pieces."""
    ids, mask, vectors = provider.encode_batch([text], max_len)
    return SequenceEncoding(ids[0].cpu().numpy(), mask[0].cpu().numpy(), vectors[0].cpu().numpy())

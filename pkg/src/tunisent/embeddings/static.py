"""Static word embeddings: vocabulary, matrices, word-vector files and lookup."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..textproc import Token

log = logging.getLogger(__name__)

PAD, UNK = 0, 1
PAD_TOKEN, UNK_TOKEN = "<pad>", "<unk>"

VOCAB_FILE = "vocab.txt"
MATRIX_FILE = "matrix.f32"
META_FILE = "meta.json"


class EmbeddingError(Exception):
    pass


class FormatError(EmbeddingError):
    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} (byte offset {offset})")


class DimensionMismatch(EmbeddingError):
    pass


class Vocabulary:
    """Dense token -> index map with PAD at 0 and UNK at 1."""

    def __init__(self, tokens: Iterable[str] = ()):
        self._itos: list[str] = [PAD_TOKEN, UNK_TOKEN]
        self._stoi: dict[str, int] = {PAD_TOKEN: PAD, UNK_TOKEN: UNK}
        for tok in tokens:
            self.add(tok)

    def add(self, token: str) -> int:
        if token not in self._stoi:
            if not token or any(c in token for c in "\n\r"):
                raise ValueError(f"token cannot be stored in a vocabulary: {token!r}")
            self._stoi[token] = len(self._itos)
            self._itos.append(token)
        return self._stoi[token]

    def __len__(self) -> int:
        return len(self._itos)

    def __contains__(self, token: str) -> bool:
        return token in self._stoi

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self._itos == other._itos

    def index(self, token: str) -> int:
        # a literal pad string in text is still a real token
        i = self._stoi.get(token, UNK)
        return UNK if i == PAD else i

    def token(self, index: int) -> str:
        return self._itos[index]

    @property
    def tokens(self) -> list[str]:
        return list(self._itos)

    def save(self, path: str | Path) -> None:
        Path(path).write_text("".join(t + "\n" for t in self._itos), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if lines[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise EmbeddingError(f"{path}: vocabulary must start with {PAD_TOKEN}, {UNK_TOKEN}")
        vocab = cls(lines[2:])
        if len(vocab) != len(lines):
            raise EmbeddingError(f"{path}: duplicate tokens in vocabulary file")
        return vocab


@dataclass
class EmbeddingMatrix:
    vectors: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        if self.vectors.ndim != 2:
            raise DimensionMismatch(f"embedding matrix must be 2-D, got shape {self.vectors.shape}")
        if not np.isfinite(self.vectors).all():
            raise EmbeddingError("embedding matrix contains non-finite values")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.vectors.shape[0]


@dataclass
class SequenceEncoding:
    """A fixed-length, right-padded encoding of one text."""

    indices: np.ndarray
    mask: np.ndarray
    vectors: np.ndarray | None = None

    @property
    def max_len(self) -> int:
        return len(self.indices)

    @property
    def n_real(self) -> int:
        return int(self.mask.sum())


def with_special_rows(vocab_tokens: Sequence[str], rows: np.ndarray) -> tuple[Vocabulary, EmbeddingMatrix]:
    """Prepend a zero PAD row and a mean-vector UNK row to ``rows``."""
    vocab = Vocabulary(vocab_tokens)
    if len(vocab) != len(vocab_tokens) + 2:
        raise EmbeddingError("duplicate or reserved tokens among embedding rows")
    rows = np.asarray(rows, dtype=np.float32)
    unk = rows.mean(axis=0) if len(rows) else np.zeros(rows.shape[1], np.float32)
    matrix = np.vstack([np.zeros((1, rows.shape[1]), np.float32), unk[None, :], rows])
    return vocab, EmbeddingMatrix(matrix)


def save_embeddings(directory: str | Path, vocab: Vocabulary, matrix: EmbeddingMatrix) -> Path:
    """Write ``vocab.txt``, a little-endian float32 matrix and a JSON sidecar."""
    if len(vocab) != len(matrix):
        raise DimensionMismatch(f"vocabulary has {len(vocab)} entries, matrix {len(matrix)} rows")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    vocab.save(directory / VOCAB_FILE)
    matrix.vectors.astype("<f4").tofile(directory / MATRIX_FILE)
    meta = {"count": len(matrix), "dim": matrix.dim, **matrix.meta}
    (directory / META_FILE).write_text(json.dumps(meta, indent=2, sort_keys=True), encoding="utf-8")
    return directory


def load_embeddings(directory: str | Path) -> tuple[Vocabulary, EmbeddingMatrix]:
    directory = Path(directory)
    meta = json.loads((directory / META_FILE).read_text(encoding="utf-8"))
    vocab = Vocabulary.load(directory / VOCAB_FILE)
    flat = np.fromfile(directory / MATRIX_FILE, dtype="<f4")
    count, dim = meta["count"], meta["dim"]
    if flat.size != count * dim or len(vocab) != count:
        raise DimensionMismatch(
            f"{directory}: expected {count}x{dim} floats and {count} tokens, "
            f"found {flat.size} floats and {len(vocab)} tokens"
        )
    extra = {k: v for k, v in meta.items() if k not in ("count", "dim")}
    return vocab, EmbeddingMatrix(flat.reshape(count, dim).astype(np.float32), extra)


def _parse_header(line: bytes, offset: int) -> tuple[int, int]:
    parts = line.split()
    if len(parts) != 2:
        raise FormatError("header must be '<count> <dim>'", offset)
    try:
        count, dim = int(parts[0]), int(parts[1])
    except ValueError:
        raise FormatError("header must be '<count> <dim>'", offset) from None
    if count < 0 or dim < 1:
        raise FormatError(f"invalid header values count={count} dim={dim}", offset)
    return count, dim


def _is_binary(path: Path, data: bytes, body_start: int) -> bool:
    """Guess the layout from the suffix, falling back to a UTF-8 probe of the first row."""
    if path.suffix.lower() == ".bin":
        return True
    first = data[body_start:].split(b"\n", 1)[0]
    try:
        first.decode("utf-8")
    except UnicodeDecodeError:
        return True
    return False


def _read_text_rows(data: bytes, pos: int, count: int, dim: int):
    tokens, rows = [], []
    while len(rows) < count:
        if pos >= len(data):
            raise FormatError(f"file ends after {len(rows)} of {count} rows", pos)
        end = data.find(b"\n", pos)
        end = len(data) if end < 0 else end
        line = data[pos:end]
        if line.strip():
            try:
                parts = line.decode("utf-8").rstrip().split(" ")
            except UnicodeDecodeError:
                raise FormatError("row is not valid UTF-8", pos) from None
            if len(parts) - 1 != dim:
                raise DimensionMismatch(
                    f"row at byte {pos} has {len(parts) - 1} values, header says dim={dim}"
                )
            try:
                rows.append(np.array(parts[1:], dtype=np.float32))
            except ValueError:
                raise FormatError("row contains a non-numeric value", pos) from None
            tokens.append(parts[0])
        pos = end + 1
    if data[pos:].strip():
        raise FormatError(f"data beyond the {count} rows declared in the header", pos)
    return tokens, rows


def _read_binary_rows(data: bytes, pos: int, count: int, dim: int):
    width = 4 * dim
    tokens, rows = [], []
    for _ in range(count):
        while pos < len(data) and data[pos : pos + 1] in (b"\n", b" "):
            pos += 1
        space = data.find(b" ", pos)
        if space < 0 or space + 1 + width > len(data):
            raise FormatError(f"file ends after {len(rows)} of {count} rows", pos)
        try:
            tokens.append(data[pos:space].decode("utf-8"))
        except UnicodeDecodeError:
            raise FormatError("token is not valid UTF-8", pos) from None
        rows.append(np.frombuffer(data, dtype="<f4", count=dim, offset=space + 1).copy())
        pos = space + 1 + width
    if data[pos:].strip():
        raise DimensionMismatch(f"{len(data) - pos} bytes left after {count} rows of dim {dim}")
    return tokens, rows


def load_pretrained(path: str | Path, binary: bool | None = None) -> tuple[Vocabulary, EmbeddingMatrix]:
    """Load a word-vector file in the ``<count> <dim>`` header + rows format.

    Both the text layout and its binary sibling (raw little-endian float32
    rows) are accepted; ``binary=None`` picks binary for ``.bin`` files or
    when the first row is not UTF-8. The whole file is
    validated before a matrix is returned. Tokens repeated in the file keep
    their first vector.
    """
    path = Path(path)
    data = path.read_bytes()
    header_end = data.find(b"\n")
    if header_end < 0:
        raise FormatError("missing header line", 0)
    count, dim = _parse_header(data[:header_end], 0)
    if binary is None:
        binary = _is_binary(path, data, header_end + 1)
    reader = _read_binary_rows if binary else _read_text_rows
    tokens, rows = reader(data, header_end + 1, count, dim)

    seen: dict[str, int] = {}
    keep = []
    for i, tok in enumerate(tokens):
        if tok in seen or tok in (PAD_TOKEN, UNK_TOKEN):
            log.warning("skipping repeated or reserved token %r in %s", tok, path)
            continue
        seen[tok] = i
        keep.append(i)
    matrix_rows = np.vstack([rows[i] for i in keep]) if keep else np.zeros((0, dim), np.float32)
    if not np.isfinite(matrix_rows).all():
        raise FormatError("non-finite value in vectors", header_end + 1)
    vocab, matrix = with_special_rows([tokens[i] for i in keep], matrix_rows)
    matrix.meta = {"source": str(path), "binary": bool(binary)}
    return vocab, matrix


def encode_static(
    tokens: Sequence[Token | str],
    vocab: Vocabulary,
    matrix: EmbeddingMatrix | None,
    max_len: int,
) -> SequenceEncoding:
    """Map tokens to vocabulary rows, truncating or right-padding to ``max_len``.

    Unknown tokens map to UNK. Vectors are materialized when ``matrix`` is given.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    surfaces = [t.surface if isinstance(t, Token) else t for t in tokens][:max_len]
    indices = np.full(max_len, PAD, dtype=np.int64)
    indices[: len(surfaces)] = [vocab.index(s) for s in surfaces]
    mask = np.zeros(max_len, dtype=bool)
    mask[: len(surfaces)] = True
    vectors = None if matrix is None else matrix.vectors[indices]
    return SequenceEncoding(indices, mask, vectors)

"""Sentiment datasets: loading, Romanized filtering, train/test splits and statistics."""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .textproc import has_arabic

DEFAULT_SPLIT_SEED = 42

# exact Train/Test counts that reproduce the dataset statistics table
SPLIT_PRESETS = {
    "preset-tunizi": (8616, 1295),
    "preset-tsac-tunizi": (7379, 1817),
}

FORMATS = ("csv", "tsv", "jsonl")

_LABEL_ALIASES = {
    "positive": "positive",
    "pos": "positive",
    "1": "positive",
    "+1": "positive",
    "negative": "negative",
    "neg": "negative",
    "-1": "negative",
    "0": "negative",
}


class CorpusError(Exception):
    pass


class MissingFile(CorpusError, FileNotFoundError):
    pass


class EmptyDataset(CorpusError):
    pass


class InvalidSpec(CorpusError, ValueError):
    pass


class SchemaError(CorpusError):
    """Raised with the first offending rows as ``(row_number, reason)`` pairs."""

    max_reported = 10

    def __init__(self, problems: Sequence[tuple[int, str]], total: int | None = None):
        self.problems = list(problems)[: self.max_reported]
        self.total = len(problems) if total is None else total
        lines = [f"row {row}: {reason}" for row, reason in self.problems]
        if self.total > len(self.problems):
            lines.append(f"... {self.total - len(self.problems)} more")
        super().__init__("; ".join(lines))


class Label(str, enum.Enum):
    NEGATIVE = "negative"
    POSITIVE = "positive"

    @classmethod
    def parse(cls, value) -> "Label":
        if isinstance(value, Label):
            return value
        key = str(value).strip().lower()
        if key not in _LABEL_ALIASES:
            raise ValueError(f"unknown label {value!r}")
        return cls(_LABEL_ALIASES[key])

    @property
    def index(self) -> int:
        """Class index used by classifiers: 0 = negative, 1 = positive."""
        return 0 if self is Label.NEGATIVE else 1

    @classmethod
    def from_index(cls, i: int) -> "Label":
        return (cls.NEGATIVE, cls.POSITIVE)[int(i)]


class Split(str, enum.Enum):
    TRAIN = "train"
    TEST = "test"


@dataclass(frozen=True)
class Comment:
    id: str
    text: str
    label: Label | None = None

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError(f"comment {self.id!r} has empty text")
        if self.label is not None and not isinstance(self.label, Label):
            object.__setattr__(self, "label", Label.parse(self.label))


@dataclass(frozen=True)
class CorpusStats:
    n_words: int = 0
    n_unique_words: int = 0
    n_comments: int = 0
    n_negative: int = 0
    n_positive: int = 0
    n_train: int = 0
    n_test: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class LabeledDataset:
    name: str
    comments: tuple[Comment, ...]
    split: tuple[Split, ...] | None = None
    stats: CorpusStats = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "comments", tuple(self.comments))
        if self.split is not None:
            object.__setattr__(self, "split", tuple(Split(s) for s in self.split))
            if len(self.split) != len(self.comments):
                raise ValueError("split assignment length differs from number of comments")
        object.__setattr__(self, "stats", compute_stats(self))

    def __len__(self) -> int:
        return len(self.comments)

    @property
    def is_split(self) -> bool:
        return self.split is not None

    @property
    def fully_labeled(self) -> bool:
        return all(c.label is not None for c in self.comments)

    def part(self, which: Split) -> list[Comment]:
        if self.split is None:
            raise InvalidSpec(f"dataset {self.name!r} has not been split")
        return [c for c, s in zip(self.comments, self.split) if s is which]

    def train_comments(self) -> list[Comment]:
        return self.part(Split.TRAIN)

    def test_comments(self) -> list[Comment]:
        return self.part(Split.TEST)


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float | None = None
    n_train: int | None = None
    n_test: int | None = None
    seed: int = DEFAULT_SPLIT_SEED

    @classmethod
    def parse(cls, text: str, seed: int = DEFAULT_SPLIT_SEED) -> "SplitSpec":
        """Parse ``preset-tunizi``, ``preset-tsac-tunizi``, ``fraction:F`` or ``counts:TRAIN,TEST``."""
        if text in SPLIT_PRESETS:
            n_train, n_test = SPLIT_PRESETS[text]
            return cls(n_train=n_train, n_test=n_test, seed=seed)
        kind, _, arg = text.partition(":")
        try:
            if kind == "fraction":
                return cls(test_fraction=float(arg), seed=seed)
            if kind == "counts":
                n_train, n_test = (int(x) for x in arg.split(","))
                return cls(n_train=n_train, n_test=n_test, seed=seed)
        except ValueError as exc:
            raise InvalidSpec(f"bad split {text!r}: {exc}") from None
        raise InvalidSpec(f"unknown split {text!r}")

    def sizes(self, n: int) -> tuple[int, int]:
        """Return (n_train, n_test) for a dataset of ``n`` comments."""
        if self.test_fraction is not None:
            if self.n_train is not None or self.n_test is not None:
                raise InvalidSpec("give either a test fraction or explicit counts, not both")
            if not 0 < self.test_fraction < 1:
                raise InvalidSpec(f"test_fraction must lie in (0, 1), got {self.test_fraction}")
            # exact decimal arithmetic so that 0.29 * 100 floors to 29
            n_test = math.floor(Fraction(str(self.test_fraction)) * n)
            return n - n_test, n_test
        if self.n_train is None or self.n_test is None:
            raise InvalidSpec("split needs test_fraction or both n_train and n_test")
        if self.n_train < 0 or self.n_test < 0:
            raise InvalidSpec("split counts must be non-negative")
        if self.n_train + self.n_test != n:
            raise InvalidSpec(
                f"split counts {self.n_train}+{self.n_test} do not match dataset size {n}"
            )
        return self.n_train, self.n_test


def _rows_from_file(path: Path, fmt: str) -> Iterable[tuple[int, dict | None, str | None]]:
    """Yield (row_number, record, error) triples; row numbers count data rows from 1."""
    text = path.read_text(encoding="utf-8-sig")
    if fmt == "jsonl":
        for n, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                yield n, None, f"invalid JSON ({exc.msg})"
                continue
            if not isinstance(record, dict):
                yield n, None, "line is not a JSON object"
                continue
            yield n, record, None
        return
    reader = csv.reader(io.StringIO(text, newline=""), delimiter="," if fmt == "csv" else "\t")
    header = next(reader, None)
    if header is None:
        return
    header = [h.strip().lower() for h in header]
    if "text" not in header:
        raise SchemaError([(0, "header has no 'text' column")])
    for n, values in enumerate(reader, 1):
        if not values:
            continue
        if len(values) > len(header):
            yield n, None, f"expected {len(header)} fields, got {len(values)}"
            continue
        yield n, dict(zip(header, values)), None


def detect_format(path: str | Path) -> str:
    suffix = Path(path).suffix.lower().lstrip(".")
    if suffix in FORMATS:
        return suffix
    if suffix in ("txt", "json"):
        return "jsonl" if suffix == "json" else "tsv"
    raise CorpusError(f"cannot infer dataset format from {path}; pass format explicitly")


def load_dataset(
    path: str | Path,
    format: str | None = None,
    *,
    name: str | None = None,
    require_labels: bool = True,
    allow_empty: bool = False,
) -> LabeledDataset:
    """Read a CSV/TSV/JSONL dataset with ``id`` (optional), ``text`` and ``label`` fields.

    Malformed rows raise :class:`SchemaError` listing up to ten offenders.
    The returned dataset is unsplit.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"dataset file not found: {path}")
    fmt = format or detect_format(path)
    if fmt not in FORMATS:
        raise CorpusError(f"unsupported format {fmt!r}")

    comments: list[Comment] = []
    problems: list[tuple[int, str]] = []
    for n, record, error in _rows_from_file(path, fmt):
        if error is not None:
            problems.append((n, error))
            continue
        text = record.get("text")
        if not isinstance(text, str) or not text.strip():
            problems.append((n, "missing or empty text"))
            continue
        raw_label = record.get("label")
        label = None
        if raw_label is None or (isinstance(raw_label, str) and not raw_label.strip()):
            if require_labels:
                problems.append((n, "missing label"))
                continue
        else:
            try:
                label = Label.parse(raw_label)
            except ValueError as exc:
                problems.append((n, str(exc)))
                continue
        cid = record.get("id")
        cid = str(n) if cid is None or str(cid).strip() == "" else str(cid)
        comments.append(Comment(cid, text, label))
    if problems:
        raise SchemaError(problems)
    if not comments and not allow_empty:
        raise EmptyDataset(f"no comments in {path}")
    return LabeledDataset(name or path.stem, tuple(comments))


def write_dataset(dataset: LabeledDataset, path: str | Path, format: str | None = None) -> None:
    path = Path(path)
    fmt = format or detect_format(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        if fmt == "jsonl":
            for c in dataset.comments:
                record = {"id": c.id, "text": c.text, "label": None if c.label is None else c.label.value}
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")
            return
        writer = csv.writer(fh, delimiter="," if fmt == "csv" else "\t", lineterminator="\n")
        writer.writerow(["id", "text", "label"])
        for c in dataset.comments:
            writer.writerow([c.id, c.text, "" if c.label is None else c.label.value])


def filter_romanized(dataset: LabeledDataset) -> LabeledDataset:
    """Keep the comments that contain no Arabic-block codepoint, in order."""
    keep = [i for i, c in enumerate(dataset.comments) if not has_arabic(c.text)]
    split = None if dataset.split is None else tuple(dataset.split[i] for i in keep)
    return LabeledDataset(dataset.name, tuple(dataset.comments[i] for i in keep), split)


def split_dataset(dataset: LabeledDataset, spec: SplitSpec) -> LabeledDataset:
    """Randomly assign every comment to Train or Test.

    The permutation comes from a NumPy generator seeded with ``spec.seed``;
    the first ``n_test`` permuted positions form the Test split.
    """
    if not dataset.fully_labeled:
        raise InvalidSpec(f"dataset {dataset.name!r} has unlabeled comments")
    n = len(dataset)
    _, n_test = spec.sizes(n)
    perm = np.random.default_rng(spec.seed).permutation(n)
    split = [Split.TRAIN] * n
    for i in perm[:n_test]:
        split[i] = Split.TEST
    return LabeledDataset(dataset.name, dataset.comments, tuple(split))


def compute_stats(dataset: LabeledDataset, *, lowercase: bool = False) -> CorpusStats:
    """Corpus statistics over whitespace tokens of the raw text."""
    n_words = 0
    vocab: set[str] = set()
    for c in dataset.comments:
        words = c.text.lower().split() if lowercase else c.text.split()
        n_words += len(words)
        vocab.update(words)
    labels = [c.label for c in dataset.comments]
    split = dataset.split or ()
    return CorpusStats(
        n_words=n_words,
        n_unique_words=len(vocab),
        n_comments=len(dataset.comments),
        n_negative=labels.count(Label.NEGATIVE),
        n_positive=labels.count(Label.POSITIVE),
        n_train=sum(s is Split.TRAIN for s in split),
        n_test=sum(s is Split.TEST for s in split),
    )

"""Experiment grid: featurize comments, train a classifier, evaluate, write reports."""

from __future__ import annotations

import csv
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from . import metrics
from .corpus import Comment, Label, LabeledDataset, SplitSpec, load_dataset, split_dataset
from .embeddings.contextual import ContextualProvider, EmbeddingSource, ProviderUnavailable
from .embeddings.static import (
    EmbeddingMatrix,
    Vocabulary,
    encode_static,
    load_embeddings,
    load_pretrained,
    save_embeddings,
)
from .embeddings.word2vec import train_word2vec
from .models import (
    BiLstmConfig,
    CnnConfig,
    SentimentClassifier,
    build_bilstm,
    build_cnn,
    load_classifier,
    save_classifier,
)
from .textproc import tokenize

log = logging.getLogger(__name__)

EMBEDDINGS = ("word2vec_self", "pretrained_static", "contextual")
CLASSIFIERS = ("cnn", "bilstm")
REPORT_COLUMNS = ("embedding", "classifier", "dataset", "acc", "f1_micro", "f1_macro")


class TrainingError(RuntimeError):
    pass


class Divergence(TrainingError):
    pass


class EmptyTestSplit(TrainingError):
    pass


@dataclass(frozen=True)
class TrainSpec:
    """One grid cell. ``None`` fields are filled in by :meth:`resolved`."""

    embedding: str = "word2vec_self"
    classifier: str = "cnn"
    epochs: int = 3
    batch_size: int = 16
    seed: int = 42
    dataset: str = "TUNIZI"
    dataset_path: str | None = None
    dataset_format: str | None = None
    split: str = "fraction:0.2"
    split_seed: int = 42
    max_len: int | None = None
    filter_widths: tuple[int, ...] = (3, 4, 5)
    filters_per_width: int | None = None
    activation: str = "relu"
    hidden_size: int = 128
    dropout_rate: float = 0.5
    learning_rate: float = 1e-3
    pretrained_path: str | None = None
    contextual_path: str | None = None
    contextual_mode: str = EmbeddingSource.FULL_ENCODER.value
    w2v_dim: int = 300
    w2v_window: int = 5
    w2v_epochs: int = 5
    w2v_algorithm: str = "skipgram"
    w2v_negative: int = 5
    w2v_min_count: int = 1
    lowercase: bool = False
    dev_fraction: float = 0.0

    def __post_init__(self):
        if self.embedding not in EMBEDDINGS:
            raise ValueError(f"embedding must be one of {EMBEDDINGS}, got {self.embedding!r}")
        if self.classifier not in CLASSIFIERS:
            raise ValueError(f"classifier must be one of {CLASSIFIERS}, got {self.classifier!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not 0.0 <= self.dev_fraction < 1.0:
            raise ValueError(f"dev_fraction must be in [0, 1), got {self.dev_fraction}")
        object.__setattr__(self, "filter_widths", tuple(self.filter_widths))

    def resolved(self) -> "TrainSpec":
        """Materialize embedding-dependent defaults (filters, max_len, checkpoint path)."""
        changes = {}
        if self.filters_per_width is None:
            changes["filters_per_width"] = 200 if self.embedding == "word2vec_self" else 100
        if self.max_len is None:
            changes["max_len"] = 128 if self.embedding == "contextual" else 64
        if self.embedding == "contextual" and self.contextual_path is None:
            try:
                from .embeddings.contextual import resolve_model_dir

                changes["contextual_path"] = str(resolve_model_dir())
            except ProviderUnavailable:
                pass
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["filter_widths"] = list(self.filter_widths)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "TrainSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown TrainSpec fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path: str | Path) -> "TrainSpec":
        path = Path(path)
        if path.suffix.lower() == ".toml":
            try:
                import tomllib
            except ModuleNotFoundError:
                import tomli as tomllib
            data = tomllib.loads(path.read_text(encoding="utf-8"))
        else:
            data = json.loads(path.read_text(encoding="utf-8"))
        return cls.from_dict(data)


# -- featurizers ---------------------------------------------------------------


class StaticFeaturizer:
    """Word tokens looked up in a frozen static embedding matrix."""

    kind = "static"

    def __init__(self, vocab: Vocabulary, matrix: EmbeddingMatrix, max_len: int, lowercase: bool = False):
        self.vocab, self.matrix, self.max_len, self.lowercase = vocab, matrix, max_len, lowercase
        self._table = torch.from_numpy(matrix.vectors)

    @property
    def dim(self) -> int:
        return self.matrix.dim

    def __call__(self, texts: Sequence[str]) -> tuple[torch.Tensor, torch.Tensor]:
        if self.lowercase:
            texts = [t.lower() for t in texts]
        encs = [encode_static(tokenize(t), self.vocab, None, self.max_len) for t in texts]
        ids = torch.from_numpy(np.stack([e.indices for e in encs])) if encs else torch.zeros(0, self.max_len, dtype=torch.long)
        mask = torch.from_numpy(np.stack([e.mask for e in encs])) if encs else torch.zeros(0, self.max_len, dtype=torch.bool)
        return self._table[ids], mask

    def save(self, directory: Path) -> dict:
        save_embeddings(directory / "embeddings", self.vocab, self.matrix)
        return {"kind": self.kind, "max_len": self.max_len, "lowercase": self.lowercase, "path": "embeddings"}


class ContextualFeaturizer:
    kind = "contextual"

    def __init__(self, provider: ContextualProvider, max_len: int, lowercase: bool = False):
        self.provider, self.max_len, self.lowercase = provider, max_len, lowercase

    @property
    def dim(self) -> int:
        return self.provider.hidden_dim

    def __call__(self, texts: Sequence[str]) -> tuple[torch.Tensor, torch.Tensor]:
        texts = [t.lower() for t in texts] if self.lowercase else list(texts)
        _, mask, vectors = self.provider.encode_batch(texts, self.max_len)
        return vectors.cpu(), mask.cpu()

    def save(self, directory: Path) -> dict:
        return {"kind": self.kind, "max_len": self.max_len, "lowercase": self.lowercase, **self.provider.describe()}


def load_featurizer(directory: Path, info: dict):
    if info["kind"] == "static":
        vocab, matrix = load_embeddings(directory / info["path"])
        return StaticFeaturizer(vocab, matrix, info["max_len"], info.get("lowercase", False))
    model_dir = info.get("model_dir")
    provider = ContextualProvider(model_dir if model_dir and Path(model_dir).exists() else None, info["mode"])
    return ContextualFeaturizer(provider, info["max_len"], info.get("lowercase", False))


@dataclass
class SentimentModel:
    """A featurizer and a classifier trained on its output."""

    featurizer: StaticFeaturizer | ContextualFeaturizer
    classifier: SentimentClassifier
    spec: TrainSpec | None = None
    batch_size: int = 64

    @torch.no_grad()
    def predict_proba(self, texts: Sequence[str]) -> np.ndarray:
        out = []
        for lo in range(0, len(texts), self.batch_size):
            vectors, mask = self.featurizer(texts[lo : lo + self.batch_size])
            out.append(self.classifier.predict_proba(vectors, mask).numpy())
        return np.concatenate(out) if out else np.zeros((0, 2), np.float32)

    def predict(self, texts: Sequence[str]) -> list[Label]:
        return [Label.from_index(i) for i in self.predict_proba(texts).argmax(axis=1)]

    def save(self, directory: str | Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        training = {} if self.spec is None else self.spec.to_dict()
        save_classifier(self.classifier, directory / "classifier", max_len=self.featurizer.max_len, training=training)
        info = self.featurizer.save(directory)
        (directory / "featurizer.json").write_text(json.dumps(info, indent=2), encoding="utf-8")
        return directory

    @classmethod
    def load(cls, directory: str | Path) -> "SentimentModel":
        directory = Path(directory)
        if not (directory / "featurizer.json").is_file():
            raise FileNotFoundError(f"{directory} is not a model checkpoint")
        info = json.loads((directory / "featurizer.json").read_text(encoding="utf-8"))
        classifier, ckpt = load_classifier(directory / "classifier")
        spec = TrainSpec.from_dict(ckpt.training) if ckpt.training else None
        return cls(load_featurizer(directory, info), classifier, spec)


def build_featurizer(spec: TrainSpec, train_comments: Sequence[Comment]):
    """Create the input representation; word2vec sees only the Train split."""
    if spec.embedding == "word2vec_self":
        vocab, matrix = train_word2vec(
            [c.text.lower() if spec.lowercase else c.text for c in train_comments],
            dim=spec.w2v_dim,
            window=spec.w2v_window,
            epochs=spec.w2v_epochs,
            algorithm=spec.w2v_algorithm,
            negative=spec.w2v_negative,
            min_count=spec.w2v_min_count,
            seed=spec.seed,
        )
        return StaticFeaturizer(vocab, matrix, spec.max_len, spec.lowercase)
    if spec.embedding == "pretrained_static":
        if not spec.pretrained_path or not Path(spec.pretrained_path).is_file():
            raise ProviderUnavailable(f"pretrained vector file not found: {spec.pretrained_path}")
        vocab, matrix = load_pretrained(spec.pretrained_path)
        return StaticFeaturizer(vocab, matrix, spec.max_len, spec.lowercase)
    provider = ContextualProvider(spec.contextual_path, spec.contextual_mode)
    return ContextualFeaturizer(provider, spec.max_len, spec.lowercase)


def hold_out_dev(comments: Sequence[Comment], fraction: float, seed: int) -> tuple[list[Comment], list[Comment]]:
    """Split Train comments into (fit, dev); the dev size is floor(fraction * n)."""
    comments = list(comments)
    n_dev = int(Fraction(str(fraction)) * len(comments))
    if n_dev == 0:
        return comments, []
    if n_dev >= len(comments):
        raise TrainingError(f"dev_fraction {fraction} leaves no comments to train on")
    held = set(np.random.default_rng(seed).permutation(len(comments))[:n_dev].tolist())
    fit = [c for i, c in enumerate(comments) if i not in held]
    return fit, [c for i, c in enumerate(comments) if i in held]


def build_classifier(spec: TrainSpec, input_dim: int) -> SentimentClassifier:
    if spec.classifier == "cnn":
        config = CnnConfig(spec.filter_widths, spec.filters_per_width, spec.activation, "global_max", spec.dropout_rate)
        return build_cnn(config, input_dim, spec.max_len, seed=spec.seed)
    return build_bilstm(BiLstmConfig(spec.hidden_size, dropout_rate=spec.dropout_rate), input_dim, seed=spec.seed)


def batch_slices(n: int, batch_size: int, generator: torch.Generator) -> list[torch.Tensor]:
    order = torch.randperm(n, generator=generator)
    return [order[lo : lo + batch_size] for lo in range(0, n, batch_size)]


def train(
    spec: TrainSpec,
    dataset: LabeledDataset,
    *,
    featurizer=None,
    on_epoch: Callable[[dict], None] | None = None,
) -> tuple[SentimentModel, list[dict]]:
    """Mini-batch training on the Train split for exactly ``spec.epochs`` passes.

    Returns the trained model and one log record per epoch. The Test split
    is never read here. With ``spec.dev_fraction > 0`` a seeded slice of the
    Train split is held out and scored after every epoch (no early stopping).
    """
    spec = spec.resolved()
    comments, dev = hold_out_dev(dataset.train_comments(), spec.dev_fraction, spec.seed)
    if not comments:
        raise TrainingError("Train split is empty")
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(spec.seed)
        if featurizer is None:
            featurizer = build_featurizer(spec, comments)
        classifier = build_classifier(spec, featurizer.dim)
        optimizer = torch.optim.Adam(classifier.parameters(), lr=spec.learning_rate)
        loss_fn = torch.nn.CrossEntropyLoss()
        texts = [c.text for c in comments]
        targets = torch.tensor([c.label.index for c in comments])
        gen = torch.Generator().manual_seed(spec.seed)
        history = []
        for epoch in range(1, spec.epochs + 1):
            classifier.train()
            total, correct, sizes = 0.0, 0, []
            for idx in batch_slices(len(texts), spec.batch_size, gen):
                vectors, mask = featurizer([texts[i] for i in idx.tolist()])
                logits = classifier(vectors, mask)
                loss = loss_fn(logits, targets[idx])
                if not torch.isfinite(loss):
                    raise Divergence(f"non-finite loss at epoch {epoch}, batch {len(sizes) + 1}")
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                total += loss.item() * len(idx)
                correct += int((logits.argmax(1) == targets[idx]).sum())
                sizes.append(len(idx))
            record = {
                "epoch": epoch,
                "loss": total / len(texts),
                "train_accuracy": correct / len(texts),
                "batches": len(sizes),
                "batch_sizes": sizes,
            }
            if dev:
                dev_model = SentimentModel(featurizer, classifier, spec)
                hits = sum(p is c.label for p, c in zip(dev_model.predict([c.text for c in dev]), dev))
                record["dev_accuracy"] = hits / len(dev)
            log.info("epoch %d/%d loss %.4f acc %.4f", epoch, spec.epochs, record["loss"], record["train_accuracy"])
            history.append(record)
            if on_epoch:
                on_epoch(record)
    classifier.eval()
    return SentimentModel(featurizer, classifier, spec), history


# -- evaluation ------------------------------------------------------------------


@dataclass
class EvalReport:
    accuracy: float
    f1_micro: float
    f1_macro: float
    confusion: metrics.ConfusionMatrix
    spec: dict = field(default_factory=dict)
    dataset: str = ""
    n_test: int = 0
    split_seed: int | None = None
    wall_time: float = 0.0
    history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["confusion"] = self.confusion.to_dict()
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "EvalReport":
        data = dict(data)
        data["confusion"] = metrics.ConfusionMatrix.from_dict(data["confusion"])
        return cls(**data)

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, ensure_ascii=False), encoding="utf-8")
        return path


def report_from_predictions(gold, pred, **extra) -> EvalReport:
    cm = metrics.confusion_matrix(gold, pred)
    return EvalReport(
        accuracy=metrics.accuracy_from(cm),
        f1_micro=metrics.f1_micro_from(cm),
        f1_macro=metrics.f1_macro_from(cm),
        confusion=cm,
        n_test=cm.total,
        **extra,
    )


def evaluate(model, dataset: LabeledDataset, spec: TrainSpec | None = None) -> EvalReport:
    """Score every Test comment once with ``model.predict``."""
    start = time.perf_counter()
    comments = dataset.test_comments()
    if not comments:
        raise EmptyTestSplit(f"dataset {dataset.name!r} has an empty Test split")
    spec = spec or getattr(model, "spec", None)
    pred = model.predict([c.text for c in comments])
    return report_from_predictions(
        [c.label for c in comments],
        pred,
        spec={} if spec is None else spec.to_dict(),
        dataset=dataset.name,
        split_seed=None if spec is None else spec.split_seed,
        wall_time=time.perf_counter() - start,
    )


def prepare_dataset(spec: TrainSpec) -> LabeledDataset:
    if not spec.dataset_path:
        raise TrainingError("TrainSpec.dataset_path is not set")
    data = load_dataset(spec.dataset_path, spec.dataset_format, name=spec.dataset)
    return split_dataset(data, SplitSpec.parse(spec.split, spec.split_seed))


def report_path(root: str | Path, spec: TrainSpec) -> Path:
    return Path(root) / "reports" / spec.dataset / f"{spec.embedding}-{spec.classifier}.json"


def run_experiment(spec: TrainSpec, out_dir: str | Path, dataset: LabeledDataset | None = None) -> EvalReport:
    """Train and evaluate one grid cell, writing checkpoint, report and resolved config."""
    start = time.perf_counter()
    spec = spec.resolved()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.resolved.json").write_text(json.dumps(spec.to_dict(), indent=2), encoding="utf-8")
    dataset = dataset if dataset is not None else prepare_dataset(spec)
    model, history = train(spec, dataset)
    model.save(out_dir / "checkpoints" / spec.dataset / f"{spec.embedding}-{spec.classifier}")
    report = evaluate(model, dataset, spec)
    report.history = history
    report.wall_time = time.perf_counter() - start
    report.write(report_path(out_dir, spec))
    return report


# -- aggregation -------------------------------------------------------------------


def collect_reports(directory: str | Path) -> list[dict]:
    """One row per report JSON under ``directory``, sorted by path."""
    rows = []
    for path in sorted(Path(directory).rglob("*.json")):
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError):
            continue
        if not isinstance(data, dict) or not {"accuracy", "f1_micro", "f1_macro"} <= data.keys():
            continue
        spec = data.get("spec") or {}
        rows.append(
            {
                "embedding": spec.get("embedding", ""),
                "classifier": spec.get("classifier", ""),
                "dataset": data.get("dataset") or spec.get("dataset", ""),
                "acc": data["accuracy"],
                "f1_micro": data["f1_micro"],
                "f1_macro": data["f1_macro"],
                "source": str(path),
            }
        )
    return rows


def write_aggregate(rows: list[dict], out, warn=sys.stderr) -> None:
    """Write a results table; metrics are percentages with one decimal."""
    seen: dict[tuple, str] = {}
    for row in rows:
        key = (row["embedding"], row["classifier"], row["dataset"])
        if key in seen:
            print(f"warning: duplicate cell {key}: {seen[key]} and {row['source']}", file=warn)
        seen.setdefault(key, row["source"])
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for row in rows:
        writer.writerow(
            [row["embedding"], row["classifier"], row["dataset"]]
            + [f"{100 * row[k]:.1f}" for k in ("acc", "f1_micro", "f1_macro")]
        )


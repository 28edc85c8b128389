"""CNN and Bi-LSTM sentence classifiers over sequences of word/subword vectors.

Both take ``(vectors, mask)`` batches of shape ``(B, L, D)`` / ``(B, L)`` with
right padding and return 2-way logits ordered (negative, positive).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .embeddings.static import SequenceEncoding

MANIFEST_FILE = "manifest.json"
PARAMS_FILE = "params.f32"

ACTIVATIONS = {"relu": nn.ReLU, "tanh": nn.Tanh}


class InvalidConfig(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class CnnConfig:
    filter_widths: tuple[int, ...] = (3, 4, 5)
    filters_per_width: int = 100
    activation: str = "relu"
    pooling: str = "global_max"
    dropout_rate: float = 0.5

    def validate(self, max_len: int | None = None) -> None:
        if not self.filter_widths:
            raise InvalidConfig("filter_widths must not be empty")
        if any(w < 1 for w in self.filter_widths):
            raise InvalidConfig(f"filter widths must be >= 1: {self.filter_widths}")
        if max_len is not None and max(self.filter_widths) > max_len:
            raise InvalidConfig(f"filter width {max(self.filter_widths)} exceeds max_len {max_len}")
        if self.filters_per_width < 1:
            raise InvalidConfig("filters_per_width must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise InvalidConfig(f"activation must be one of {sorted(ACTIVATIONS)}")
        if self.pooling != "global_max":
            raise InvalidConfig("only global_max pooling is supported")
        if not 0 <= self.dropout_rate < 1:
            raise InvalidConfig("dropout_rate must lie in [0, 1)")


@dataclass(frozen=True)
class BiLstmConfig:
    hidden_size: int = 128
    merge: str = "concat_final_states"
    dropout_rate: float = 0.5

    def validate(self) -> None:
        if self.hidden_size < 1:
            raise InvalidConfig("hidden_size must be >= 1")
        if self.merge != "concat_final_states":
            raise InvalidConfig("only concat_final_states merging is supported")
        if not 0 <= self.dropout_rate < 1:
            raise InvalidConfig("dropout_rate must lie in [0, 1)")


class SentimentClassifier(nn.Module):
    architecture: str

    def __init__(self, input_dim: int, feature_dim: int, dropout_rate: float, seed: int):
        super().__init__()
        self.input_dim = input_dim
        self.seed = seed
        self.dropout = nn.Dropout(dropout_rate)
        self.output = nn.Linear(feature_dim, 2)

    @property
    def feature_dim(self) -> int:
        return self.output.in_features

    def features(self, vectors: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def forward(self, vectors: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        if vectors.shape[-1] != self.input_dim:
            raise DimensionMismatch(f"expected {self.input_dim}-dim vectors, got {vectors.shape[-1]}")
        return self.output(self.dropout(self.features(vectors, mask.bool())))

    @torch.no_grad()
    def predict_proba(self, vectors: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        was_training = self.training
        self.eval()
        try:
            return torch.softmax(self(vectors, mask), dim=-1)
        finally:
            self.train(was_training)

    def config_dict(self) -> dict:
        return asdict(self.config)


class CnnClassifier(SentimentClassifier):
    """Parallel convolution banks, one per filter width, with global max pooling.

    Each window starts at a real token. Windows that run off the end of the
    text see zero vectors, so appending padding never changes the output.
    """

    architecture = "cnn"

    def __init__(self, config: CnnConfig, input_dim: int, seed: int = 0):
        super().__init__(input_dim, len(config.filter_widths) * config.filters_per_width, config.dropout_rate, seed)
        self.config = config
        self.convs = nn.ModuleList(nn.Conv1d(input_dim, config.filters_per_width, w) for w in config.filter_widths)
        self.activation = ACTIVATIONS[config.activation]()

    def features(self, vectors, mask):
        # (B, D, L), padded positions zeroed
        x = (vectors * mask.unsqueeze(-1)).transpose(1, 2)
        n_real = mask.sum(1)
        pooled = []
        for conv, width in zip(self.convs, self.config.filter_widths):
            h = self.activation(conv(nn.functional.pad(x, (0, width - 1))))
            starts = torch.arange(h.shape[-1], device=h.device)
            # an empty text still keeps its first (all-zero) window
            valid = starts.unsqueeze(0) < n_real.clamp(min=1).unsqueeze(1)
            h = h.masked_fill(~valid.unsqueeze(1), float("-inf"))
            pooled.append(h.max(dim=-1).values)
        return torch.cat(pooled, dim=-1)


class BiLstmClassifier(SentimentClassifier):
    """One forward and one backward LSTM pass; final states concatenated."""

    architecture = "bilstm"

    def __init__(self, config: BiLstmConfig, input_dim: int, seed: int = 0):
        super().__init__(input_dim, 2 * config.hidden_size, config.dropout_rate, seed)
        self.config = config
        self.lstm = nn.LSTM(input_dim, config.hidden_size, batch_first=True, bidirectional=True)

    def features(self, vectors, mask):
        lengths = mask.sum(1).clamp(min=1).cpu()
        packed = nn.utils.rnn.pack_padded_sequence(vectors, lengths, batch_first=True, enforce_sorted=False)
        _, (h_n, _) = self.lstm(packed)
        return torch.cat([h_n[0], h_n[1]], dim=-1)


def _seeded(seed: int, build):
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return build()


def build_cnn(config: CnnConfig, input_dim: int, max_len: int | None = None, seed: int = 0) -> CnnClassifier:
    config.validate(max_len)
    if input_dim < 1:
        raise InvalidConfig("input_dim must be >= 1")
    return _seeded(seed, lambda: CnnClassifier(config, input_dim, seed))


def build_bilstm(config: BiLstmConfig, input_dim: int, seed: int = 0) -> BiLstmClassifier:
    config.validate()
    if input_dim < 1:
        raise InvalidConfig("input_dim must be >= 1")
    return _seeded(seed, lambda: BiLstmClassifier(config, input_dim, seed))


def predict(classifier: SentimentClassifier, encoding: SequenceEncoding) -> tuple[float, float]:
    """(p_negative, p_positive) for one encoded text, with dropout disabled."""
    if encoding.vectors is None:
        raise DimensionMismatch("encoding carries no vectors")
    if encoding.vectors.shape[-1] != classifier.input_dim:
        raise DimensionMismatch(
            f"classifier expects {classifier.input_dim}-dim vectors, encoding has {encoding.vectors.shape[-1]}"
        )
    dtype = next(classifier.parameters()).dtype
    vectors = torch.as_tensor(np.asarray(encoding.vectors), dtype=dtype).unsqueeze(0)
    mask = torch.as_tensor(np.asarray(encoding.mask), dtype=torch.bool).unsqueeze(0)
    p = classifier.predict_proba(vectors, mask)[0]
    return float(p[0]), float(p[1])


def parameter_count(classifier: nn.Module) -> int:
    return sum(p.numel() for p in classifier.parameters())


def expected_parameter_count(architecture: str, config, input_dim: int) -> int:
    """Closed-form parameter count, independent of any built module."""
    if architecture == "cnn":
        f = config.filters_per_width
        conv = sum(f * (input_dim * w + 1) for w in config.filter_widths)
        return conv + 2 * len(config.filter_widths) * f + 2
    if architecture == "bilstm":
        h = config.hidden_size
        per_direction = 4 * h * (input_dim + h) + 2 * 4 * h
        return 2 * per_direction + 2 * (2 * h) + 2
    raise InvalidConfig(f"unknown architecture {architecture!r}")


# -- checkpoints ---------------------------------------------------------------


@dataclass
class ClassifierCheckpoint:
    architecture: str
    config: dict
    input_dim: int
    seed: int
    max_len: int | None = None
    training: dict = field(default_factory=dict)


def save_classifier(classifier: SentimentClassifier, directory: str | Path, *, max_len=None, training=None) -> Path:
    """Write a JSON manifest and one little-endian float32 blob holding every parameter.

    The manifest lists each tensor's name, shape and element offset in the
    blob, in ``state_dict`` order.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tensors, offset = [], 0
    with (directory / PARAMS_FILE).open("wb") as fh:
        for name, tensor in classifier.state_dict().items():
            arr = tensor.detach().cpu().numpy().astype("<f4")
            fh.write(arr.tobytes())
            tensors.append({"name": name, "shape": list(arr.shape), "offset": offset})
            offset += arr.size
    manifest = {
        "architecture": classifier.architecture,
        "config": classifier.config_dict(),
        "input_dim": classifier.input_dim,
        "seed": classifier.seed,
        "max_len": max_len,
        "training": training or {},
        "dtype": "float32",
        "byte_order": "little",
        "tensors": tensors,
    }
    (directory / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return directory


def load_classifier(directory: str | Path) -> tuple[SentimentClassifier, ClassifierCheckpoint]:
    directory = Path(directory)
    manifest = json.loads((directory / MANIFEST_FILE).read_text(encoding="utf-8"))
    arch, cfg = manifest["architecture"], manifest["config"]
    if arch == "cnn":
        cfg["filter_widths"] = tuple(cfg["filter_widths"])
        model = build_cnn(CnnConfig(**cfg), manifest["input_dim"], seed=manifest["seed"])
    elif arch == "bilstm":
        model = build_bilstm(BiLstmConfig(**cfg), manifest["input_dim"], seed=manifest["seed"])
    else:
        raise InvalidConfig(f"unknown architecture {arch!r} in {directory}")
    flat = np.fromfile(directory / PARAMS_FILE, dtype="<f4")
    state = {}
    for entry in manifest["tensors"]:
        size = int(np.prod(entry["shape"], dtype=np.int64))
        chunk = flat[entry["offset"] : entry["offset"] + size]
        if chunk.size != size:
            raise DimensionMismatch(f"{directory}: parameter blob too short for {entry['name']}")
        state[entry["name"]] = torch.from_numpy(chunk.reshape(entry["shape"]).copy())
    model.load_state_dict(state)
    model.eval()
    info = ClassifierCheckpoint(arch, cfg, manifest["input_dim"], manifest["seed"], manifest.get("max_len"), manifest.get("training", {}))
    return model, info

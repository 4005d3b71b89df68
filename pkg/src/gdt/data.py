"""Dataset construction and I/O.

Covers the synthetic two-plane task (two classes, each a mixture of two
constrained plane patches in 3-D, embedded into d dimensions and normalized
to the unit sphere), CSV round-tripping, IDX image-file subsampling, and
enumeration of labeled training pairs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataFormatError
from .loss import PairTarget, gdt_target, _check_lambda

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class LabeledDataset:
    """Feature vectors with integer class labels.

    `pre_embedding` keeps the 3-D coordinates a synthetic sample was built
    from; it exists for verification only and is never used by training code.
    """

    features: np.ndarray
    labels: np.ndarray
    pre_embedding: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ConfigError(f"features must be 2-D, got shape {self.features.shape}")
        if self.labels.ndim != 1 or self.labels.shape[0] != self.features.shape[0]:
            raise ConfigError(
                f"labels shape {self.labels.shape} does not match "
                f"{self.features.shape[0]} feature rows"
            )
        if self.features.size and not np.all(np.isfinite(self.features)):
            raise ConfigError("features must be finite")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return int(np.unique(self.labels).size)


@dataclass
class SyntheticConfig:
    """Parameters of the two-plane generator.

    `embedding` may pin the d x 3 embedding matrix; when None it is drawn once
    per seed with i.i.d. standard normal entries (redrawn on the measure-zero
    event of rank deficiency) and shared by the train and test splits.
    """

    n_train_per_class: int = 40
    n_test_per_class: int = 1000
    embed_dim: int = 100
    seed: int = 0
    embedding: np.ndarray | None = None

    def __post_init__(self):
        if self.embed_dim < 3:
            raise ConfigError(f"embed_dim must be >= 3, got {self.embed_dim}")
        if self.n_train_per_class < 0 or self.n_test_per_class < 0:
            raise ConfigError("per-class sample counts must be non-negative")
        if self.embedding is not None:
            emb = np.asarray(self.embedding, dtype=np.float64)
            if emb.shape != (self.embed_dim, 3):
                raise ConfigError(
                    f"embedding shape {emb.shape} != ({self.embed_dim}, 3)"
                )
            if np.linalg.matrix_rank(emb) < 3:
                raise ConfigError("embedding must have full column rank")
            self.embedding = emb


# Each class draws, with probability 1/2 each, from one of two plane patches:
#   patch A: -y + z = rhs, x in [-1, 1], z in [-3, 0]
#   patch B:  y + z = rhs, x in [-1, 1], z in [0, 3]
# with rhs = +1 for class 1 and rhs = -1 for class 2. The free coordinates are
# (x, z); y is solved from the plane equation, so no rejection is needed.
def _draw_class_points(rng: np.random.Generator, m: int, rhs: float) -> np.ndarray:
    on_b = rng.random(m) < 0.5
    xs = rng.uniform(-1.0, 1.0, m)
    u = rng.random(m)
    zs = np.where(on_b, 3.0 * u, 3.0 * u - 3.0)
    ys = np.where(on_b, rhs - zs, zs - rhs)
    return np.column_stack([xs, ys, zs])


def _embed_unit_norm(v: np.ndarray, embedding: np.ndarray) -> np.ndarray:
    emb = v @ embedding.T
    norms = np.linalg.norm(emb, axis=1)
    if v.shape[0] and norms.min() <= 1e-12:
        raise ConfigError("embedding produced a near-zero vector; check its rank")
    return emb / norms[:, None]


def _draw_split(rng, per_class: int, embedding: np.ndarray) -> LabeledDataset:
    v1 = _draw_class_points(rng, per_class, +1.0)
    v2 = _draw_class_points(rng, per_class, -1.0)
    v = np.vstack([v1, v2])
    features = _embed_unit_norm(v, embedding)
    labels = np.repeat([1, 2], per_class)
    return LabeledDataset(features, labels, pre_embedding=v)


def gen_two_plane_dataset(cfg: SyntheticConfig) -> tuple[LabeledDataset, LabeledDataset]:
    """Generate (train, test) for the two-plane task, deterministically per seed."""
    rng = np.random.default_rng(cfg.seed)
    embedding = cfg.embedding
    if embedding is None:
        embedding = rng.standard_normal((cfg.embed_dim, 3))
        while np.linalg.matrix_rank(embedding) < 3:
            embedding = rng.standard_normal((cfg.embed_dim, 3))
    train = _draw_split(rng, cfg.n_train_per_class, embedding)
    test = _draw_split(rng, cfg.n_test_per_class, embedding)
    return train, test


def save_dataset_csv(dataset: LabeledDataset, path) -> None:
    """Write rows `label,v_1,...,v_d`; floats use shortest round-trip decimals."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for label, row in zip(dataset.labels, dataset.features):
            fields = [str(int(label))] + [repr(float(v)) for v in row]
            fh.write(",".join(fields))
            fh.write("\n")


def load_dataset_csv(path) -> LabeledDataset:
    """Parse a dataset CSV; value-exact inverse of save_dataset_csv."""
    labels: list[int] = []
    rows: list[list[float]] = []
    dim = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) < 2:
                raise DataFormatError(
                    f"line {lineno}: expected `label,v_1,...`, got {line!r}",
                    line=lineno,
                )
            try:
                label = int(parts[0])
                values = [float(p) for p in parts[1:]]
            except ValueError as exc:
                raise DataFormatError(f"line {lineno}: {exc}", line=lineno) from exc
            if dim is None:
                dim = len(values)
            elif len(values) != dim:
                raise DataFormatError(
                    f"line {lineno}: row has {len(values)} values, expected {dim}",
                    line=lineno,
                )
            labels.append(label)
            rows.append(values)
    if dim is None:
        raise DataFormatError(f"{path}: no data rows")
    return LabeledDataset(np.asarray(rows, dtype=np.float64), np.asarray(labels))


def _read_exact(fh, nbytes: int, path, what: str) -> bytes:
    data = fh.read(nbytes)
    if len(data) < nbytes:
        raise DataFormatError(f"{path}: truncated {what}")
    return data


def _read_idx_images(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic, count, rows, cols = struct.unpack(
            ">IIII", _read_exact(fh, 16, path, "image header")
        )
        if magic != IDX_IMAGES_MAGIC:
            raise DataFormatError(f"{path}: bad image magic 0x{magic:08x}")
        payload = _read_exact(fh, count * rows * cols, path, "image payload")
    return np.frombuffer(payload, dtype=np.uint8).reshape(count, rows * cols)


def _read_idx_labels(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic, count = struct.unpack(">II", _read_exact(fh, 8, path, "label header"))
        if magic != IDX_LABELS_MAGIC:
            raise DataFormatError(f"{path}: bad label magic 0x{magic:08x}")
        payload = _read_exact(fh, count, path, "label payload")
    return np.frombuffer(payload, dtype=np.uint8)


def load_idx_subset(images_path, labels_path, per_class: int, seed: int) -> LabeledDataset:
    """Load big-endian IDX image/label files and keep per_class samples per class.

    Pixels are scaled to [0, 1] and images flattened. Selection is a seeded
    shuffle within each class (classes visited in sorted label order), so the
    result is deterministic per (paths, per_class, seed).
    """
    per_class = int(per_class)
    if per_class < 0:
        raise ConfigError(f"per_class must be non-negative, got {per_class}")
    images = _read_idx_images(images_path)
    labels = _read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise DataFormatError(
            f"{images_path} has {images.shape[0]} images but "
            f"{labels_path} has {labels.shape[0]} labels"
        )
    rng = np.random.default_rng(seed)
    picks = []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if idx.size < per_class:
            raise ConfigError(
                f"class {int(c)} has {idx.size} samples, need {per_class}"
            )
        picks.append(idx[rng.permutation(idx.size)[:per_class]])
    sel = np.concatenate(picks) if picks else np.empty(0, dtype=np.int64)
    features = images[sel].astype(np.float64) / 255.0
    return LabeledDataset(features, labels[sel].astype(np.int64))


def enumerate_pairs(dataset: LabeledDataset, lam: float) -> list[PairTarget]:
    """All unordered pairs i < j with their labels and training targets."""
    _check_lambda(lam)
    if dataset.n == 0:
        raise ConfigError("cannot enumerate pairs of an empty dataset")
    X = dataset.features
    labels = dataset.labels
    pairs = []
    for i in range(dataset.n):
        for j in range(i + 1, dataset.n):
            same = bool(labels[i] == labels[j])
            t = gdt_target(X[i], X[j], same, lam)
            pairs.append(PairTarget(i, j, +1 if same else -1, t))
    return pairs

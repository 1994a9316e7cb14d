"""Datasets: IDX file ingestion and seeded synthetic generators.

Feature vectors are float64 throughout; image payloads are scaled by 1/255
into [0, 1] with no further standardization so that an IDX round trip is
bit-exact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    """Raised when an IDX file is malformed (bad magic, truncation, mismatch)."""


@dataclass(frozen=True)
class LabeledExample:
    """One (feature vector, class id) pair; domain_id marks the subclass for
    class-plus-domain data and is 0 everywhere else."""

    features: np.ndarray
    label: int
    domain_id: int = 0

    def copy(self) -> "LabeledExample":
        return LabeledExample(self.features.copy(), self.label, self.domain_id)


@dataclass
class Dataset:
    examples: list[LabeledExample]
    num_classes: int
    feature_dim: int
    split: str = "train"
    image_shape: tuple[int, int] | None = None  # (rows, cols) when loaded from IDX

    def __post_init__(self) -> None:
        labels = {ex.label for ex in self.examples}
        if labels:
            if len(labels) != self.num_classes:
                raise ValueError(
                    f"num_classes={self.num_classes} but {len(labels)} distinct labels present"
                )
            if min(labels) < 0 or max(labels) >= self.num_classes:
                raise ValueError("labels must lie in [0, num_classes)")
        elif self.num_classes != 0:
            raise ValueError("empty dataset must have num_classes == 0")
        for ex in self.examples:
            if ex.features.shape != (self.feature_dim,):
                raise ValueError("inconsistent feature length")
            if not np.all(np.isfinite(ex.features)):
                raise ValueError("non-finite feature value")
            if ex.label < 0:
                raise ValueError("negative label")

    def __len__(self) -> int:
        return len(self.examples)

    def feature_matrix(self, indices=None) -> np.ndarray:
        exs = self.examples if indices is None else [self.examples[i] for i in indices]
        if not exs:
            return np.zeros((0, self.feature_dim))
        return np.stack([ex.features for ex in exs])

    def labels_array(self, indices=None) -> np.ndarray:
        exs = self.examples if indices is None else [self.examples[i] for i in indices]
        return np.array([ex.label for ex in exs], dtype=np.int64)


def _read_be32(f, path: str) -> int:
    data = f.read(4)
    if len(data) != 4:
        raise IdxFormatError(f"{path}: truncated header")
    return struct.unpack(">I", data)[0]


def load_idx(images_path: str, labels_path: str, split: str = "train") -> Dataset:
    """Load an IDX image/label file pair into a Dataset.

    Layout (all integers big-endian): images carry magic 0x00000803 followed
    by item/row/column counts and a uint8 pixel payload; labels carry magic
    0x00000801, an item count, and a uint8 label payload.
    """
    with open(images_path, "rb") as f:
        magic = _read_be32(f, images_path)
        if magic != IDX_IMAGE_MAGIC:
            raise IdxFormatError(f"{images_path}: bad image magic 0x{magic:08x}")
        n_images = _read_be32(f, images_path)
        rows = _read_be32(f, images_path)
        cols = _read_be32(f, images_path)
        payload = f.read(n_images * rows * cols)
        if len(payload) != n_images * rows * cols:
            raise IdxFormatError(f"{images_path}: truncated pixel payload")
        pixels = np.frombuffer(payload, dtype=np.uint8)

    with open(labels_path, "rb") as f:
        magic = _read_be32(f, labels_path)
        if magic != IDX_LABEL_MAGIC:
            raise IdxFormatError(f"{labels_path}: bad label magic 0x{magic:08x}")
        n_labels = _read_be32(f, labels_path)
        payload = f.read(n_labels)
        if len(payload) != n_labels:
            raise IdxFormatError(f"{labels_path}: truncated label payload")
        labels = np.frombuffer(payload, dtype=np.uint8)

    if n_labels != n_images:
        raise IdxFormatError(
            f"item count mismatch: {n_images} images vs {n_labels} labels"
        )

    feature_dim = rows * cols
    features = pixels.reshape(n_images, feature_dim).astype(np.float64) / 255.0
    examples = [
        LabeledExample(features[i], int(labels[i])) for i in range(n_images)
    ]
    num_classes = len({int(l) for l in labels})
    return Dataset(examples, num_classes, feature_dim, split, image_shape=(rows, cols))


def write_idx(features: np.ndarray, labels: np.ndarray, images_path: str,
              labels_path: str, image_shape: tuple[int, int] | None = None) -> None:
    """Write features in [0, 1] and integer labels as an IDX file pair.

    Pixels are recovered as round(x * 255); data that originated from uint8
    payloads round-trips bit-identically.
    """
    n = features.shape[0]
    if image_shape is None:
        image_shape = (1, features.shape[1]) if n else (1, 0)
    rows, cols = image_shape
    if n and rows * cols != features.shape[1]:
        raise ValueError("image_shape does not match feature_dim")
    if n and (features.min() < 0.0 or features.max() > 1.0):
        raise ValueError("features outside [0, 1] cannot be written as uint8 pixels")

    pixels = np.rint(features * 255.0).astype(np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, rows, cols))
        f.write(pixels.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABEL_MAGIC, n))
        f.write(np.asarray(labels, dtype=np.uint8).tobytes())


def write_dataset_idx(dataset: Dataset, images_path: str, labels_path: str) -> None:
    write_idx(dataset.feature_matrix(), dataset.labels_array(),
              images_path, labels_path, dataset.image_shape)


def synthetic_gaussians(class_means, shared_stddev: float, n_per_class,
                        seed: int, split: str = "train") -> Dataset:
    """Isotropic Gaussian blobs, one per class, with exact per-class counts.

    Class-conditional densities are analytically known, so the balanced-error
    optimum of any classifier over this data is closed form.
    """
    means = [np.asarray(m, dtype=np.float64).reshape(-1) for m in class_means]
    if len({m.shape[0] for m in means}) > 1:
        raise ValueError("class means must share a dimension")
    if shared_stddev <= 0:
        raise ValueError("stddev must be positive")
    if any(n < 0 for n in n_per_class):
        raise ValueError("counts must be non-negative")
    if len(n_per_class) != len(means):
        raise ValueError("one count per class mean required")

    rng = np.random.default_rng(seed)
    dim = means[0].shape[0] if means else 0
    examples: list[LabeledExample] = []
    for label, (mean, count) in enumerate(zip(means, n_per_class)):
        draws = rng.normal(0.0, shared_stddev, size=(count, dim)) + mean
        examples.extend(LabeledExample(draws[i], label) for i in range(count))
    num_classes = len({ex.label for ex in examples})
    return Dataset(examples, num_classes, dim, split)


def synthetic_superclass_domains(num_superclasses: int, domains_per_class: int,
                                 samples_per_domain: int, feature_dim: int,
                                 domain_mean_shift: float, seed: int,
                                 split: str = "train") -> Dataset:
    """Gaussian data where each superclass owns several shifted-mean domains.

    The label is the superclass id; domain_id identifies the subclass, so the
    class-conditional distribution genuinely changes from domain to domain.
    """
    if num_superclasses < 1 or domains_per_class < 1 or samples_per_domain < 1:
        raise ValueError("all counts must be >= 1")
    rng = np.random.default_rng(seed)
    # Base means spread out enough that superclasses stay separable at unit noise.
    base_means = rng.normal(0.0, 3.0, size=(num_superclasses, feature_dim))
    offsets = rng.normal(0.0, 1.0, size=(num_superclasses, domains_per_class, feature_dim))
    norms = np.linalg.norm(offsets, axis=2, keepdims=True)
    norms[norms == 0.0] = 1.0
    offsets = offsets / norms * domain_mean_shift

    examples: list[LabeledExample] = []
    for s in range(num_superclasses):
        for d in range(domains_per_class):
            mean = base_means[s] + offsets[s, d]
            draws = rng.normal(0.0, 1.0, size=(samples_per_domain, feature_dim)) + mean
            examples.extend(
                LabeledExample(draws[i], s, domain_id=d)
                for i in range(samples_per_domain)
            )
    return Dataset(examples, num_superclasses, feature_dim, split)

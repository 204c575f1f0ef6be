"""Datasets, class statistics and imbalance-profile generation.

Labels are stored 0-based. For binary data, class 0 is the positive
class (+1) and class 1 the negative class (-1); `Dataset.signed_labels`
exposes the +-1 view used by the binary losses.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np


class DataError(ValueError):
    """Raised for malformed or empty datasets."""


class InvalidProfileError(ValueError):
    """Raised for imbalance profiles that cannot be realized."""


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable labeled sample.

    Class statistics are derived from the arrays on every access, so they
    can never go stale.
    """

    X: np.ndarray
    y: np.ndarray
    num_classes: int

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64)
        y = np.array(self.y, dtype=np.int64)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise DataError(f"shape mismatch: X{X.shape} y{y.shape}")
        if X.shape[0] == 0:
            raise DataError("empty dataset")
        if self.num_classes < 1:
            raise DataError("num_classes must be positive")
        if y.min() < 0 or y.max() >= self.num_classes:
            raise DataError(f"labels must lie in [0, {self.num_classes})")
        if not np.all(np.isfinite(X)):
            raise DataError("features must be finite")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def is_binary(self) -> bool:
        return self.num_classes == 2

    @property
    def index_sets(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.y == k) for k in range(self.num_classes)]

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.num_classes)

    @property
    def radii(self) -> np.ndarray:
        """Per-class sup of the Euclidean feature norm (0 for empty classes)."""
        norms = np.linalg.norm(self.X, axis=1)
        out = np.zeros(self.num_classes)
        np.maximum.at(out, self.y, norms)
        return out

    @property
    def radii_inf(self) -> np.ndarray:
        norms = np.abs(self.X).max(axis=1)
        out = np.zeros(self.num_classes)
        np.maximum.at(out, self.y, norms)
        return out

    @property
    def global_radius(self) -> float:
        return float(self.radii.max())

    def signed_labels(self) -> np.ndarray:
        if not self.is_binary:
            raise DataError("signed labels are only defined for binary data")
        return np.where(self.y == 0, 1, -1)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx], self.num_classes)


@dataclass(frozen=True)
class ClassStats:
    counts: np.ndarray
    radii: np.ndarray
    radius: float
    imbalance_ratio: float

    def to_dict(self) -> dict:
        return {
            "counts": [int(c) for c in self.counts],
            "radii": [float(r) for r in self.radii],
            "radius": self.radius,
            "imbalance_ratio": self.imbalance_ratio,
        }


def class_stats(dataset: Dataset) -> ClassStats:
    counts = dataset.counts
    present = counts[counts > 0]
    return ClassStats(
        counts=counts,
        radii=dataset.radii,
        radius=dataset.global_radius,
        imbalance_ratio=float(present.max() / present.min()),
    )


class ImbalanceKind(str, enum.Enum):
    LONG_TAILED = "long-tailed"
    STEP = "step"


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class ImbalanceProfile:
    kind: ImbalanceKind
    ratio: float
    num_classes: int
    max_class_size: int
    step_fraction: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "kind", ImbalanceKind(self.kind))
        if self.ratio < 1:
            raise InvalidProfileError("ratio must be >= 1")
        if self.num_classes < 2:
            raise InvalidProfileError("num_classes must be >= 2")
        if self.max_class_size < 1 or self.max_class_size / self.ratio < 1:
            raise InvalidProfileError(
                "max_class_size / ratio must be >= 1 so every class is non-empty"
            )
        if self.kind is ImbalanceKind.STEP and not 0 <= self.step_fraction <= 1:
            raise InvalidProfileError("step_fraction must lie in [0, 1]")

    @property
    def num_minority(self) -> int:
        # Odd class counts: the minority group is floored.
        return int(math.floor(self.num_classes * self.step_fraction))

    def counts(self) -> list[int]:
        c, top = self.num_classes, self.max_class_size
        if self.kind is ImbalanceKind.LONG_TAILED:
            return [
                _round_half_up(top * self.ratio ** (-k / (c - 1))) for k in range(c)
            ]
        low = _round_half_up(top / self.ratio)
        n_min = self.num_minority
        return [top] * (c - n_min) + [low] * n_min

    def with_max(self, max_class_size: int) -> "ImbalanceProfile":
        return ImbalanceProfile(
            self.kind, self.ratio, self.num_classes, max_class_size, self.step_fraction
        )


@dataclass(frozen=True)
class GaussianClass:
    """Isotropic Gaussian class-conditional sampler."""

    mean: tuple[float, ...]
    scale: float = 1.0

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        mean = np.asarray(self.mean, dtype=np.float64)
        return mean + self.scale * rng.standard_normal((n, mean.size))


def default_generators(
    num_classes: int, dim: int = 2, separation: float = 3.0, scale: float = 1.0
) -> list[GaussianClass]:
    """Class means spread on a circle of diameter `separation` (first two axes)."""
    if dim < 2 and num_classes > 2:
        raise ValueError("need dim >= 2 for more than two classes")
    gens = []
    for k in range(num_classes):
        angle = math.pi * k if num_classes == 2 else 2 * math.pi * k / num_classes
        mean = [0.0] * dim
        mean[0] = 0.5 * separation * math.cos(angle)
        if dim > 1:
            mean[1] = 0.5 * separation * math.sin(angle)
        gens.append(GaussianClass(tuple(mean), scale))
    return gens


def sample_counts(
    counts: Sequence[int], generators: Sequence[GaussianClass], rng: np.random.Generator
) -> Dataset:
    if len(generators) != len(counts):
        raise InvalidProfileError("need one sampler per class")
    blocks = [gen.sample(int(n), rng) for gen, n in zip(generators, counts)]
    y = np.concatenate([np.full(int(n), k) for k, n in enumerate(counts)])
    return Dataset(np.vstack(blocks), y, len(counts))


def generate_imbalanced(
    profile: ImbalanceProfile,
    generators: Sequence[GaussianClass] | None = None,
    seed: int = 0,
) -> Dataset:
    """Draw a dataset whose class sizes follow `profile`; deterministic in `seed`."""
    if generators is None:
        generators = default_generators(profile.num_classes)
    rng = np.random.default_rng(seed)
    return sample_counts(profile.counts(), generators, rng)


def generate_split(
    profile: ImbalanceProfile,
    generators: Sequence[GaussianClass] | None = None,
    seed: int = 0,
    test_max_class_size: int | None = None,
) -> tuple[Dataset, Dataset]:
    """Train/test pair with identical per-class proportions.

    The test set uses the same profile rescaled to `test_max_class_size`
    and an independent stream derived from `seed`.
    """
    if generators is None:
        generators = default_generators(profile.num_classes)
    test_profile = profile.with_max(test_max_class_size or profile.max_class_size)
    train_rng, test_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    train = sample_counts(profile.counts(), generators, train_rng)
    test = sample_counts(test_profile.counts(), generators, test_rng)
    return train, test


@dataclass(frozen=True)
class CsvSchema:
    label_column: int = 0
    delimiter: str = ","
    skip_header: bool = False
    one_based: bool = True
    num_classes: int | None = None


def _parse_label(token: str, row: int) -> int:
    try:
        value = float(token)
    except ValueError:
        raise DataError(f"row {row}: label {token!r} is not numeric") from None
    if not value.is_integer():
        raise DataError(f"row {row}: label {token!r} is not an integer")
    return int(value)


def load_csv(path: str | Path, schema: CsvSchema = CsvSchema()) -> Dataset:
    """Read one example per row; lines starting with '#' are ignored.

    Labels are either +-1 (binary: +1 -> class 0, -1 -> class 1) or class
    indices, 1-based unless `schema.one_based` is false.
    """
    feats: list[list[float]] = []
    raw_labels: list[int] = []
    arity = None
    with open(path, newline="") as fh:
        lines = (ln for ln in fh if not ln.lstrip().startswith("#"))
        reader = csv.reader(lines, delimiter=schema.delimiter)
        for row_no, row in enumerate(reader, start=1):
            if schema.skip_header and row_no == 1:
                continue
            if not row or all(not tok.strip() for tok in row):
                continue
            if arity is None:
                arity = len(row)
                if arity < 2:
                    raise DataError(f"row {row_no}: need a label and at least one feature")
            elif len(row) != arity:
                raise DataError(f"row {row_no}: expected {arity} fields, got {len(row)}")
            try:
                label_tok = row[schema.label_column]
            except IndexError:
                raise DataError(f"row {row_no}: no label column {schema.label_column}") from None
            raw_labels.append(_parse_label(label_tok, row_no))
            values = []
            for j, tok in enumerate(row):
                if j == schema.label_column % arity:
                    continue
                try:
                    values.append(float(tok))
                except ValueError:
                    raise DataError(f"row {row_no}: non-numeric feature {tok!r}") from None
            feats.append(values)
    if not feats:
        raise DataError("empty dataset")

    labels = np.array(raw_labels)
    uniq = set(labels.tolist())
    if uniq <= {-1, 1} and -1 in uniq:
        y = np.where(labels == 1, 0, 1)
        num_classes = 2
    else:
        y = labels - 1 if schema.one_based else labels
        if y.min() < 0:
            bad = int(np.argmax(y < 0)) + 1
            raise DataError(f"row {bad}: unknown label {raw_labels[bad - 1]}")
        num_classes = schema.num_classes or int(y.max()) + 1
        if y.max() >= num_classes:
            bad = int(np.argmax(y >= num_classes)) + 1
            raise DataError(f"row {bad}: unknown label {raw_labels[bad - 1]}")
    return Dataset(np.array(feats), y, num_classes)


def format_real(v: float) -> str:
    return format(float(v), ".17g")


def dumps_csv(dataset: Dataset, delimiter: str = ",", header_comment: str | None = None) -> str:
    lines = []
    if header_comment:
        lines.append(f"# {header_comment}")
    labels = dataset.signed_labels() if dataset.is_binary else dataset.y + 1
    for label, row in zip(labels, dataset.X):
        lines.append(delimiter.join([str(int(label))] + [format_real(v) for v in row]))
    return "\n".join(lines) + "\n"


def save_csv(dataset: Dataset, path: str | Path, header_comment: str | None = None) -> None:
    Path(path).write_text(dumps_csv(dataset, header_comment=header_comment))

"""Long-tailed dataset construction, head/tail splitting, synthetic benchmarks and manifest I/O."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgument, MalformedManifest, MissingPayload, ShapeMismatch
from .tensor import read_ltt1, write_ltt1

MANIFEST_HEADER = ["sample_id", "class_id", "split", "payload_path"]
SPLITS = ("train", "test")


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class ClassDistribution:
    """Per-class training counts (class ids are 0-based array positions)."""

    counts: tuple
    test_per_class: int = 0
    name: str = "longtail"
    # source_labels[i] is the label in the original balanced dataset that was
    # assigned rank i; identity unless make_pareto_longtail shuffled it.
    source_labels: tuple | None = None

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if not counts:
            raise InvalidArgument("distribution needs at least one class")
        if min(counts) < 1:
            raise InvalidArgument("every class needs at least one training sample")
        if self.test_per_class < 0:
            raise InvalidArgument("test_per_class must be non-negative")
        object.__setattr__(self, "counts", counts)
        if self.source_labels is None:
            object.__setattr__(self, "source_labels", tuple(range(len(counts))))

    @property
    def n_classes(self) -> int:
        return len(self.counts)

    @property
    def total(self) -> int:
        return sum(self.counts)


@dataclass(frozen=True)
class HeadTailSplit:
    m: float
    head: frozenset
    tail: frozenset
    boundary: frozenset

    @property
    def budget(self) -> int:
        """Per-class target count after rebalancing."""
        return math.floor(self.m)

    @property
    def head_group(self) -> frozenset:
        """Classes reported under "head" (boundary classes included)."""
        return self.head | self.boundary


@dataclass(frozen=True)
class FrequencyTable:
    freqs: tuple

    def __post_init__(self):
        freqs = tuple(float(f) for f in self.freqs)
        if any(not math.isfinite(f) or f < 0 for f in freqs):
            raise InvalidArgument("frequencies must be finite and non-negative")
        if not freqs or max(freqs) <= 0:
            raise InvalidArgument("frequency table needs at least one positive entry")
        object.__setattr__(self, "freqs", freqs)

    @property
    def f_max(self) -> float:
        return max(self.freqs)

    @classmethod
    def read_csv(cls, path) -> "FrequencyTable":
        rows = {}
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["class_id", "frequency"]:
                raise MalformedManifest(f"{path}: expected header 'class_id,frequency', got {header}")
            for lineno, row in enumerate(reader, start=2):
                try:
                    cid, freq = int(row[0]), float(row[1])
                except (ValueError, IndexError) as exc:
                    raise MalformedManifest(f"{path}:{lineno}: bad row {row}") from exc
                rows[cid] = freq
        if sorted(rows) != list(range(len(rows))):
            raise MalformedManifest(f"{path}: class ids must be 0..n-1")
        return cls(tuple(rows[c] for c in range(len(rows))))


def make_pareto_longtail(n_classes, n_max, n_min, alpha=6.0, seed=0, test_per_class=0, name="pareto-lt"):
    """Rank-frequency long tail: n_i = n_min + round((n_max - n_min) * ((n - i) / (n - 1)) ** alpha).

    Counts are returned in rank order (non-increasing). ``seed`` only decides
    which source label gets which rank, recorded in ``source_labels``.
    """
    if n_classes < 2:
        raise InvalidArgument("need at least two classes")
    if n_min < 1 or n_max <= n_min:
        raise InvalidArgument(f"need n_max > n_min >= 1, got n_max={n_max}, n_min={n_min}")
    if not alpha > 0:
        raise InvalidArgument("alpha must be positive")
    n = n_classes
    counts = tuple(
        n_min + round_half_up((n_max - n_min) * ((n - i) / (n - 1)) ** alpha) for i in range(1, n + 1)
    )
    labels = tuple(int(v) for v in np.random.default_rng(seed).permutation(n))
    return ClassDistribution(counts, test_per_class, name, labels)


def frequency_match_counts(original_counts, freqs: FrequencyTable):
    """s_i = max(1, round(n_i * f_i / f_max)), rounding half up."""
    if not isinstance(freqs, FrequencyTable):
        freqs = FrequencyTable(tuple(freqs))
    original_counts = [int(c) for c in original_counts]
    if len(original_counts) != len(freqs.freqs):
        raise InvalidArgument("counts and frequency table differ in length")
    if min(original_counts) < 1:
        raise InvalidArgument("original counts must be >= 1")
    f_max = freqs.f_max
    return [max(1, round_half_up(n * f / f_max)) for n, f in zip(original_counts, freqs.freqs)]


def split_head_tail(dist: ClassDistribution) -> HeadTailSplit:
    m = dist.total / dist.n_classes
    head = frozenset(c for c, n in enumerate(dist.counts) if n > m)
    tail = frozenset(c for c, n in enumerate(dist.counts) if n < m)
    boundary = frozenset(c for c, n in enumerate(dist.counts) if n == m)
    return HeadTailSplit(m, head, tail, boundary)


def imbalance_ratio(dist) -> float:
    counts = dist.counts if isinstance(dist, ClassDistribution) else tuple(dist)
    return max(counts) / min(counts)


@dataclass
class Dataset:
    """Samples stored column-wise. ``payloads`` has shape (N, dim) or (N, H, W, C)."""

    sample_ids: np.ndarray
    labels: np.ndarray
    splits: np.ndarray
    payloads: np.ndarray
    distribution: ClassDistribution
    payload_paths: list | None = field(default=None, compare=False)

    def __post_init__(self):
        self.sample_ids = np.asarray(self.sample_ids, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.splits = np.asarray(self.splits, dtype="<U5")
        self.payloads = np.asarray(self.payloads, dtype=np.float64)
        n = len(self.sample_ids)
        if not (len(self.labels) == len(self.splits) == len(self.payloads) == n):
            raise InvalidArgument("dataset columns differ in length")
        if len(np.unique(self.sample_ids)) != n:
            raise InvalidArgument("sample ids must be unique")
        bad = set(np.unique(self.splits)) - set(SPLITS)
        if bad:
            raise InvalidArgument(f"unknown split names {sorted(bad)}")
        train_counts = np.bincount(self.labels[self.is_train], minlength=self.distribution.n_classes)
        if tuple(int(c) for c in train_counts) != self.distribution.counts:
            raise InvalidArgument("per-class train counts do not match the distribution")

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.distribution == other.distribution
            and np.array_equal(self.sample_ids, other.sample_ids)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.splits, other.splits)
            and self.payloads.shape == other.payloads.shape
            and np.array_equal(self.payloads, other.payloads)
        )

    @property
    def is_train(self) -> np.ndarray:
        return self.splits == "train"

    @property
    def payload_shape(self) -> tuple:
        return self.payloads.shape[1:]

    @property
    def is_image(self) -> bool:
        return self.payloads.ndim == 4

    @property
    def n_classes(self) -> int:
        return self.distribution.n_classes

    def flat(self, idx=None) -> np.ndarray:
        """Payloads flattened to (N, features); the model's input view."""
        p = self.payloads if idx is None else self.payloads[idx]
        return p.reshape(len(p), -1)

    def train_indices(self, class_id=None) -> np.ndarray:
        mask = self.is_train
        if class_id is not None:
            mask = mask & (self.labels == class_id)
        return np.flatnonzero(mask)

    def test_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.is_train)

    def index_of(self, sample_ids) -> np.ndarray:
        lookup = {int(s): i for i, s in enumerate(self.sample_ids)}
        try:
            return np.array([lookup[int(s)] for s in sample_ids], dtype=np.int64)
        except KeyError as exc:
            raise InvalidArgument(f"unknown sample id {exc.args[0]}") from None


def _assemble(train_x, train_y, test_x, test_y, dist):
    payloads = np.concatenate([train_x, test_x]) if len(test_x) else np.asarray(train_x)
    labels = np.concatenate([train_y, test_y]).astype(np.int64)
    splits = np.array(["train"] * len(train_y) + ["test"] * len(test_y))
    # Payloads are kept float32-representable so LTT1 round-trips are exact.
    payloads = payloads.astype(np.float32).astype(np.float64)
    return Dataset(np.arange(len(labels)), labels, splits, payloads, dist)


def synth_gaussian_dataset(dist: ClassDistribution, feature_dim=10, class_sep=3.0, seed=0) -> Dataset:
    """Spherical unit-variance Gaussian clusters with means on a sphere of radius ``class_sep``."""
    if feature_dim < 2:
        raise InvalidArgument("feature_dim must be >= 2")
    if not class_sep > 0:
        raise InvalidArgument("class_sep must be positive")
    rng = np.random.default_rng(seed)
    means = rng.standard_normal((dist.n_classes, feature_dim))
    means *= class_sep / np.linalg.norm(means, axis=1, keepdims=True)
    xs, ys, tx, ty = [], [], [], []
    for c, n_c in enumerate(dist.counts):
        xs.append(means[c] + rng.standard_normal((n_c, feature_dim)))
        ys.append(np.full(n_c, c))
    for c in range(dist.n_classes):
        tx.append(means[c] + rng.standard_normal((dist.test_per_class, feature_dim)))
        ty.append(np.full(dist.test_per_class, c))
    return _assemble(np.concatenate(xs), np.concatenate(ys), np.concatenate(tx), np.concatenate(ty), dist)


def synth_image_dataset(dist: ClassDistribution, size=16, channels=3, noise=0.15, seed=0) -> Dataset:
    """Tiny images: a per-class 4x4 colour template upsampled to ``size`` plus clipped noise."""
    if size < 4 or size % 4:
        raise InvalidArgument("size must be a positive multiple of 4")
    rng = np.random.default_rng(seed)
    templates = rng.uniform(0.0, 1.0, (dist.n_classes, 4, 4, channels))
    templates = templates.repeat(size // 4, axis=1).repeat(size // 4, axis=2)

    def draw(c, n):
        return np.clip(templates[c] + noise * rng.standard_normal((n, size, size, channels)), 0.0, 1.0)

    train = [(draw(c, n), np.full(n, c)) for c, n in enumerate(dist.counts)]
    test = [(draw(c, dist.test_per_class), np.full(dist.test_per_class, c)) for c in range(dist.n_classes)]
    return _assemble(
        np.concatenate([x for x, _ in train]),
        np.concatenate([y for _, y in train]),
        np.concatenate([x for x, _ in test]),
        np.concatenate([y for _, y in test]),
        dist,
    )


def subsample_to_counts(dataset: Dataset, counts, seed=0, name=None) -> Dataset:
    """Randomly keep ``counts[c]`` train samples of each class; the test split is kept whole."""
    counts = [int(c) for c in counts]
    if len(counts) != dataset.n_classes:
        raise InvalidArgument("one target count per class required")
    rng = np.random.default_rng(seed)
    keep = [dataset.test_indices()]
    for c, want in enumerate(counts):
        idx = dataset.train_indices(c)
        if want > len(idx):
            raise InvalidArgument(f"class {c} has {len(idx)} train samples, {want} requested")
        keep.append(np.sort(rng.choice(idx, size=want, replace=False)))
    keep = np.sort(np.concatenate(keep))
    dist = ClassDistribution(
        tuple(counts), dataset.distribution.test_per_class, name or dataset.distribution.name
    )
    return Dataset(
        dataset.sample_ids[keep], dataset.labels[keep], dataset.splits[keep], dataset.payloads[keep], dist
    )


# -- manifest I/O ---------------------------------------------------------------

def write_manifest(dataset: Dataset, directory) -> Path:
    directory = Path(directory)
    (directory / "payloads").mkdir(parents=True, exist_ok=True)
    rows = []
    for sid, cid, split, payload in zip(dataset.sample_ids, dataset.labels, dataset.splits, dataset.payloads):
        rel = f"payloads/{int(sid):07d}.ltt1"
        write_ltt1(directory / rel, payload)
        rows.append([int(sid), int(cid), str(split), rel])
    with open(directory / "manifest.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        writer.writerows(rows)
    dist = dataset.distribution
    meta = {
        "name": dist.name,
        "test_per_class": dist.test_per_class,
        "source_labels": list(dist.source_labels),
        "payload_shape": list(dataset.payload_shape),
    }
    (directory / "distribution.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    return directory / "manifest.csv"


def read_manifest(directory) -> Dataset:
    directory = Path(directory)
    path = directory / "manifest.csv" if directory.is_dir() else directory
    directory = path.parent
    meta_path = directory / "distribution.json"
    meta = json.loads(meta_path.read_text(encoding="utf-8")) if meta_path.exists() else {}
    expected_shape = tuple(meta["payload_shape"]) if "payload_shape" in meta else None

    ids, labels, splits, payloads, paths = [], [], [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != MANIFEST_HEADER:
            raise MalformedManifest(f"{path}: expected header {','.join(MANIFEST_HEADER)}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise MalformedManifest(f"{path}:{lineno}: expected 4 columns, got {len(row)}")
            try:
                sid, cid = int(row[0]), int(row[1])
            except ValueError:
                raise MalformedManifest(f"{path}:{lineno}: non-integer sample_id/class_id") from None
            if row[2] not in SPLITS or cid < 0:
                raise MalformedManifest(f"{path}:{lineno}: bad split or class id in {row}")
            payload_path = directory / row[3]
            if not payload_path.is_file():
                raise MissingPayload(payload_path)
            arr = read_ltt1(payload_path, None if expected_shape is None else len(expected_shape))
            if expected_shape is None:
                expected_shape = arr.shape
            if arr.shape != expected_shape:
                raise ShapeMismatch(f"{payload_path}: shape {arr.shape}, expected {expected_shape}")
            ids.append(sid)
            labels.append(cid)
            splits.append(row[2])
            payloads.append(arr)
            paths.append(row[3])
    if not ids:
        raise MalformedManifest(f"{path}: no samples")
    if len(set(ids)) != len(ids):
        raise MalformedManifest(f"{path}: duplicate sample ids")
    labels_arr = np.asarray(labels)
    train = np.asarray(splits) == "train"
    n_classes = int(labels_arr.max()) + 1
    counts = np.bincount(labels_arr[train], minlength=n_classes)
    test_counts = np.bincount(labels_arr[~train], minlength=n_classes)
    dist = ClassDistribution(
        tuple(int(c) for c in counts),
        int(meta.get("test_per_class", test_counts.max() if (~train).any() else 0)),
        meta.get("name", directory.name),
        tuple(meta["source_labels"]) if "source_labels" in meta else None,
    )
    return Dataset(ids, labels, splits, np.stack(payloads).astype(np.float64), dist, paths)

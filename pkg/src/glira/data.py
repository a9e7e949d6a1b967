"""Datasets, experiment splits, shadow subsets and query augmentation.

A :class:`Dataset` stores its examples column-wise (a feature matrix and a
label vector) together with ``ids``, the row indices of the examples in the
dataset they were drawn from. Subsets keep the original ids, which is what
makes split audits possible after a shadow subset has been sampled.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ShapeError

__all__ = [
    "Example",
    "Dataset",
    "SplitPlan",
    "make_synthetic",
    "split_experiment",
    "sample_shadow_subset",
    "augment",
    "augment_batch",
    "read_idx",
    "load_idx_dataset",
    "save_jsonl",
    "load_jsonl",
]


@dataclass(frozen=True)
class Example:
    features: np.ndarray
    label: int


@dataclass(frozen=True, eq=False)
class Dataset:
    """Labeled examples stored as ``features`` (n, d) and ``labels`` (n,).

    Parameters
    ----------
    features : ndarray of shape (n, d)
    labels : ndarray of shape (n,)
        Integer class indices in ``[0, num_classes)``.
    num_classes : int
    provenance : str
        Free-text tag describing where the data came from.
    ids : ndarray of shape (n,), optional
        Indices of the rows in the parent dataset. Defaults to ``arange(n)``.
    image_shape : tuple of int, optional
        ``(rows, cols)`` when each feature vector is a flattened image;
        selects the image augmentation family.
    """

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    provenance: str = ""
    ids: np.ndarray | None = None
    image_shape: tuple[int, int] | None = None

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if features.ndim != 2:
            raise ShapeError(f"features must be 2-D, got shape {features.shape}")
        if labels.shape != (features.shape[0],):
            raise ShapeError("labels must have one entry per feature row")
        if self.num_classes < 1:
            raise ConfigError("num_classes must be positive")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ConfigError("labels must lie in [0, num_classes)")
        if not np.all(np.isfinite(features)):
            raise ConfigError("features contain NaN or Inf")
        ids = np.arange(len(labels)) if self.ids is None else np.asarray(self.ids, dtype=np.int64)
        if ids.shape != labels.shape:
            raise ShapeError("ids must have one entry per example")
        if self.image_shape is not None:
            rows, cols = self.image_shape
            if rows * cols != features.shape[1]:
                raise ShapeError("image_shape does not match feature_dim")
            object.__setattr__(self, "image_shape", (int(rows), int(cols)))
        features.setflags(write=False)
        labels.setflags(write=False)
        ids.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "ids", ids)

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, i):
        return Example(self.features[i], int(self.labels[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @property
    def feature_dim(self):
        return self.features.shape[1]

    def subset(self, positions, provenance=None):
        """Rows at ``positions`` (positions in this dataset, not ids)."""
        positions = np.asarray(positions, dtype=np.int64)
        return Dataset(
            self.features[positions],
            self.labels[positions],
            self.num_classes,
            provenance if provenance is not None else self.provenance,
            self.ids[positions],
            self.image_shape,
        )

    def check_training_ready(self):
        present = np.unique(self.labels)
        if len(present) != self.num_classes:
            missing = sorted(set(range(self.num_classes)) - set(present.tolist()))
            raise ConfigError(f"training dataset has no examples of classes {missing}")

    def tobytes(self):
        return self.features.tobytes() + self.labels.tobytes() + self.ids.tobytes()


@dataclass(frozen=True)
class SplitPlan:
    """Index sets of the membership game, as positions in the parent dataset."""

    target_train_ids: np.ndarray
    shadow_pool_ids: np.ndarray
    nonmember_eval_ids: np.ndarray
    member_eval_ids: np.ndarray
    seed: int
    extra: dict = field(default_factory=dict)

    def check(self):
        t = set(self.target_train_ids.tolist())
        s = set(self.shadow_pool_ids.tolist())
        non = set(self.nonmember_eval_ids.tolist())
        mem = set(self.member_eval_ids.tolist())
        if t & s:
            raise ConfigError("target_train and shadow_pool intersect")
        if non & t:
            raise ConfigError("nonmember_eval intersects target_train")
        if not mem <= t:
            raise ConfigError("member_eval is not a subset of target_train")
        if len(mem) != len(non):
            raise ConfigError("member and non-member eval sets are unbalanced")

    def to_dict(self):
        return {
            "target_train_ids": self.target_train_ids.tolist(),
            "shadow_pool_ids": self.shadow_pool_ids.tolist(),
            "nonmember_eval_ids": self.nonmember_eval_ids.tolist(),
            "member_eval_ids": self.member_eval_ids.tolist(),
            "seed": self.seed,
        }


def _blob_means(num_classes, feature_dim, separation, seed):
    rng = np.random.default_rng([seed, 0])
    return separation * rng.standard_normal((num_classes, feature_dim))


def make_synthetic(num_classes, feature_dim, per_class, spread, seed, *,
                   separation=1.0, shift=0.0, sample_seed=None):
    """Isotropic Gaussian blobs, one per class.

    Class means are drawn from ``N(0, separation**2 I)`` using ``seed``; the
    examples are ``mean + spread * N(0, I)``. ``shift`` moves every mean by
    ``shift`` along the unit diagonal, which together with a different
    ``sample_seed`` yields a shifted copy of the same distribution family.
    Examples are ordered class by class.
    """
    if num_classes < 2 or feature_dim < 1 or per_class < 1:
        raise ConfigError("need num_classes >= 2, feature_dim >= 1 and per_class >= 1")
    if not spread > 0 or not separation > 0:
        raise ConfigError("spread and separation must be positive")
    means = _blob_means(num_classes, feature_dim, separation, seed)
    means = means + shift / np.sqrt(feature_dim)
    rng = np.random.default_rng([seed if sample_seed is None else sample_seed, 1])
    noise = rng.standard_normal((num_classes, per_class, feature_dim))
    features = (means[:, None, :] + spread * noise).reshape(-1, feature_dim)
    labels = np.repeat(np.arange(num_classes), per_class)
    tag = f"blobs(K={num_classes},d={feature_dim},n={per_class},spread={spread},seed={seed}"
    if shift:
        tag += f",shift={shift}"
    return Dataset(features, labels, num_classes, tag + ")")


def split_experiment(dataset, sizes, seed, *, nonmembers_in_pool=False):
    """Partition ``dataset`` into target-train, shadow pool and evaluation sets.

    ``sizes`` maps ``"target"`` to the target training set size and ``"eval"``
    to the number of members (and, equally, non-members) scored.

    By default the three parts are pairwise disjoint: target training set,
    non-member evaluation set, and everything else as the shadow pool. With
    ``nonmembers_in_pool=True`` the shadow pool is the full complement of the
    target set and the non-members are drawn from it, so shadows may have
    trained on a non-member.
    """
    n = len(dataset)
    n_t = int(sizes["target"])
    n_e = int(sizes["eval"])
    if n_t < 1 or n_e < 1:
        raise ConfigError("target and eval sizes must be positive")
    if n_e > n_t:
        raise ConfigError("eval size cannot exceed the target training size")
    reserved = n_t if nonmembers_in_pool else n_t + n_e
    if n_t + n_e > n or reserved >= n:
        raise ConfigError(
            f"split sizes target={n_t}, eval={n_e} leave no shadow pool in a dataset of {n}"
        )
    rng = np.random.default_rng([seed, 10])
    perm = rng.permutation(n)
    target = np.sort(perm[:n_t])
    nonmember = np.sort(perm[n_t:n_t + n_e])
    pool = np.sort(perm[n_t:] if nonmembers_in_pool else perm[n_t + n_e:])
    member = np.sort(rng.choice(target, size=n_e, replace=False))
    plan = SplitPlan(target, pool, nonmember, member, int(seed))
    plan.check()
    return plan


def sample_shadow_subset(plan, dataset, size, shadow_seed, pool=None):
    """Uniform sample without replacement from the shadow pool.

    ``pool`` overrides the source of shadow data (the distribution-shift
    setting); by default the rows of ``dataset`` at ``plan.shadow_pool_ids``.
    """
    if pool is None:
        pool_positions = plan.shadow_pool_ids
        source = dataset
    else:
        pool_positions = np.arange(len(pool))
        source = pool
    if size < 1 or size > len(pool_positions):
        raise ConfigError(f"shadow subset size {size} outside [1, {len(pool_positions)}]")
    rng = np.random.default_rng([plan.seed, 20, shadow_seed])
    chosen = np.sort(rng.choice(pool_positions, size=size, replace=False))
    return source.subset(chosen, provenance=f"{source.provenance}|shadow[{shadow_seed}]")


def _augment_rows(features, num_queries, rng, sigma, sign_flip, image_shape):
    """Return an array (num_queries, n, d); slot 0 is the identity."""
    n, d = features.shape
    out = np.empty((num_queries, n, d))
    out[0] = features
    for q in range(1, num_queries):
        if image_shape is None:
            x = features + sigma * rng.standard_normal((n, d))
            if sign_flip:
                coord = rng.integers(0, d, size=n)
                x[np.arange(n), coord] *= -1.0
        else:
            rows, cols = image_shape
            imgs = features.reshape(n, rows, cols)
            flips = rng.random(n) < 0.5
            dy = rng.integers(-2, 3, size=n)
            dx = rng.integers(-2, 3, size=n)
            x = np.empty_like(imgs)
            for i in range(n):
                img = imgs[i, :, ::-1] if flips[i] else imgs[i]
                x[i] = _shift_image(img, dy[i], dx[i])
            x = x.reshape(n, d)
        out[q] = x
    return out


def _shift_image(img, dy, dx):
    shifted = np.zeros_like(img)
    rows, cols = img.shape
    src_r = slice(max(0, -dy), rows - max(0, dy))
    dst_r = slice(max(0, dy), rows - max(0, -dy))
    src_c = slice(max(0, -dx), cols - max(0, dx))
    dst_c = slice(max(0, dx), cols - max(0, -dx))
    shifted[dst_r, dst_c] = img[src_r, src_c]
    return shifted


def augment(example, num_queries, seed, *, sigma=0.05, sign_flip=False, image_shape=None):
    """Return ``num_queries`` variants of ``example``; the first is unmodified.

    Vector data gets additive Gaussian jitter of standard deviation ``sigma``
    (plus, with ``sign_flip``, one randomly chosen coordinate negated). When
    ``image_shape`` is given the variants are random horizontal flips combined
    with shifts of up to two pixels, zero-filled.
    """
    if num_queries < 1:
        raise ConfigError("num_queries must be at least 1")
    x = np.asarray(example.features, dtype=np.float64)[None, :]
    rng = np.random.default_rng([seed, 30])
    rows = _augment_rows(x, num_queries, rng, sigma, sign_flip, image_shape)
    return [Example(rows[q, 0], example.label) for q in range(num_queries)]


def augment_batch(dataset, num_queries, seed, *, sigma=0.05, sign_flip=False):
    """Query sets for every example of ``dataset``, shape (num_queries, n, d).

    Row ``i`` is generated exactly as ``augment(dataset[i], num_queries,
    seed=(seed, dataset.ids[i]))`` would, so per-example and batched scoring
    agree.
    """
    if num_queries < 1:
        raise ConfigError("num_queries must be at least 1")
    out = np.empty((num_queries, len(dataset), dataset.feature_dim))
    for i in range(len(dataset)):
        example = dataset[i]
        variants = augment(example, num_queries, example_seed(seed, dataset.ids[i]),
                           sigma=sigma, sign_flip=sign_flip, image_shape=dataset.image_shape)
        out[:, i, :] = np.stack([v.features for v in variants])
    return out


def example_seed(seed, example_id):
    """Per-example augmentation seed derived from a run-level seed."""
    return int(np.random.SeedSequence([int(seed), int(example_id)]).generate_state(1)[0])


# ---------------------------------------------------------------------------
# External formats
# ---------------------------------------------------------------------------

_IDX_UBYTE = 0x08


def read_idx(path):
    """Read an IDX file with an unsigned-byte payload.

    The header is a 4-byte big-endian magic number (two zero bytes, the type
    code 0x08, the number of dimensions) followed by one big-endian uint32
    per dimension. Returns a uint8 array of the stated shape.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise ShapeError(f"{path}: truncated IDX header")
    zero, dtype_code, ndim = struct.unpack(">HBB", raw[:4])
    if zero != 0 or dtype_code != _IDX_UBYTE:
        raise ShapeError(f"{path}: unsupported IDX magic 0x{int.from_bytes(raw[:4], 'big'):08x}")
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise ShapeError(f"{path}: truncated IDX dimensions")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    count = int(np.prod(dims, dtype=np.int64))
    if len(raw) - header != count:
        raise ShapeError(f"{path}: payload has {len(raw) - header} bytes, expected {count}")
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def write_idx(path, array):
    array = np.ascontiguousarray(array, dtype=np.uint8)
    header = struct.pack(">HBB", 0, _IDX_UBYTE, array.ndim)
    header += struct.pack(f">{array.ndim}I", *array.shape)
    Path(path).write_bytes(header + array.tobytes())


def load_idx_dataset(images_path, labels_path, num_classes=None, limit=None):
    """Pair an IDX image file (magic 0x803) with an IDX label file (0x801).

    Pixels are scaled to [0, 1] and flattened; ``image_shape`` is kept so
    augmentation uses flips and shifts.
    """
    images = read_idx(images_path)
    labels = read_idx(labels_path)
    if images.ndim != 3 or labels.ndim != 1:
        raise ShapeError("expected a 3-D image file and a 1-D label file")
    if images.shape[0] != labels.shape[0]:
        raise ShapeError("image and label counts differ")
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    k = int(labels.max()) + 1 if num_classes is None else num_classes
    n, rows, cols = images.shape
    return Dataset(images.reshape(n, rows * cols) / 255.0, labels.astype(np.int64), k,
                   f"idx({Path(images_path).name})", image_shape=(rows, cols))


def save_jsonl(dataset, path):
    """One JSON object per line: ``{"label": int, "features": [float, ...]}``.

    A first header line ``{"num_classes": K, "feature_dim": d, "provenance": ...}``
    carries the dataset metadata. Floats are written with ``repr`` precision
    so a load reproduces the features bit for bit.
    """
    with open(path, "w") as fh:
        header = {"num_classes": dataset.num_classes, "feature_dim": dataset.feature_dim,
                  "provenance": dataset.provenance}
        if dataset.image_shape is not None:
            header["image_shape"] = list(dataset.image_shape)
        fh.write(json.dumps(header) + "\n")
        for x, y in zip(dataset.features, dataset.labels):
            fh.write(json.dumps({"label": int(y), "features": x.tolist()}) + "\n")


def load_jsonl(path):
    with open(path) as fh:
        header = json.loads(fh.readline())
        feats, labels = [], []
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            labels.append(row["label"])
            feats.append(row["features"])
    d = header["feature_dim"]
    features = np.asarray(feats, dtype=np.float64).reshape(len(labels), d)
    shape = header.get("image_shape")
    return Dataset(features, np.asarray(labels, dtype=np.int64), header["num_classes"],
                   header.get("provenance", str(path)),
                   image_shape=tuple(shape) if shape else None)

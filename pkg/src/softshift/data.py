"""Synthetic source/target domains built from Gaussian class blobs.

Class means live in a low-rank subspace so that some classes sit closer to
each other than others; that adjacency is the class-similarity structure a
source model picks up. The target domain applies the same rigid rotation to
every sample and then moves each class by ``shift * blob_std`` along a fixed
unit direction. The direction is shared by all classes unless
``direction_jitter`` perturbs it per class.
"""
import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special

from .errors import CorruptDataset, InvalidConfig
from .mathcore import SeededRng

DATASET_MAGIC = b"SSHFTDAT"
DATASET_VERSION = 1

DOMAINS = ("source", "target")
SPLITS = ("train", "validation", "test")


@dataclass(frozen=True)
class ShiftConfig:
    num_classes: int = 10
    dim: int = 20
    source_train: int = 1000        # samples per class
    target_train: int = 50
    validation: int = 100
    test: int = 200
    shift: float = 0.0              # in units of blob_std
    rotation: float = 0.0           # radians
    label_noise: float = 0.0        # fraction of target train labels swapped between similar classes
    geometry_seed: int = 0
    blob_std: float = 1.0
    class_spread: float = 1.5
    latent_rank: int = 4
    direction_jitter: float = 0.0   # 0 keeps the shift a rigid translation

    def __post_init__(self):
        if self.num_classes < 2:
            raise InvalidConfig("need at least two classes")
        if self.dim < 2:
            raise InvalidConfig("feature dimension must be at least 2")
        if not 1 <= self.latent_rank <= self.dim:
            raise InvalidConfig("latent_rank must lie in 1..dim")
        for name in ("source_train", "target_train", "validation", "test"):
            if getattr(self, name) < 1:
                raise InvalidConfig(f"{name} must be at least 1 sample per class")
        if self.shift < 0:
            raise InvalidConfig("shift must be non-negative")
        if not 0.0 <= self.label_noise < 1.0:
            raise InvalidConfig("label_noise must lie in [0, 1)")
        if self.direction_jitter < 0:
            raise InvalidConfig("direction_jitter must be non-negative")
        if self.blob_std <= 0 or self.class_spread <= 0:
            raise InvalidConfig("blob_std and class_spread must be positive")

    def per_class(self, domain, split):
        if split == "train":
            return self.source_train if domain == "source" else self.target_train
        return self.validation if split == "validation" else self.test


@dataclass
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    domain: str = "source"
    split: str = "train"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.intp)
        if self.features.ndim != 2 or self.labels.ndim != 1:
            raise InvalidConfig("features must be N x d and labels length N")
        if self.features.shape[0] != self.labels.shape[0]:
            raise InvalidConfig(
                f"{self.features.shape[0]} feature rows but {self.labels.shape[0]} labels")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise InvalidConfig("label out of range")

    def __len__(self):
        return self.labels.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    def class_counts(self):
        return np.bincount(self.labels, minlength=self.num_classes)

    def same_as(self, other):
        return (self.num_classes == other.num_classes and self.domain == other.domain
                and self.split == other.split
                and self.features.tobytes() == other.features.tobytes()
                and np.array_equal(self.labels, other.labels))


@dataclass
class ParallelDataset:
    """Aligned source/target views of the same latent draws."""

    source_features: np.ndarray
    target_features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if not (self.source_features.shape == self.target_features.shape
                and self.source_features.shape[0] == self.labels.shape[0]):
            raise InvalidConfig("parallel views must have equal shapes and one label per pair")

    def __len__(self):
        return self.labels.shape[0]


@dataclass
class Geometry:
    means: np.ndarray           # (D_C, d)
    directions: np.ndarray      # (D_C, d) unit shift direction per class
    rotation: np.ndarray        # (d, d) orthogonal

    def target_means(self, cfg):
        return self.means @ self.rotation.T + cfg.shift * cfg.blob_std * self.directions

    def to_target(self, cfg, latent, labels):
        return latent @ self.rotation.T + cfg.shift * cfg.blob_std * self.directions[labels]


@dataclass
class DomainPair:
    cfg: ShiftConfig
    seed: int
    geometry: Geometry
    source: dict
    target: dict
    parallel: ParallelDataset


def make_geometry(cfg):
    rng = SeededRng(cfg.geometry_seed).child("geometry")
    d, k, r = cfg.dim, cfg.num_classes, cfg.latent_rank
    basis, _ = np.linalg.qr(rng.child("basis").standard_normal(d * d).reshape(d, d))
    latent = rng.child("means").standard_normal(k * r).reshape(k, r) * cfg.class_spread
    means = latent @ basis[:, :r].T
    common = rng.child("shift").standard_normal(r)
    common /= np.linalg.norm(common)
    jitter = rng.child("jitter").standard_normal(k * r).reshape(k, r) / np.sqrt(r)
    directions = (common + cfg.direction_jitter * jitter) @ basis[:, :r].T
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    # rotate in the plane of the two leading class-mean axes
    u1, u2 = basis[:, 0], basis[:, 1]
    c, s = np.cos(cfg.rotation), np.sin(cfg.rotation)
    rot = (np.eye(d) + (c - 1.0) * (np.outer(u1, u1) + np.outer(u2, u2))
           + s * (np.outer(u2, u1) - np.outer(u1, u2)))
    return Geometry(means, directions, rot)


def _latent_split(cfg, geometry, rng, per_class):
    labels = np.repeat(np.arange(cfg.num_classes), per_class)
    labels = labels[rng.child("order").permutation(labels.size)]
    noise = rng.child("noise").standard_normal(labels.size * cfg.dim).reshape(labels.size, cfg.dim)
    return geometry.means[labels] + cfg.blob_std * noise, labels


def confusability(means, blob_std):
    """Pairwise Bayes error between two isotropic blobs, zero on the diagonal."""
    dist = np.sqrt(((means[:, None, :] - means[None, :, :]) ** 2).sum(axis=2))
    w = special.ndtr(-dist / (2.0 * blob_std))
    np.fill_diagonal(w, 0.0)
    return w


def _swap_labels(labels, fraction, weights, rng):
    """Swap labels between pairs of samples from confusable classes.

    About ``fraction`` of the samples end up carrying another class's label,
    the partner class being drawn in proportion to ``weights``. Swapping keeps
    every per-class count unchanged.
    """
    n_pairs = int(round(fraction * labels.size / 2))
    out = labels.copy()
    if n_pairs == 0:
        return out
    gen = rng.generator
    k = weights.shape[0]
    pools = [list(gen.permutation(np.flatnonzero(labels == c))) for c in range(k)]
    used = set()
    for i in gen.permutation(labels.size):
        if n_pairs == 0:
            break
        if i in used:
            continue
        for pool in pools:
            while pool and pool[-1] in used:
                pool.pop()
        a = labels[i]
        w = np.array([weights[a, b] if pools[b] else 0.0 for b in range(k)])
        if w.sum() <= 0:
            continue
        b = gen.choice(k, p=w / w.sum())
        j = pools[b].pop()
        used.update((i, j))
        out[i], out[j] = b, a
        n_pairs -= 1
    return out


def generate_domain_pair(cfg, rng):
    """Draw train/validation/test splits for both domains plus parallel pairs.

    ``rng`` is a :class:`SeededRng`; the class geometry comes from
    ``cfg.geometry_seed`` so that different sample seeds share one task.
    """
    if not isinstance(cfg, ShiftConfig):
        raise InvalidConfig("cfg must be a ShiftConfig")
    geometry = make_geometry(cfg)
    weights = confusability(geometry.means, cfg.blob_std)
    meta = {"cfg": asdict(cfg), "seed": rng.seed}
    source, target = {}, {}
    parallel = None
    for split in SPLITS:
        for domain, bucket in (("source", source), ("target", target)):
            stream = rng.child("data", domain, split)
            latent, labels = _latent_split(cfg, geometry, stream, cfg.per_class(domain, split))
            feats = latent if domain == "source" else geometry.to_target(cfg, latent, labels)
            if split == "train" and domain == "target":
                labels = _swap_labels(labels, cfg.label_noise, weights, stream.child("noise-labels"))
                parallel = ParallelDataset(latent.copy(), feats, labels)
            bucket[split] = LabeledDataset(feats, labels, cfg.num_classes, domain, split, dict(meta))
    return DomainPair(cfg, rng.seed, geometry, source, target, parallel)


def concat(a, b, rng=None, domain="mixed"):
    """Union of two datasets, optionally in a seeded shuffled order."""
    feats = np.vstack([a.features, b.features])
    labels = np.concatenate([a.labels, b.labels])
    if rng is not None:
        order = rng.permutation(labels.size)
        feats, labels = feats[order], labels[order]
    return LabeledDataset(feats, labels, a.num_classes, domain, a.split)


def nearest_mean_predict(means, features):
    """Nearest-class-mean rule; Bayes-optimal for equal isotropic blobs and priors."""
    d2 = ((features[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)


def bayes_accuracy(pair, domain="target", split="test"):
    ds = (pair.source if domain == "source" else pair.target)[split]
    means = pair.geometry.means if domain == "source" else pair.geometry.target_means(pair.cfg)
    return float(np.mean(nearest_mean_predict(means, ds.features) == ds.labels))


# -- file format ---------------------------------------------------------------
# magic(8) | version u32 | header_len u32 | header JSON (utf-8) |
# N u64 | d u32 | D_C u32 | features f64[N*d] | labels u32[N], little-endian

def save_dataset(ds, cfg=None, seed=None):
    header = dict(ds.meta)
    if cfg is not None:
        header["cfg"] = asdict(cfg)
    if seed is not None:
        header["seed"] = int(seed)
    header.update(domain=ds.domain, split=ds.split)
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    return b"".join([
        DATASET_MAGIC,
        struct.pack("<II", DATASET_VERSION, len(blob)),
        blob,
        struct.pack("<QII", len(ds), ds.dim, ds.num_classes),
        np.ascontiguousarray(ds.features, dtype="<f8").tobytes(),
        np.asarray(ds.labels, dtype="<u4").tobytes(),
    ])


def load_dataset(data):
    data = bytes(data)
    if data[:8] != DATASET_MAGIC:
        raise CorruptDataset("bad magic header", 0)
    if len(data) < 16:
        raise CorruptDataset("truncated header", len(data))
    version, hlen = struct.unpack_from("<II", data, 8)
    if version != DATASET_VERSION:
        raise CorruptDataset(f"unsupported dataset version {version}", 8)
    off = 16
    if off + hlen + 16 > len(data):
        raise CorruptDataset("truncated header", len(data))
    try:
        header = json.loads(data[off:off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptDataset(f"unreadable header: {exc}", off) from exc
    off += hlen
    n, d, k = struct.unpack_from("<QII", data, off)
    off += 16
    expected = off + 8 * n * d + 4 * n
    if len(data) != expected:
        raise CorruptDataset(
            f"header declares N={n}, d={d} ({expected} bytes) but file has {len(data)} bytes",
            min(len(data), expected))
    feats = np.frombuffer(data, dtype="<f8", count=n * d, offset=off).astype(np.float64).reshape(n, d)
    off += 8 * n * d
    labels = np.frombuffer(data, dtype="<u4", count=n, offset=off).astype(np.intp)
    if n and labels.max() >= k:
        raise CorruptDataset(f"label {labels.max()} out of range for D_C={k}", off)
    meta = {key: v for key, v in header.items() if key not in ("domain", "split")}
    return LabeledDataset(feats, labels, k, header.get("domain", "source"),
                          header.get("split", "train"), meta)

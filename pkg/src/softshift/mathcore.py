"""Dense float64 primitives: checked matmul, tempered softmax, seeded RNG.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64 in C order.
Softmax functions operate along the last axis, so they accept either a single
logit vector or a batch of logit rows.
"""
import zlib

import numpy as np

from .errors import DimensionMismatch, InvalidTemperature

__all__ = [
    "as_matrix",
    "matmul",
    "softmax_tempered",
    "log_softmax_tempered",
    "SeededRng",
    "standard_normal",
]


def as_matrix(a):
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got {a.ndim} dimensions")
    return a


def matmul(a, b):
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionMismatch(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def _check_temperature(T):
    if not np.isfinite(T) or T <= 0:
        raise InvalidTemperature(f"temperature must be positive and finite, got {T!r}")


def log_softmax_tempered(z, T=1.0):
    """log q = z/T - logsumexp(z/T), with the row max subtracted first."""
    _check_temperature(T)
    z = np.asarray(z, dtype=np.float64)
    scaled = z / T
    shifted = scaled - scaled.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax_tempered(z, T=1.0):
    _check_temperature(T)
    z = np.asarray(z, dtype=np.float64)
    scaled = z / T
    e = np.exp(scaled - scaled.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _tag_words(tag):
    if isinstance(tag, (int, np.integer)):
        if tag < 0:
            raise ValueError("integer tags must be non-negative")
        return [int(tag)]
    # crc32 is stable across platforms and Python versions, unlike hash()
    return [zlib.crc32(str(tag).encode("utf-8"))]


class SeededRng:
    """PCG64 stream keyed by a 64-bit seed plus an optional tag path.

    ``child(*tags)`` derives an independent stream whose identity depends only
    on the root seed and the tags, never on how much of the parent stream has
    been consumed.
    """

    def __init__(self, seed, _path=()):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
        self.seed = seed
        self.path = tuple(_path)
        words = [seed & 0xFFFFFFFF, seed >> 32]
        for tag in self.path:
            words.extend(_tag_words(tag))
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(words)))

    def child(self, *tags):
        return SeededRng(self.seed, self.path + tuple(tags))

    @property
    def generator(self):
        return self._gen

    def standard_normal(self, size):
        return self._gen.standard_normal(size)

    def permutation(self, n):
        return self._gen.permutation(n)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def __repr__(self):
        return f"SeededRng(seed={self.seed}, path={self.path!r})"


def standard_normal(rng, n):
    if n < 0:
        raise ValueError("n must be non-negative")
    return rng.standard_normal(int(n))

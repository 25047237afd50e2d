"""Per-class mean soft labels computed from a source model over source data.

Row ``c`` of the table is the average tempered posterior the source model
assigns to source samples of class ``c``. During adaptation the row is picked
by the sample's label, so every sample of a class gets the same soft target.
"""
import hashlib
import math
import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import CorruptTable, FingerprintMismatch, MissingClassSamples, TemperatureMismatch
from .losses import SIMPLEX_TOL, SoftTargetBatch, check_labels
from .mathcore import softmax_tempered
from .network import forward, save_model

TABLE_MAGIC = b"SSHFTMSL"
TABLE_VERSION = 1


def model_fingerprint(params):
    """SHA-256 of the model's checkpoint bytes."""
    return hashlib.sha256(save_model(params)).digest()


@dataclass(frozen=True)
class MeanSoftLabelTable:
    rows: np.ndarray
    temperature: float
    counts: np.ndarray
    fingerprint: bytes = bytes(32)

    @property
    def num_classes(self):
        return self.rows.shape[0]

    def __eq__(self, other):
        if not isinstance(other, MeanSoftLabelTable):
            return NotImplemented
        return (self.temperature == other.temperature
                and self.fingerprint == other.fingerprint
                and np.array_equal(self.counts, other.counts)
                and self.rows.tobytes() == other.rows.tobytes())

    def __hash__(self):
        return hash((self.rows.tobytes(), self.temperature, self.fingerprint))

    def require_temperature(self, T):
        if self.temperature != T:
            raise TemperatureMismatch(
                f"table was computed at T={self.temperature:g}, run requested T={T:g}")

    def as_text(self, digits=4):
        lines = [f"# T={self.temperature:g}"]
        for c, row in enumerate(self.rows):
            lines.append(f"{c}\t{int(self.counts[c])}\t" + " ".join(f"{v:.{digits}f}" for v in row))
        return "\n".join(lines) + "\n"


def compute_mean_soft_labels(source_model, source_data, T=1.0, chunk_size=None):
    """Average tempered source posteriors per class over ``source_data``.

    ``chunk_size`` only limits how many samples go through the network at once.
    Sums are exactly rounded (``math.fsum``), so the result does not depend on
    sample order within a class.
    """
    features = np.asarray(source_data.features, dtype=np.float64)
    k = source_model.num_classes
    labels = check_labels(source_data.labels, k)
    counts = np.bincount(labels, minlength=k).astype(np.uint64)
    missing = np.flatnonzero(counts == 0)
    if missing.size:
        raise MissingClassSamples(int(missing[0]))
    n = features.shape[0]
    step = n if not chunk_size else int(chunk_size)
    probs = np.empty((n, k))
    for start in range(0, n, max(step, 1)):
        logits, _ = forward(source_model, features[start:start + step])
        probs[start:start + step] = softmax_tempered(logits, T)
    rows = np.empty((k, k))
    for c in range(k):
        members = probs[labels == c]
        for j in range(k):
            rows[c, j] = math.fsum(members[:, j]) / members.shape[0]
    return MeanSoftLabelTable(rows, float(T), counts, model_fingerprint(source_model))


def lookup(table, labels):
    labels = check_labels(labels, table.num_classes)
    return SoftTargetBatch(table.rows[labels], table.temperature, "mean-table")


def diagonal_dominance(table):
    """Fraction of rows whose largest entry is the diagonal one."""
    return float(np.mean(np.argmax(table.rows, axis=1) == np.arange(table.num_classes)))


# -- file format ---------------------------------------------------------------
# magic(8) | version u32 | D_C u32 | T f64 | counts u64[D_C] | fingerprint(32) |
# rows f64[D_C*D_C] row-major, little-endian

def save_table(table):
    k = table.num_classes
    return b"".join([
        TABLE_MAGIC,
        struct.pack("<IId", TABLE_VERSION, k, table.temperature),
        np.asarray(table.counts, dtype="<u8").tobytes(),
        bytes(table.fingerprint),
        np.ascontiguousarray(table.rows, dtype="<f8").tobytes(),
    ])


def load_table(data, expected_fingerprint=None):
    data = bytes(data)
    if data[:8] != TABLE_MAGIC:
        raise CorruptTable("bad magic header", 0)
    if len(data) < 24:
        raise CorruptTable("truncated header", len(data))
    version, k, T = struct.unpack_from("<IId", data, 8)
    if version != TABLE_VERSION:
        raise CorruptTable(f"unsupported table version {version}", 8)
    expected = 24 + 8 * k + 32 + 8 * k * k
    if len(data) != expected:
        raise CorruptTable(f"expected {expected} bytes for D_C={k}, got {len(data)}",
                           min(len(data), expected))
    if not (math.isfinite(T) and T > 0):
        raise CorruptTable(f"invalid temperature {T!r}", 16)
    off = 24
    counts = np.frombuffer(data, dtype="<u8", count=k, offset=off).astype(np.uint64)
    off += 8 * k
    fingerprint = data[off:off + 32]
    off += 32
    rows = np.frombuffer(data, dtype="<f8", count=k * k, offset=off).astype(np.float64).reshape(k, k)
    if np.any(counts == 0):
        raise CorruptTable(f"class {int(np.flatnonzero(counts == 0)[0])} has zero samples", 24)
    sums = rows.sum(axis=1)
    bad = np.flatnonzero(~np.isfinite(sums) | (np.abs(sums - 1.0) > SIMPLEX_TOL))
    if bad.size or np.any(rows < 0) or np.any(rows > 1):
        row = int(bad[0]) if bad.size else int(np.flatnonzero(((rows < 0) | (rows > 1)).any(axis=1))[0])
        raise CorruptTable(f"row {row} is not a probability vector", off + 8 * k * row)
    if expected_fingerprint is not None and bytes(expected_fingerprint) != fingerprint:
        warnings.warn("mean soft-label table was computed from a different source model",
                      FingerprintMismatch, stacklevel=2)
    return MeanSoftLabelTable(rows, T, counts, fingerprint)

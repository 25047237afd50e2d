"""Hard, soft and combined training criteria with gradients w.r.t. the logits.

Every loss returns ``(value, dlogits)``. Values are batch means, so gradients
carry the ``1/N`` factor. Class labels are 0-based integers.
"""
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidTargets, InvalidTemperature, LabelOutOfRange
from .mathcore import as_matrix, log_softmax_tempered, softmax_tempered
from .network import forward

PROVENANCES = ("teacher-on-target", "teacher-on-parallel-source", "mean-table", "external")

SIMPLEX_TOL = 1e-6
ROUNDOFF_TOL = 1e-12   # rows this close to 1 are left untouched


@dataclass(frozen=True)
class SoftTargetBatch:
    probs: np.ndarray
    temperature: float
    provenance: str = "external"

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        object.__setattr__(self, "probs", check_simplex_rows(self.probs))

    def __len__(self):
        return self.probs.shape[0]

    def take(self, idx):
        return SoftTargetBatch(self.probs[idx], self.temperature, self.provenance)


def check_simplex_rows(probs, tol=SIMPLEX_TOL):
    """Validate rows as probability vectors, renormalising drift within ``tol``."""
    p = as_matrix(probs)
    if not np.all(np.isfinite(p)):
        raise InvalidTargets("targets contain non-finite entries")
    if np.any(p < -tol) or np.any(p > 1.0 + tol):
        raise InvalidTargets("target entries fall outside [0, 1]")
    sums = p.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > tol)
    if bad.size:
        raise InvalidTargets(f"row {bad[0]} sums to {sums[bad[0]]!r}, not 1")
    p = np.clip(p, 0.0, 1.0)
    sums = p.sum(axis=1, keepdims=True)
    if np.any(np.abs(sums - 1.0) > ROUNDOFF_TOL):
        p = p / sums
    return p


def onehot(labels, num_classes):
    labels = check_labels(labels, num_classes)
    out = np.zeros((labels.size, num_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def check_labels(labels, num_classes):
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise LabelOutOfRange("labels must be a 1-D integer array")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        bad = labels[(labels < 0) | (labels >= num_classes)][0]
        raise LabelOutOfRange(f"label {bad} outside 0..{num_classes - 1}")
    return labels.astype(np.intp, copy=False)


def entropy(probs):
    p = as_matrix(probs)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return float(-terms.sum(axis=1).mean())


def hard_loss(logits, labels):
    """Cross entropy against one-hot labels, always at temperature 1."""
    z = as_matrix(logits)
    n, k = z.shape
    labels = check_labels(labels, k)
    if labels.size != n:
        raise LabelOutOfRange(f"{labels.size} labels for {n} logit rows")
    logp = log_softmax_tempered(z, 1.0)
    rows = np.arange(n)
    value = -logp[rows, labels].sum() / n
    grad = np.exp(logp)
    grad[rows, labels] -= 1.0
    return float(value), grad / n


def soft_cross_entropy(logits, targets, T=1.0):
    """Cross entropy of tempered model outputs against probability targets.

    The returned gradient is the plain derivative ``(q - target) / (N*T)``;
    the ``T**2`` compensation belongs to :func:`combined_loss`.
    """
    if not math.isfinite(T) or T <= 0:
        raise InvalidTemperature(f"temperature must be positive, got {T!r}")
    z = as_matrix(logits)
    t = targets.probs if isinstance(targets, SoftTargetBatch) else check_simplex_rows(targets)
    if t.shape != z.shape:
        raise InvalidTargets(f"targets {t.shape} do not match logits {z.shape}")
    n = z.shape[0]
    logq = log_softmax_tempered(z, T)
    value = -(t * logq).sum(axis=1).sum() / n
    grad = (np.exp(logq) - t) / (n * T)
    return float(value), grad


@dataclass(frozen=True)
class LossWeights:
    """Temperature and soft-loss weight; ``soft_only`` stands for rho = infinity."""

    temperature: float = 1.0
    rho: float = 0.0
    soft_only: bool = False

    def __post_init__(self):
        if not math.isfinite(self.temperature) or self.temperature <= 0:
            raise InvalidTemperature(f"temperature must be positive, got {self.temperature!r}")
        if self.soft_only:
            if self.rho not in (0.0, math.inf):
                raise ValueError("soft_only excludes a finite rho")
        elif not (math.isfinite(self.rho) and self.rho >= 0):
            raise ValueError(f"rho must be finite and non-negative, got {self.rho!r}")

    @classmethod
    def from_rho(cls, temperature, rho):
        if math.isinf(rho):
            return cls(temperature, math.inf, True)
        return cls(temperature, float(rho), False)

    @property
    def rho_label(self):
        return "inf" if self.soft_only else f"{self.rho:g}"


def combined_loss(logits, labels, targets, weights):
    """hard + rho*soft, with the soft gradient multiplied by T**2.

    The returned gradient is therefore the exact gradient of
    ``hard + rho * T**2 * soft``; the returned value is ``hard + rho * soft``.
    """
    T = weights.temperature
    if weights.soft_only:
        value, grad = soft_cross_entropy(logits, targets, T)
        return value, (T * T) * grad
    hard_value, hard_grad = hard_loss(logits, labels)
    if weights.rho == 0.0:
        return hard_value, hard_grad
    soft_value, soft_grad = soft_cross_entropy(logits, targets, T)
    return hard_value + weights.rho * soft_value, hard_grad + (weights.rho * T * T) * soft_grad


def teacher_soft_targets(teacher, batch, T=1.0, provenance="teacher-on-target"):
    """Tempered posteriors of a (frozen) teacher model over ``batch``."""
    logits, _ = forward(teacher, batch)
    return SoftTargetBatch(softmax_tempered(logits, T), T, provenance)

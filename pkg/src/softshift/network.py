"""Feedforward classifier with a hand-written backward pass and RMSprop.

Weights are stored as ``(input_dim, output_dim)`` so a batch of row vectors
maps to logits as ``X @ W + b``.
"""
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CorruptCheckpoint, DimensionMismatch, InvalidSpec, ShapeMismatch
from .mathcore import as_matrix

ACTIVATIONS = ("tanh", "relu", "linear")

CHECKPOINT_MAGIC = b"SSHFTCKP"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class LayerSpec:
    input_dim: int
    output_dim: int
    activation: str = "tanh"


def mlp_specs(input_dim, num_classes, hidden=(64, 64), activation="tanh"):
    """Layer chain with the given hidden widths and a linear logit layer."""
    dims = [input_dim, *hidden, num_classes]
    specs = [LayerSpec(a, b, activation) for a, b in zip(dims[:-2], dims[1:-1])]
    specs.append(LayerSpec(dims[-2], dims[-1], "linear"))
    return specs


def validate_specs(specs):
    if not specs:
        raise InvalidSpec("a network needs at least one layer")
    for k, s in enumerate(specs):
        if s.input_dim < 1 or s.output_dim < 1:
            raise InvalidSpec(f"layer {k} has non-positive dims {s.input_dim}x{s.output_dim}")
        if s.activation not in ACTIVATIONS:
            raise InvalidSpec(f"layer {k} has unknown activation {s.activation!r}")
        if k and specs[k - 1].output_dim != s.input_dim:
            raise InvalidSpec(
                f"layer {k - 1} outputs {specs[k - 1].output_dim} but layer {k} expects {s.input_dim}"
            )
    if specs[-1].activation != "linear":
        raise InvalidSpec("the final layer must be linear (logits)")


@dataclass
class ModelParams:
    specs: list
    weights: list
    biases: list

    def __post_init__(self):
        self.specs = list(self.specs)
        validate_specs(self.specs)
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        if len(self.weights) != len(self.specs) or len(self.biases) != len(self.specs):
            raise ShapeMismatch("one weight and one bias per layer required")
        for k, (s, w, b) in enumerate(zip(self.specs, self.weights, self.biases)):
            if w.shape != (s.input_dim, s.output_dim) or b.shape != (s.output_dim,):
                raise ShapeMismatch(
                    f"layer {k}: weight {w.shape} / bias {b.shape} do not match spec "
                    f"{s.input_dim}x{s.output_dim}"
                )

    @property
    def input_dim(self):
        return self.specs[0].input_dim

    @property
    def num_classes(self):
        return self.specs[-1].output_dim

    def arrays(self):
        """Parameters in checkpoint order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self):
        return ModelParams(self.specs, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def zeros_like(self):
        return ModelParams(self.specs, [np.zeros_like(w) for w in self.weights],
                           [np.zeros_like(b) for b in self.biases])

    def equals(self, other):
        """Exact (bitwise) equality of specs and every parameter."""
        return (
            self.specs == other.specs
            and all(np.array_equal(a, b) and a.tobytes() == b.tobytes()
                    for a, b in zip(self.arrays(), other.arrays()))
        )


def init_params(specs, rng):
    """Weights ~ N(0, 1/input_dim), biases zero."""
    specs = list(specs)
    validate_specs(specs)
    weights, biases = [], []
    for k, s in enumerate(specs):
        draws = rng.child("init", k).standard_normal(s.input_dim * s.output_dim)
        weights.append(draws.reshape(s.input_dim, s.output_dim) / np.sqrt(s.input_dim))
        biases.append(np.zeros(s.output_dim))
    return ModelParams(specs, weights, biases)


def _activate(name, a):
    if name == "tanh":
        return np.tanh(a)
    if name == "relu":
        return np.maximum(a, 0.0)
    return a


def _activation_grad(name, pre, post, upstream):
    if name == "tanh":
        return upstream * (1.0 - post * post)
    if name == "relu":
        return upstream * (pre > 0.0)
    return upstream


def forward(params, batch):
    """Return ``(logits, cache)``; ``cache`` holds what ``backward`` needs."""
    x = as_matrix(batch)
    if x.shape[1] != params.input_dim:
        raise DimensionMismatch(f"batch has {x.shape[1]} features, network expects {params.input_dim}")
    inputs, pres, posts = [], [], []
    h = x
    for s, w, b in zip(params.specs, params.weights, params.biases):
        inputs.append(h)
        pre = h @ w + b
        post = _activate(s.activation, pre)
        pres.append(pre)
        posts.append(post)
        h = post
    return h, (inputs, pres, posts)


def predict_logits(params, batch):
    return forward(params, batch)[0]


def backward(params, cache, dlogits):
    inputs, pres, posts = cache
    g = np.asarray(dlogits, dtype=np.float64)
    if g.shape != posts[-1].shape:
        raise ShapeMismatch(f"upstream gradient {g.shape} does not match logits {posts[-1].shape}")
    n = len(params.specs)
    dw, db = [None] * n, [None] * n
    for k in range(n - 1, -1, -1):
        g = _activation_grad(params.specs[k].activation, pres[k], posts[k], g)
        dw[k] = inputs[k].T @ g
        db[k] = g.sum(axis=0)
        if k:
            g = g @ params.weights[k].T
    return ModelParams(params.specs, dw, db)


@dataclass
class RmspropState:
    learning_rate: float
    decay: float = 0.9
    epsilon: float = 1e-8
    accumulators: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, learning_rate, decay=0.9, epsilon=1e-8):
        if not 0.0 < decay < 1.0:
            raise ValueError("decay must lie in (0, 1)")
        if epsilon <= 0:
            raise ValueError("epsilon must be positive")
        return cls(learning_rate, decay, epsilon, [np.zeros_like(a) for a in params.arrays()])


def rmsprop_step(params, grads, state):
    """In-place update of ``params`` and ``state`` accumulators; returns both."""
    p_arrays, g_arrays = params.arrays(), grads.arrays()
    if len(p_arrays) != len(g_arrays) or len(p_arrays) != len(state.accumulators):
        raise ShapeMismatch("parameter, gradient and accumulator counts differ")
    for p, g, acc in zip(p_arrays, g_arrays, state.accumulators):
        if p.shape != g.shape or p.shape != acc.shape:
            raise ShapeMismatch(f"shape mismatch: param {p.shape}, grad {g.shape}, acc {acc.shape}")
        acc *= state.decay
        acc += (1.0 - state.decay) * g * g
        p -= state.learning_rate * g / (np.sqrt(acc) + state.epsilon)
    return params, state


# -- checkpoint format -------------------------------------------------------
# magic(8) | version u32 | layer count u32 |
#   per layer: input_dim u32, output_dim u32, activation u8 |
#   per layer: weights f64[in*out] row-major, bias f64[out]
# all little-endian

def save_model(params):
    parts = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(params.specs))]
    for s in params.specs:
        parts.append(struct.pack("<IIB", s.input_dim, s.output_dim, ACTIVATIONS.index(s.activation)))
    for w, b in zip(params.weights, params.biases):
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    return b"".join(parts)


def _unpack(fmt, data, offset, what):
    size = struct.calcsize(fmt)
    if offset + size > len(data):
        raise CorruptCheckpoint(f"truncated while reading {what}", offset)
    return struct.unpack_from(fmt, data, offset), offset + size


def load_model(data):
    data = bytes(data)
    if data[:8] != CHECKPOINT_MAGIC:
        raise CorruptCheckpoint("bad magic header", 0)
    (version, n_layers), off = _unpack("<II", data, 8, "header")
    if version != CHECKPOINT_VERSION:
        raise CorruptCheckpoint(f"unsupported checkpoint version {version}", 8)
    if n_layers < 1:
        raise CorruptCheckpoint("checkpoint declares no layers", 12)
    specs = []
    for _ in range(n_layers):
        start = off
        (din, dout, act), off = _unpack("<IIB", data, off, "layer spec")
        if act >= len(ACTIVATIONS):
            raise CorruptCheckpoint(f"unknown activation tag {act}", start + 8)
        specs.append(LayerSpec(din, dout, ACTIVATIONS[act]))
    weights, biases = [], []
    for s in specs:
        for shape, bucket in (((s.input_dim, s.output_dim), weights), ((s.output_dim,), biases)):
            count = int(np.prod(shape))
            end = off + 8 * count
            if end > len(data):
                raise CorruptCheckpoint("truncated parameter block", off)
            bucket.append(np.frombuffer(data, dtype="<f8", count=count, offset=off)
                          .astype(np.float64).reshape(shape))
            off = end
    if off != len(data):
        raise CorruptCheckpoint(f"{len(data) - off} trailing bytes", off)
    try:
        return ModelParams(specs, weights, biases)
    except (InvalidSpec, ShapeMismatch) as exc:
        raise CorruptCheckpoint(f"invalid layer chain: {exc}", 16) from exc

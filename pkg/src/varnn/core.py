"""Numerical substrate: dense kernels, nonlinearities, softmax loss, RNG and
dropout masks.

Matrices and vectors are plain float64 numpy arrays. Masks are read-only
float64 arrays whose entries are either 0 or 1/(1-p) (inverted dropout).
"""

from collections.abc import Mapping

import numpy as np

DTYPE = np.float64


class ShapeError(ValueError):
    pass


class InvalidProbabilityError(ValueError):
    pass


def _shape_str(a):
    return "x".join(str(d) for d in np.shape(a)) or "scalar"


def make_rng(seed):
    """Counter-based generator (Philox); same seed gives the same stream on
    every platform numpy supports."""
    return np.random.Generator(np.random.Philox(int(seed)))


def affine(W, x, b=None):
    W = np.asarray(W, dtype=DTYPE)
    x = np.asarray(x, dtype=DTYPE)
    if W.ndim != 2 or x.ndim != 1 or W.shape[1] != x.shape[0]:
        raise ShapeError(f"affine: matrix {_shape_str(W)} vs vector {_shape_str(x)}")
    out = W @ x
    if b is not None:
        b = np.asarray(b, dtype=DTYPE)
        if b.shape != (W.shape[0],):
            raise ShapeError(f"affine: matrix {_shape_str(W)} vs bias {_shape_str(b)}")
        out = out + b
    return out


def sigm(u):
    # tanh form: stable for large |u| without branching
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(u, dtype=DTYPE)))


_UNARY = {
    "sigm": sigm,
    "tanh": np.tanh,
    "sub-from-one": lambda a: 1.0 - a,
}
_BINARY = {
    "hadamard": np.multiply,
    "add": np.add,
}


def elementwise(kind, a, b=None):
    """Apply a pointwise op. Unary kinds: sigm, tanh, sub-from-one.
    Binary kinds: hadamard, add."""
    a = np.asarray(a, dtype=DTYPE)
    if kind in _UNARY:
        return _UNARY[kind](a)
    if kind not in _BINARY:
        raise ValueError(f"unknown elementwise kind {kind!r}")
    if b is None:
        raise ShapeError(f"{kind} needs two operands")
    b = np.asarray(b, dtype=DTYPE)
    if a.shape != b.shape:
        raise ShapeError(f"{kind}: {_shape_str(a)} vs {_shape_str(b)}")
    return _BINARY[kind](a, b)


def softmax(logits):
    z = np.asarray(logits, dtype=DTYPE)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_xent(logits, target):
    """Return ``(loss, probs)`` with ``loss = -log softmax(logits)[target]``."""
    logits = np.asarray(logits, dtype=DTYPE)
    if not 0 <= target < logits.shape[0]:
        raise IndexError(f"target {target} out of range for {logits.shape[0]} classes")
    z = logits - logits.max()
    log_norm = np.log(np.exp(z).sum())
    probs = np.exp(z - log_norm)
    return float(log_norm - z[target]), probs


def sample_mask(length, drop_prob, rng):
    """Bernoulli keep-mask with inverted scaling.

    Consumes exactly ``length`` uniform draws from ``rng``. The returned
    array is read-only so a mask cannot drift once sampled.
    """
    if not 0.0 <= drop_prob < 1.0:
        raise InvalidProbabilityError(f"drop probability must be in [0, 1), got {drop_prob}")
    u = rng.random(length)
    mask = np.where(u >= drop_prob, 1.0 / (1.0 - drop_prob), 0.0)
    mask.setflags(write=False)
    return mask


def identity_mask(length):
    mask = np.ones(length, dtype=DTYPE)
    mask.setflags(write=False)
    return mask


def l2_norm_sq(params):
    """Sum of squared weight entries; biases are excluded.

    Accepts a ``ModelParams`` (anything exposing ``weight_items()``) or a
    plain mapping/sequence of arrays, all of which count as weights.
    """
    if hasattr(params, "weight_items"):
        arrays = (a for _, a in params.weight_items())
    elif isinstance(params, Mapping):
        arrays = params.values()
    else:
        arrays = params
    return float(sum(np.sum(np.square(a)) for a in arrays))

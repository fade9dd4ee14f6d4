"""Objective, backpropagation through time, clipping, SGD and the epoch loop.

The objective for one sequence is the summed token NLL plus
``weight_decay * sum(w**2)`` over all non-bias weights; the decay term is
the stand-in for the KL regulariser of variational dropout training.
"""

import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import cells
from .core import l2_norm_sq, make_rng, softmax
from .corpus import score
from .network import forward_sequence, init_params, is_bias_name, predict, sample_mask_set

log = logging.getLogger(__name__)


class NonFiniteLossError(FloatingPointError):
    def __init__(self, epoch, index, value):
        super().__init__(f"non-finite loss {value} at epoch {epoch}, sequence {index}")
        self.epoch = epoch
        self.index = index


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 50
    weight_decay: float = 1e-5
    clip_norm: Optional[float] = 5.0
    seed: int = 0
    patience: int = 5

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive or None")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")

    def to_dict(self):
        return dict(self.__dict__)


def sequence_loss(logits, labels):
    if len(logits) != len(labels):
        raise ValueError(f"{len(logits)} logit rows vs {len(labels)} labels")
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    return float(np.sum(log_norm - z[np.arange(len(labels)), labels]))


def total_objective(params, loss_nll, weight_decay):
    return loss_nll + weight_decay * l2_norm_sq(params)


def bptt(params, tape, logits, labels):
    """Exact gradients of ``sequence_loss`` w.r.t. every tensor in ``params``.

    Masks recorded in the tape are constants. Embedding rows of tokens that
    do not occur in the sequence get exactly zero gradient.
    """
    T = len(tape.tokens)
    if len(labels) != T or len(logits) != T:
        raise ValueError("tape, logits and labels disagree on sequence length")
    dlogits = softmax(logits)
    dlogits[np.arange(T), labels] -= 1.0

    grads = {name: np.zeros_like(a) for name, a in params.items()}
    grads["decoder"] = dlogits.T @ tape.dec_in
    grads["decoder_bias"] = dlogits.sum(axis=0)
    dhidden = dlogits @ params["decoder"]
    if tape.regime == "naive":
        dhidden *= np.stack(tape.dec_masks)
    elif tape.regime == "variational":
        dhidden *= tape.masks.z_d

    dx = np.zeros_like(tape.x)
    for k, (d, steps) in enumerate(tape.steps.items()):
        w = params.cell_weights(d)
        H = steps[0].h.shape[0]
        dh_out = dhidden[:, k * H:(k + 1) * H]
        # reverse of the direction's own processing order
        order = range(T - 1, -1, -1) if d == "fwd" else range(T)
        dh_next = np.zeros(H)
        dc_next = np.zeros(H) if steps[0].c is not None else None
        per_step = [None] * T
        for t in order:
            per_step[t], dx_t, dh_next, dc_next = cells.backward_terms(
                steps[t], w, dh_out[t] + dh_next, dc_next)
            dx[t] += dx_t
        # weight gradients: one matmul over time per tensor
        xm = np.stack([s.xm for s in steps])
        for j, (wx, wh, b, _, _) in enumerate(per_step[0]):
            da = np.stack([terms[j][3] for terms in per_step])
            h_op = np.stack([terms[j][4] for terms in per_step])
            grads[f"{d}.{wx}"] += da.T @ xm
            grads[f"{d}.{wh}"] += da.T @ h_op
            grads[f"{d}.{b}"] += da.sum(axis=0)

    if tape.regime == "naive":
        dx *= np.stack(tape.embed_masks)
    np.add.at(grads["embedding"], tape.tokens, dx)
    return grads


def objective(params, config, seq, weight_decay=0.0, masks=None, rng=None):
    logits, _ = forward_sequence(params, config, seq.tokens, masks=masks, rng=rng)
    return total_objective(params, sequence_loss(logits, seq.labels), weight_decay)


def objective_and_gradients(params, config, seq, weight_decay=0.0, masks=None, rng=None):
    """Objective value and its full gradient (NLL plus weight decay)."""
    logits, tape = forward_sequence(params, config, seq.tokens, masks=masks, rng=rng)
    nll = sequence_loss(logits, seq.labels)
    grads = bptt(params, tape, logits, seq.labels)
    if weight_decay:
        for name, a in params.weight_items():
            grads[name] = grads[name] + 2.0 * weight_decay * a
    return total_objective(params, nll, weight_decay), grads


def global_norm(grads):
    return float(np.sqrt(sum(np.sum(np.square(g)) for g in grads.values())))


def clip_gradients(grads, threshold):
    """Rescale so the global L2 norm is at most ``threshold``."""
    norm = global_norm(grads)
    if norm <= threshold:
        return grads
    scale = threshold / norm
    return {k: g * scale for k, g in grads.items()}


def sgd_step(params, grads, learning_rate, weight_decay=0.0):
    """In-place ``w -= lr * (grad + 2 * decay * w)``; biases skip the decay."""
    for name, w in params.items():
        g = grads[name]
        if g.shape != w.shape:
            raise ValueError(f"{name}: gradient {g.shape} vs parameter {w.shape}")
        if weight_decay and not is_bias_name(name):
            g = g + 2.0 * weight_decay * w
        w -= learning_rate * g
    return params


def evaluate(params, config, sequences, label_names):
    gold, pred = [], []
    for seq in sequences:
        gold.append([label_names[i] for i in seq.labels])
        pred.append([label_names[i] for i in predict(params, config, seq.tokens)])
    return score(gold, pred)


class EpochRecord(NamedTuple):
    epoch: int
    train_loss: float
    val_precision: float
    val_recall: float
    val_f: float

    def line(self):
        return (f"{self.epoch}\t{self.train_loss:.6f}\t{self.val_precision:.4f}\t"
                f"{self.val_recall:.4f}\t{self.val_f:.4f}")


@dataclass
class TrainResult:
    params: object
    history: list = field(default_factory=list)
    best_epoch: int = 0
    best_f: float = -1.0


def train_epoch(params, config, train_set, tc, rng, epoch=0):
    """One shuffled pass of sequence-at-a-time SGD; returns mean NLL."""
    total = 0.0
    for n, idx in enumerate(rng.permutation(len(train_set))):
        seq = train_set[idx]
        masks = sample_mask_set(config, rng) if config.dropout_regime == "variational" else None
        logits, tape = forward_sequence(params, config, seq.tokens, masks=masks, rng=rng)
        nll = sequence_loss(logits, seq.labels)
        if not np.isfinite(nll):
            raise NonFiniteLossError(epoch, int(idx), nll)
        grads = bptt(params, tape, logits, seq.labels)
        if tc.clip_norm is not None:
            grads = clip_gradients(grads, tc.clip_norm)
        sgd_step(params, grads, tc.learning_rate, tc.weight_decay)
        total += nll
    return total / len(train_set)


def train(config, train_set, val_set, tc, label_names, params=None, on_epoch=None):
    """Train with validation-F model selection and early stopping.

    A single generator seeded with ``tc.seed`` drives initialisation,
    shuffling and mask sampling, so the run is fully reproducible.
    """
    if not train_set or not val_set:
        raise ValueError("training and validation sets must be non-empty")
    rng = make_rng(tc.seed)
    if params is None:
        params = init_params(config, rng)
    result = TrainResult(params.copy())
    stale = 0
    for epoch in range(1, tc.epochs + 1):
        loss = train_epoch(params, config, train_set, tc, rng, epoch)
        report = evaluate(params, config, val_set, label_names)
        rec = EpochRecord(epoch, loss, report.precision, report.recall, report.f_measure)
        result.history.append(rec)
        log.info("epoch %s", rec.line())
        if on_epoch is not None:
            on_epoch(rec)
        if report.f_measure > result.best_f:
            result.params = params.copy()
            result.best_f = report.f_measure
            result.best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= tc.patience:
                break
    return result


def format_history(history):
    header = "epoch\ttrain_loss\tval_precision\tval_recall\tval_f\n"
    return header + "".join(r.line() + "\n" for r in history)

"""Embedding -> recurrent layer (uni or bi) -> per-token decoder.

The network owns the dropout regime:

* ``none``: nothing is masked.
* ``naive``: a fresh mask per timestep on the embedding output and on the
  decoder input; recurrent transitions stay clean.
* ``variational``: one :class:`DropoutMaskSet` per sequence. ``z_x`` masks
  every embedded token (it is also the cell's input mask), ``z_h_fwd`` /
  ``z_h_bwd`` mask the recurrent input of each direction at every step, and
  ``z_d`` masks every decoder input.

In ``infer`` mode no masks are used regardless of regime.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import cells
from .core import DTYPE, ShapeError, identity_mask, sample_mask
from .cells import CELL_KINDS, is_bias

DIRECTIONS = ("uni", "bi")
REGIMES = ("none", "naive", "variational")


class RegimeError(ValueError):
    pass


@dataclass
class ModelConfig:
    vocab_size: int
    cell_kind: str = "lstm"
    direction: str = "uni"
    embed_dim: int = 100
    hidden_dim: int = 100
    label_count: int = 128
    dropout_regime: str = "none"
    drop_prob: float = 0.5
    mask_gru_candidate_hidden: bool = False

    def __post_init__(self):
        if self.cell_kind not in CELL_KINDS:
            raise ValueError(f"cell_kind must be one of {CELL_KINDS}")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")
        if self.dropout_regime not in REGIMES:
            raise ValueError(f"dropout_regime must be one of {REGIMES}")
        if min(self.vocab_size, self.embed_dim, self.hidden_dim) < 1:
            raise ValueError("dimensions must be positive")
        if self.label_count < 2:
            raise ValueError("label_count must be at least 2")
        if not 0.0 <= self.drop_prob < 1.0:
            raise ValueError("drop_prob must be in [0, 1)")

    @property
    def directions(self):
        return ("fwd", "bwd") if self.direction == "bi" else ("fwd",)

    @property
    def decoder_width(self):
        return self.hidden_dim * len(self.directions)

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class ModelParams:
    """Named float64 tensors.

    Names: ``embedding`` (V_in x E), ``fwd.<cell weight>`` and, for bi
    models, ``bwd.<cell weight>``, ``decoder`` (L x D) and ``decoder_bias``.
    """

    tensors: dict

    def __getitem__(self, name):
        return self.tensors[name]

    def items(self):
        return self.tensors.items()

    def names(self):
        return list(self.tensors)

    def weight_items(self):
        for name, a in self.tensors.items():
            if not is_bias_name(name):
                yield name, a

    def cell_weights(self, direction):
        prefix = direction + "."
        return {k[len(prefix):]: v for k, v in self.tensors.items() if k.startswith(prefix)}

    def copy(self):
        return ModelParams({k: v.copy() for k, v in self.tensors.items()})


def is_bias_name(name):
    if name == "decoder_bias":
        return True
    return "." in name and is_bias(name.split(".", 1)[1])


def param_shapes(config):
    shapes = {"embedding": (config.vocab_size, config.embed_dim)}
    for d in config.directions:
        for k, s in cells.weight_shapes(config.cell_kind, config.embed_dim, config.hidden_dim).items():
            shapes[f"{d}.{k}"] = s
    shapes["decoder"] = (config.label_count, config.decoder_width)
    shapes["decoder_bias"] = (config.label_count,)
    return shapes


def init_params(config, rng):
    """Random initial parameters; each direction gets its own weights."""
    tensors = {}
    r = np.sqrt(6.0 / (config.vocab_size + config.embed_dim))
    tensors["embedding"] = rng.uniform(-r, r, size=(config.vocab_size, config.embed_dim))
    for d in config.directions:
        w = cells.init_cell_weights(config.cell_kind, config.embed_dim, config.hidden_dim, rng)
        for k, v in w.items():
            tensors[f"{d}.{k}"] = v
    L, D = config.label_count, config.decoder_width
    r = np.sqrt(6.0 / (L + D))
    tensors["decoder"] = rng.uniform(-r, r, size=(L, D))
    tensors["decoder_bias"] = np.zeros(L, dtype=DTYPE)
    return ModelParams(tensors)


@dataclass
class DropoutMaskSet:
    z_x: np.ndarray
    z_h_fwd: np.ndarray
    z_h_bwd: Optional[np.ndarray]
    z_d: np.ndarray
    regime: str = "variational"


def sample_mask_set(config, rng):
    """Draw one variational mask set in the order z_x, z_h_fwd, z_h_bwd, z_d."""
    if config.dropout_regime != "variational":
        raise RegimeError(f"mask sets belong to the variational regime, not {config.dropout_regime!r}")
    p = config.drop_prob
    z_x = sample_mask(config.embed_dim, p, rng)
    z_h_fwd = sample_mask(config.hidden_dim, p, rng)
    z_h_bwd = sample_mask(config.hidden_dim, p, rng) if config.direction == "bi" else None
    z_d = sample_mask(config.decoder_width, p, rng)
    return DropoutMaskSet(z_x, z_h_fwd, z_h_bwd, z_d)


def identity_mask_set(config):
    bi = config.direction == "bi"
    return DropoutMaskSet(identity_mask(config.embed_dim), identity_mask(config.hidden_dim),
                          identity_mask(config.hidden_dim) if bi else None,
                          identity_mask(config.decoder_width))


def embed(params, token):
    E = params["embedding"]
    if not 0 <= token < E.shape[0]:
        raise IndexError(f"token {token} outside vocabulary of size {E.shape[0]}")
    return E[token]


@dataclass
class SequenceTape:
    tokens: np.ndarray
    regime: str
    x: np.ndarray                       # T x E raw embeddings
    steps: dict                         # direction -> list of TapeStep in time order
    hidden: np.ndarray                  # T x D concatenated hidden states
    dec_in: np.ndarray                  # T x D decoder inputs after masking
    embed_masks: Optional[list] = None  # naive only, one per step
    dec_masks: Optional[list] = None    # naive only, one per step
    masks: Optional[DropoutMaskSet] = None
    mask_gru_candidate_hidden: bool = False


def _run_direction(kind, w, xs, hidden_dim, z_x, z_h, reverse, flag):
    T = len(xs)
    state = cells.zero_state(kind, hidden_dim)
    tapes = [None] * T
    order = range(T - 1, -1, -1) if reverse else range(T)
    for t in order:
        state, tapes[t] = cells.step(kind, w, xs[t], state, z_x, z_h, flag)
    return tapes


def forward_bidirectional(params, config, xs, masks=None):
    """Run every direction over ``xs`` (T x E) from zero states.

    Returns ``(hidden, steps)`` where ``hidden[t]`` concatenates the forward
    and backward states at time ``t``.
    """
    if len(xs) < 1:
        raise ShapeError("empty sequence")
    steps = {}
    for d in config.directions:
        z_x = z_h = None
        if masks is not None:
            z_x = masks.z_x
            z_h = masks.z_h_fwd if d == "fwd" else masks.z_h_bwd
        steps[d] = _run_direction(config.cell_kind, params.cell_weights(d), xs,
                                  config.hidden_dim, z_x, z_h, d == "bwd",
                                  config.mask_gru_candidate_hidden)
    hidden = np.concatenate([np.stack([s.h for s in steps[d]]) for d in config.directions], axis=1)
    return hidden, steps


def forward_sequence(params, config, tokens, masks=None, rng=None, mode="train"):
    """Logits (T x L) for one token sequence plus the tape for BPTT."""
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.ndim != 1 or len(tokens) == 0:
        raise ShapeError("empty sequence")
    V = params["embedding"].shape[0]
    if tokens.min() < 0 or tokens.max() >= V:
        raise IndexError(f"token index outside vocabulary of size {V}")
    regime = "none" if mode == "infer" else config.dropout_regime
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be train or infer, not {mode!r}")

    x = params["embedding"][tokens]
    T = len(tokens)
    embed_masks = dec_masks = None
    cell_masks = None
    z_d = None

    if regime == "naive":
        if rng is None:
            raise RegimeError("naive training needs an rng for per-step masks")
        p = config.drop_prob
        embed_masks = [sample_mask(config.embed_dim, p, rng) for _ in range(T)]
        dec_masks = [sample_mask(config.decoder_width, p, rng) for _ in range(T)]
        cell_in = x * np.stack(embed_masks)
    elif regime == "variational":
        if masks is None:
            raise RegimeError("variational training needs a DropoutMaskSet")
        cell_masks = masks
        z_d = masks.z_d
        cell_in = x
    else:
        cell_in = x

    hidden, steps = forward_bidirectional(params, config, cell_in, cell_masks)
    if regime == "naive":
        dec_in = hidden * np.stack(dec_masks)
    elif regime == "variational":
        dec_in = hidden * z_d
    else:
        dec_in = hidden
    logits = dec_in @ params["decoder"].T + params["decoder_bias"]
    tape = SequenceTape(tokens, regime, x, steps, hidden, dec_in,
                        embed_masks, dec_masks, cell_masks,
                        config.mask_gru_candidate_hidden)
    return logits, tape


def predict(params, config, tokens):
    logits, _ = forward_sequence(params, config, tokens, mode="infer")
    return logits.argmax(axis=1)

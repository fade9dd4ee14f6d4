"""Central finite-difference verification of the analytic gradients."""

import itertools

import numpy as np

from .cells import CELL_KINDS
from .core import make_rng
from .corpus import Sequence
from .network import DIRECTIONS, ModelConfig, init_params, sample_mask_set
from .training import objective, objective_and_gradients

TOLERANCE = 1e-4
STEP = 1e-5
# Entries whose two estimates are both below this are compared absolutely;
# otherwise roundoff in a near-zero gradient would dominate the ratio.
FLOOR = 1e-6


def relative_error(analytic, numeric):
    a = np.asarray(analytic)
    n = np.asarray(numeric)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), FLOOR)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def random_instance(config, seed, length, weight_scale=0.5):
    """Random small-weight params and a random token/label sequence."""
    rng = make_rng(seed)
    params = init_params(config, rng)
    for name, a in params.items():
        a[...] = rng.uniform(-weight_scale, weight_scale, size=a.shape)
    seq = Sequence(rng.integers(0, config.vocab_size, size=length),
                   rng.integers(0, config.label_count, size=length))
    return params, seq, rng


def check_gradients(params, config, seq, weight_decay=1e-3, masks=None, mask_seed=None, step=STEP):
    """Max relative error per tensor between BPTT and central differences.

    Masks stay frozen: variational runs reuse ``masks``; naive runs reseed
    the per-step mask generator from ``mask_seed`` for every evaluation.
    """
    def mask_rng():
        return make_rng(mask_seed) if mask_seed is not None else None

    def f():
        return objective(params, config, seq, weight_decay, masks, mask_rng())

    _, grads = objective_and_gradients(params, config, seq, weight_decay, masks, mask_rng())
    errors = {}
    for name, a in params.items():
        numeric = np.zeros_like(a)
        flat = a.reshape(-1)
        nflat = numeric.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + step
            fp = f()
            flat[i] = old - step
            fm = f()
            flat[i] = old
            nflat[i] = (fp - fm) / (2 * step)
        errors[name] = relative_error(grads[name], numeric)
    return errors


def run_combination(cell, direction, regime, seed, length=4, embed_dim=5, hidden_dim=5,
                    label_count=3, vocab_size=7, drop_prob=0.5, weight_decay=1e-3):
    config = ModelConfig(vocab_size=vocab_size, cell_kind=cell, direction=direction,
                         embed_dim=embed_dim, hidden_dim=hidden_dim, label_count=label_count,
                         dropout_regime=regime, drop_prob=drop_prob)
    params, seq, rng = random_instance(config, seed, length)
    masks = sample_mask_set(config, rng) if regime == "variational" else None
    mask_seed = seed + 10_000 if regime == "naive" else None
    return check_gradients(params, config, seq, weight_decay, masks, mask_seed)


def run_all(cells=CELL_KINDS, directions=DIRECTIONS, regimes=("none", "naive", "variational"),
            seeds=(0,), **dims):
    """Yield ``((cell, direction, regime), {tensor: max error})`` per combination."""
    for cell, direction, regime in itertools.product(cells, directions, regimes):
        worst = {}
        for seed in seeds:
            errs = run_combination(cell, direction, regime, seed, **dims)
            for k, v in errs.items():
                worst[k] = max(worst.get(k, 0.0), v)
        yield (cell, direction, regime), worst

"""Single-timestep recurrences (vanilla, LSTM, GRU) and their exact reverse
passes.

Weights are dicts of float64 arrays keyed by tensor name, e.g. ``W_xi`` is
the H x E input-to-input-gate matrix and ``W_hi`` its H x H recurrent
partner. Every forward step returns a tape holding whatever the backward
step needs. Passing masks ``z_x``/``z_h`` gives the variational form; masks
are treated as constants in the backward pass.
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .core import DTYPE, ShapeError, sigm

CELL_KINDS = ("vanilla", "lstm", "gru")

WEIGHT_NAMES = {
    "vanilla": ("W", "U", "b"),
    "lstm": ("W_xi", "W_hi", "W_xf", "W_hf", "W_xo", "W_ho", "W_xg", "W_hg",
             "b_i", "b_f", "b_o", "b_g"),
    "gru": ("W_xz", "W_hz", "W_xr", "W_hr", "W_xg", "W_hg", "b_z", "b_r", "b_g"),
}


def is_bias(name):
    return name.startswith("b")


class CellState(NamedTuple):
    h: np.ndarray
    c: Optional[np.ndarray] = None


def zero_state(kind, hidden_dim):
    h = np.zeros(hidden_dim, dtype=DTYPE)
    return CellState(h, np.zeros(hidden_dim, dtype=DTYPE) if kind == "lstm" else None)


def weight_shapes(kind, embed_dim, hidden_dim):
    shapes = {}
    for name in WEIGHT_NAMES[kind]:
        if is_bias(name):
            shapes[name] = (hidden_dim,)
        elif name in ("W", ) or name.startswith("W_x"):
            shapes[name] = (hidden_dim, embed_dim)
        else:
            shapes[name] = (hidden_dim, hidden_dim)
    return shapes


def init_cell_weights(kind, embed_dim, hidden_dim, rng):
    """Glorot-uniform matrices, zero biases, LSTM forget bias of 1."""
    weights = {}
    for name, shape in weight_shapes(kind, embed_dim, hidden_dim).items():
        if is_bias(name):
            weights[name] = np.zeros(shape, dtype=DTYPE)
        else:
            r = np.sqrt(6.0 / (shape[0] + shape[1]))
            weights[name] = rng.uniform(-r, r, size=shape)
    if kind == "lstm":
        weights["b_f"][:] = 1.0
    return weights


@dataclass
class TapeStep:
    kind: str
    x: np.ndarray
    h_prev: np.ndarray
    xm: np.ndarray
    hm: np.ndarray
    h: np.ndarray
    z_x: Optional[np.ndarray] = None
    z_h: Optional[np.ndarray] = None
    c_prev: Optional[np.ndarray] = None
    c: Optional[np.ndarray] = None
    # gate activations, keyed by gate letter
    gates: Optional[dict] = None
    mask_candidate_hidden: bool = False


def _check(w, kind, x, h_prev, z_x, z_h):
    E = w[WEIGHT_NAMES[kind][0]].shape[1]
    H = w[WEIGHT_NAMES[kind][1]].shape[0]
    if x.shape != (E,):
        raise ShapeError(f"{kind} step: input {x.shape} but weights expect ({E},)")
    if h_prev.shape != (H,):
        raise ShapeError(f"{kind} step: hidden {h_prev.shape} but weights expect ({H},)")
    if z_x is not None and z_x.shape != (E,):
        raise ShapeError(f"{kind} step: input mask {z_x.shape} vs input ({E},)")
    if z_h is not None and z_h.shape != (H,):
        raise ShapeError(f"{kind} step: hidden mask {z_h.shape} vs hidden ({H},)")


def _masked(v, mask):
    return v if mask is None else v * mask


def vanilla_step(W, U, b, x_t, h_prev, z_x=None, z_h=None):
    """h_t = tanh(W x_t + U h_prev + b), with optional input/hidden masks."""
    w = {"W": W, "U": U, "b": b}
    state, tape = step("vanilla", w, x_t, CellState(h_prev), z_x, z_h)
    return state.h, tape


def lstm_step(w, x_t, state):
    return step("lstm", w, x_t, state)


def lstm_step_variational(w, x_t, state, z_x, z_h):
    return step("lstm", w, x_t, state, z_x, z_h)


def gru_step(w, x_t, state):
    return step("gru", w, x_t, state)


def gru_step_variational(w, x_t, state, z_x, z_h, mask_candidate_hidden=False):
    return step("gru", w, x_t, state, z_x, z_h, mask_candidate_hidden)


def step(kind, w, x_t, state, z_x=None, z_h=None, mask_candidate_hidden=False):
    """Advance one timestep of cell ``kind``; returns ``(CellState, TapeStep)``.

    ``mask_candidate_hidden`` only matters for GRU: by default the candidate's
    recurrent input ``r_t * h_prev`` is left unmasked.
    """
    x_t = np.asarray(x_t, dtype=DTYPE)
    h_prev = state.h
    _check(w, kind, x_t, h_prev, z_x, z_h)
    xm = _masked(x_t, z_x)
    hm = _masked(h_prev, z_h)

    if kind == "vanilla":
        h = np.tanh(w["W"] @ xm + w["U"] @ hm + w["b"])
        tape = TapeStep(kind, x_t, h_prev, xm, hm, h, z_x, z_h)
        return CellState(h), tape

    if kind == "lstm":
        if state.c is None:
            raise ShapeError("lstm step needs a memory vector c")
        i = sigm(w["W_xi"] @ xm + w["W_hi"] @ hm + w["b_i"])
        f = sigm(w["W_xf"] @ xm + w["W_hf"] @ hm + w["b_f"])
        o = sigm(w["W_xo"] @ xm + w["W_ho"] @ hm + w["b_o"])
        g = np.tanh(w["W_xg"] @ xm + w["W_hg"] @ hm + w["b_g"])
        c = f * state.c + i * g
        tc = np.tanh(c)
        h = o * tc
        tape = TapeStep(kind, x_t, h_prev, xm, hm, h, z_x, z_h,
                        c_prev=state.c, c=c,
                        gates={"i": i, "f": f, "o": o, "g": g, "tc": tc})
        return CellState(h, c), tape

    if kind == "gru":
        if state.c is not None:
            raise ShapeError("gru step takes no memory vector")
        z = sigm(w["W_xz"] @ xm + w["W_hz"] @ hm + w["b_z"])
        r = sigm(w["W_xr"] @ xm + w["W_hr"] @ hm + w["b_r"])
        hc = hm if mask_candidate_hidden else h_prev
        rh = r * hc
        g = np.tanh(w["W_xg"] @ xm + w["W_hg"] @ rh + w["b_g"])
        h = (1.0 - z) * h_prev + z * g
        tape = TapeStep(kind, x_t, h_prev, xm, hm, h, z_x, z_h,
                        gates={"z": z, "r": r, "g": g, "rh": rh, "hc": hc},
                        mask_candidate_hidden=mask_candidate_hidden)
        return CellState(h), tape

    raise ValueError(f"unknown cell kind {kind!r}")


def backward_terms(tape, w, grad_h, grad_c=None):
    """Reverse one forward step down to gate pre-activations.

    Returns ``(terms, dx, dh_prev, dc_prev)``. Each term is
    ``(wx_name, wh_name, b_name, da, h_operand)``: the weight gradients are
    ``outer(da, tape.xm)``, ``outer(da, h_operand)`` and ``da``. ``dx`` is
    taken w.r.t. the unmasked input; ``dc_prev`` is None without a memory
    vector.
    """
    kind = tape.kind
    hm = tape.hm
    dc_prev = None

    if kind == "vanilla":
        da = grad_h * (1.0 - tape.h ** 2)
        terms = [("W", "U", "b", da, hm)]
        dxm = w["W"].T @ da
        dhm = w["U"].T @ da
        dh_direct = 0.0

    elif kind == "lstm":
        if tape.c is None:
            raise ValueError("tape does not come from an lstm step")
        gt = tape.gates
        i, f, o, g, tc = gt["i"], gt["f"], gt["o"], gt["g"], gt["tc"]
        dc = grad_h * o * (1.0 - tc ** 2)
        if grad_c is not None:
            dc = dc + grad_c
        pre = {
            "i": dc * g * i * (1.0 - i),
            "f": dc * tape.c_prev * f * (1.0 - f),
            "o": grad_h * tc * o * (1.0 - o),
            "g": dc * i * (1.0 - g ** 2),
        }
        terms = [(f"W_x{k}", f"W_h{k}", f"b_{k}", da, hm) for k, da in pre.items()]
        dxm = (w["W_xi"].T @ pre["i"] + w["W_xf"].T @ pre["f"]
               + w["W_xo"].T @ pre["o"] + w["W_xg"].T @ pre["g"])
        dhm = (w["W_hi"].T @ pre["i"] + w["W_hf"].T @ pre["f"]
               + w["W_ho"].T @ pre["o"] + w["W_hg"].T @ pre["g"])
        dc_prev = dc * f
        dh_direct = 0.0

    elif kind == "gru":
        if tape.gates is None or "z" not in tape.gates:
            raise ValueError("tape does not come from a gru step")
        gt = tape.gates
        z, r, g, rh, hc = gt["z"], gt["r"], gt["g"], gt["rh"], gt["hc"]
        dag = grad_h * z * (1.0 - g ** 2)
        daz = grad_h * (g - tape.h_prev) * z * (1.0 - z)
        drh = w["W_hg"].T @ dag
        dar = drh * hc * r * (1.0 - r)
        dhc = drh * r
        terms = [("W_xz", "W_hz", "b_z", daz, hm),
                 ("W_xr", "W_hr", "b_r", dar, hm),
                 ("W_xg", "W_hg", "b_g", dag, rh)]
        dxm = w["W_xz"].T @ daz + w["W_xr"].T @ dar + w["W_xg"].T @ dag
        dhm = w["W_hz"].T @ daz + w["W_hr"].T @ dar
        dh_direct = grad_h * (1.0 - z)
        if tape.mask_candidate_hidden:
            dhm = dhm + dhc
        else:
            dh_direct = dh_direct + dhc

    else:
        raise ValueError(f"unknown cell kind {kind!r}")

    dx = _masked(dxm, tape.z_x)
    dh_prev = _masked(dhm, tape.z_h) + dh_direct
    return terms, dx, dh_prev, dc_prev


def backward_step(tape, w, grad_h, grad_c=None):
    """Exact gradients of one forward step.

    Returns ``(grads, dx, dh_prev, dc_prev)`` with ``grads`` keyed by weight
    name. Masks recorded in the tape act as constants.
    """
    terms, dx, dh_prev, dc_prev = backward_terms(tape, w, grad_h, grad_c)
    grads = {}
    for wx, wh, b, da, h_op in terms:
        grads[wx] = np.outer(da, tape.xm)
        grads[wh] = np.outer(da, h_op)
        grads[b] = da
    return grads, dx, dh_prev, dc_prev

"""Bidirectional LSTM encoders producing per-step gloss posteriors."""
from __future__ import annotations

import numpy as np

from .ctc import BLANK
from ..tensor import ops
from ..tensor.core import ShapeError, Tensor
from ..tensor.nn import Dense, Module


def _sig(z):
    return 0.5 * (np.tanh(0.5 * z) + 1.0)


def lstm_sequence(x: Tensor, w_ih: Tensor, w_hh: Tensor, b: Tensor, reverse: bool = False) -> Tensor:
    """Run one LSTM direction over ``x[T, C]`` from a zero initial state; returns ``[T, H]``.

    Gate layout along the 4H axis is (input, forget, candidate, output).
    """
    t_len = x.shape[0]
    hid = w_hh.shape[1]
    if w_ih.shape != (4 * hid, x.shape[1]):
        raise ShapeError(f"lstm: w_ih {w_ih.shape} incompatible with input {x.shape} / hidden {hid}")
    dt = x.dtype
    zx = x.data @ w_ih.data.T + b.data
    order = range(t_len - 1, -1, -1) if reverse else range(t_len)
    gates = np.empty((t_len, 4 * hid), dtype=dt)
    cs = np.empty((t_len, hid), dtype=dt)
    hs = np.empty((t_len, hid), dtype=dt)
    h_prev_all = np.empty((t_len, hid), dtype=dt)
    c_prev_all = np.empty((t_len, hid), dtype=dt)
    h = np.zeros(hid, dtype=dt)
    c = np.zeros(hid, dtype=dt)
    for t in order:
        h_prev_all[t], c_prev_all[t] = h, c
        z = zx[t] + w_hh.data @ h
        g = np.empty_like(z)
        g[:2 * hid] = _sig(z[:2 * hid])
        g[2 * hid:3 * hid] = np.tanh(z[2 * hid:3 * hid])
        g[3 * hid:] = _sig(z[3 * hid:])
        c = g[hid:2 * hid] * c + g[:hid] * g[2 * hid:3 * hid]
        h = g[3 * hid:] * np.tanh(c)
        gates[t], cs[t], hs[t] = g, c, h

    def bw(gout):
        dz = np.empty_like(gates)
        dh_next = np.zeros(hid, dtype=dt)
        dc_next = np.zeros(hid, dtype=dt)
        back = range(t_len) if reverse else range(t_len - 1, -1, -1)
        for t in back:
            i, f, gg, o = (gates[t, :hid], gates[t, hid:2 * hid], gates[t, 2 * hid:3 * hid], gates[t, 3 * hid:])
            tc = np.tanh(cs[t])
            dh = gout[t] + dh_next
            dc = dh * o * (1.0 - tc * tc) + dc_next
            dz[t, :hid] = dc * gg * i * (1.0 - i)
            dz[t, hid:2 * hid] = dc * c_prev_all[t] * f * (1.0 - f)
            dz[t, 2 * hid:3 * hid] = dc * i * (1.0 - gg * gg)
            dz[t, 3 * hid:] = dh * tc * o * (1.0 - o)
            dc_next = dc * f
            dh_next = w_hh.data.T @ dz[t]
        gx = dz @ w_ih.data if x.requires_grad else None
        return gx, dz.T @ x.data, dz.T @ h_prev_all, dz.sum(axis=0)

    return Tensor.from_op(hs, (x, w_ih, w_hh, b), bw, "lstm")


class LSTMCell(Module):
    def __init__(self, cin: int, hidden: int, rng: np.random.Generator):
        bound = 1.0 / np.sqrt(hidden)
        self.w_ih = Tensor(rng.uniform(-bound, bound, (4 * hidden, cin)).astype(np.float32), requires_grad=True)
        self.w_hh = Tensor(rng.uniform(-bound, bound, (4 * hidden, hidden)).astype(np.float32), requires_grad=True)
        bias = np.zeros(4 * hidden, dtype=np.float32)
        bias[hidden:2 * hidden] = 1.0  # forget-gate bias
        self.bias = Tensor(bias, requires_grad=True)

    def __call__(self, x: Tensor, reverse: bool = False) -> Tensor:
        return lstm_sequence(x, self.w_ih, self.w_hh, self.bias, reverse)


class BLSTMEncoder(Module):
    """Forward and backward LSTM passes, concatenated per step, projected to the vocabulary.

    ``width`` is the concatenated hidden width (each direction has ``width // 2``).
    With ``shared=True`` both directions use one cell. The blank logit starts
    at ``log(|V| - 1)``, so an untrained encoder puts about half its mass on
    the blank at every step. With ``input_norm`` each input step is
    standardized first, which keeps the gates out of saturation when the
    upstream feature scale drifts during training.
    """

    def __init__(self, cin: int, width: int, vocab_size: int, rng: np.random.Generator, shared: bool = False,
                 input_norm: bool = False):
        if width % 2:
            raise ShapeError(f"BLSTM width must be even, got {width}")
        self.fwd = LSTMCell(cin, width // 2, rng)
        self.bwd = None if shared else LSTMCell(cin, width // 2, rng)
        self.proj = Dense(width, vocab_size, rng, gain=1.0)
        self.input_norm = input_norm
        if vocab_size > 1:
            self.proj.bias.data[BLANK] = np.log(vocab_size - 1)

    def hidden(self, x: Tensor) -> Tensor:
        back = self.fwd if self.bwd is None else self.bwd
        return ops.concat([self.fwd(x), back(x, reverse=True)], axis=-1)

    def logits(self, x: Tensor) -> Tensor:
        if x.ndim != 2 or x.shape[0] < 1:
            raise ShapeError(f"BLSTM expects [T', C] with T' >= 1, got {x.shape}")
        if self.input_norm:
            x = ops.layer_norm(x)
        return self.proj(self.hidden(x))

    def log_posteriors(self, x: Tensor) -> Tensor:
        return ops.log_softmax(self.logits(x))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.row_softmax(self.logits(x))


def blstm_forward(encoder: BLSTMEncoder, features: Tensor) -> Tensor:
    """Row-stochastic ``[T', |V|]`` posteriors for a feature sequence."""
    return encoder(features)

"""Finite-difference verification of every differentiable primitive and of the composed joint loss."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .model import ModelConfig, STMCModel, clip_loss
from .seq import blstm, ctc
from .seq import losses as seq_losses
from .smc import SMCConfig
from .tensor import ops
from .tensor.core import Tensor
from .tensor.gradcheck import GradCheckReport, finite_difference_check
from .tmc import TMCConfig


def _param(rng, shape, low=None, high=None) -> Tensor:
    data = rng.standard_normal(shape) if low is None else rng.uniform(low, high, shape)
    return Tensor(data.astype(np.float64), requires_grad=True)


def _weighted(rng, fn: Callable[..., Tensor], *params: Tensor) -> Callable[[], Tensor]:
    """Scalar ``sum(fn(params) * R)`` with a fixed random ``R``, so every output coordinate matters."""
    probe = fn(*params)
    r = Tensor(rng.standard_normal(probe.shape))
    return lambda: ops.sum(ops.mul(fn(*params), r))


def micro_model(seed: int = 0) -> tuple:
    """A tiny float64 model (one temporal block, so 2 frames suffice) and one 2-frame clip."""
    rng = np.random.default_rng(seed)
    smc = SMCConfig(input_size=16, backbone_channels=(2, 2, 3, 3, 3), K=7, crop_hand=2, crop_face=2,
                    cue_widths=(3, 4, 2, 2), head_channels=(2, 2))
    cfg = ModelConfig(vocab_size=3, smc=smc, tmc=TMCConfig(num_blocks=1, kernel=3, width=8), inter_width=4, encoder_norm=True,
                      intra_width=2)
    model = STMCModel(cfg, rng).astype(np.float64)
    frames = rng.uniform(0, 1, (2, 3, 16, 16))
    keypoints = rng.uniform(0.1, 0.9, (2, 7, 2))
    return model, frames, keypoints, [1]


def primitive_checks(rng: np.random.Generator) -> list:
    """``[(name, fn, params)]`` for each differentiable op."""
    p = lambda *shape, **kw: _param(rng, shape, **kw)  # noqa: E731
    checks = []

    def add(name, fn, *params):
        checks.append((name, _weighted(rng, fn, *params), list(params)))

    a, b = p(3, 4), p(3, 4)
    add("add", ops.add, a, b)
    add("add(broadcast)", ops.add, p(3, 4), p(4))
    add("sub", ops.sub, p(3, 4), p(3, 4))
    add("mul", ops.mul, p(3, 4), p(3, 4))
    add("div", ops.div, p(3, 4), p(3, 4, low=0.5, high=2.0))
    add("exp", ops.exp, p(3, 4))
    add("log", ops.log, p(3, 4, low=0.2, high=3.0))
    add("relu", ops.relu, p(3, 4))
    add("sigmoid", ops.sigmoid, p(3, 4))
    add("tanh", ops.tanh, p(3, 4))
    add("smooth_l1", ops.smooth_l1, p(3, 4, low=-3, high=3))
    add("sum(axis)", lambda x: ops.sum(x, axis=1), p(3, 4))
    add("mean", lambda x: ops.mean(x, axis=0), p(3, 4))
    add("reshape", lambda x: ops.reshape(x, (4, 3)), p(3, 4))
    add("transpose", lambda x: ops.transpose(x, (2, 0, 1)), p(2, 3, 4))
    add("getitem", lambda x: ops.getitem(x, (slice(1, 3), [0, 2, 2])), p(3, 4))
    add("concat", lambda x, y: ops.concat([x, y], axis=1), p(3, 2), p(3, 4))
    add("split", lambda x: ops.mul(ops.split(x, (1, 3), axis=1)[1], 2.0), p(3, 4))
    add("stack", lambda x, y: ops.stack([x, y], axis=0), p(3, 4), p(3, 4))
    add("matmul", ops.matmul, p(3, 4), p(4, 5))
    add("dense", ops.dense, p(3, 4), p(5, 4), p(5))
    add("row_softmax", ops.row_softmax, p(3, 5))
    add("log_softmax", ops.log_softmax, p(3, 5))
    add("layer_norm", ops.layer_norm, p(4, 6))
    add("conv2d", lambda x, k, bb: ops.conv2d(x, k, bb, 1, 1), p(2, 3, 6, 5), p(4, 3, 3, 3), p(4))
    add("conv2d(stride2)", lambda x, k, bb: ops.conv2d(x, k, bb, 2, 1), p(2, 3, 7, 6), p(4, 3, 3, 3), p(4))
    add("conv_transpose2d", lambda x, k, bb: ops.conv_transpose2d(x, k, bb), p(2, 3, 3, 4), p(3, 2, 4, 4), p(2))
    add("maxpool2d", ops.maxpool2d, p(2, 3, 5, 6))
    add("global_avg_pool2d", ops.global_avg_pool2d, p(2, 3, 4, 5))
    starts = np.array([[0, 1], [2, 0]])
    add("crop_patches", lambda x: ops.crop_patches(x, starts, (3, 3)), p(2, 2, 5, 5))
    add("temporal_conv1d", ops.temporal_conv1d, p(6, 3), p(4, 3, 5), p(4))
    add("temporal_maxpool", ops.temporal_maxpool, p(7, 3))
    add("spatial_softmax", ops.spatial_softmax, p(2, 3, 4))
    add("soft_argmax", lambda h: ops.soft_argmax(ops.spatial_softmax(h)), p(2, 4, 5))
    add("lstm", lambda x, wi, wh, bb: blstm.lstm_sequence(x, wi, wh, bb, reverse=True),
        p(5, 3), p(8, 3), p(8, 2), p(8))
    checks.append(("ctc_loss", (lambda z: lambda: ctc.ctc_loss(ops.log_softmax(z), [1, 2, 2]))(zz := p(7, 4)), [zz]))
    truth = rng.uniform(0, 1, (3, 7, 2))
    checks.append(("smooth_l1_regression",
                   (lambda q: lambda: seq_losses.smooth_l1_regression(q, truth, 30.0))(qq := p(3, 7, 2, low=0, high=1)),
                   [qq]))
    return checks


def joint_loss_check(seed: int = 0, max_coords: int | None = 12) -> GradCheckReport:
    model, frames, keypoints, target = micro_model(seed)

    def fn():
        out = model([frames])[0]
        return clip_loss(out, target, keypoints, alpha=0.6, beta=30.0).total

    return finite_difference_check(fn, model.parameters(), max_coords=max_coords, seed=seed, name="joint_loss(micro)")


def run_gradcheck_suite(seed: int = 0, include_model: bool = True) -> list:
    rng = np.random.default_rng(seed)
    reports = [finite_difference_check(fn, params, name=name) for name, fn, params in primitive_checks(rng)]
    if include_model:
        reports.append(joint_loss_check(seed))
    return reports

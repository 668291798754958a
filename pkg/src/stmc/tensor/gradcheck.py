"""Central finite-difference verification of tape gradients."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import Tensor, backward, no_grad, record_branches


@dataclass
class GradCheckReport:
    max_rel_error: float = 0.0
    checked: int = 0
    excluded: int = 0
    failures: list = field(default_factory=list)  # (param index, flat coord, analytic, numeric, rel)
    per_param: list = field(default_factory=list)
    nonfinite: bool = False
    tolerance: float = 1e-4
    name: str = ""

    @property
    def passed(self) -> bool:
        return not self.nonfinite and not self.failures and self.checked > 0


def _rel(a: float, n: float, floor: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), floor)


def finite_difference_check(fn: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5,
                            tolerance: float = 1e-4, max_coords: int | None = None, floor: float = 1e-5,
                            seed: int = 0, name: str = "") -> GradCheckReport:
    """Compare reverse-mode gradients of ``fn()`` against central differences.

    ``fn`` must rebuild its graph from ``params`` on every call. Parameters
    should be float64. Coordinates whose +/-eps evaluations take a different
    piecewise branch (relu sign, pooling argmax, crop corner, smooth-L1 side)
    than the base point are excluded as nondifferentiable and counted in
    ``excluded``. ``max_coords`` samples that many coordinates per parameter.
    The relative error uses ``max(|a|, |n|, floor)`` as its denominator; the
    floor keeps exactly-zero gradients (where central differences return pure
    float64 roundoff, ~1e-10 on an O(10) loss) from reading as large errors.
    """
    report = GradCheckReport(tolerance=tolerance, name=name)
    for p in params:
        p.grad = None
    with record_branches() as base_log:
        out = fn()
    base_log = list(base_log)
    if not np.isfinite(out.data).all():
        report.nonfinite = True
        return report
    backward(out)
    rng = np.random.default_rng(seed)
    for pi, p in enumerate(params):
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        worst = 0.0
        for c in coords:
            orig = flat[c]
            vals = []
            same = True
            for sign in (1.0, -1.0):
                flat[c] = orig + sign * eps
                with no_grad(), record_branches() as log:
                    vals.append(float(fn().data))
                same = same and log == base_log
            flat[c] = orig
            if not np.isfinite(vals).all():
                report.nonfinite = True
                continue
            if not same:
                report.excluded += 1
                continue
            numeric = (vals[0] - vals[1]) / (2 * eps)
            a = float(analytic.reshape(-1)[c])
            rel = _rel(a, numeric, floor)
            report.checked += 1
            worst = max(worst, rel)
            if rel >= tolerance:
                report.failures.append((pi, int(c), a, numeric, rel))
        report.per_param.append(worst)
        report.max_rel_error = max(report.max_rel_error, worst)
    for p in params:
        p.grad = None
    return report

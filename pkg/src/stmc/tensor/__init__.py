from .core import ShapeError, Tape, Tensor, as_tensor, backward, grad_enabled, no_grad, record_branches
from .gradcheck import GradCheckReport, finite_difference_check
from .optim import Adam, OptimizerState, optimizer_step

__all__ = [
    "Adam",
    "GradCheckReport",
    "OptimizerState",
    "ShapeError",
    "Tape",
    "Tensor",
    "as_tensor",
    "backward",
    "finite_difference_check",
    "grad_enabled",
    "no_grad",
    "optimizer_step",
    "record_branches",
]

"""Supervised, pseudo-label and distillation losses and their weighting.

All three losses are mean-reduced over their sub-batch. Logs of
probabilities are clamped at 1e-12.
"""

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .autodiff import Tensor, as_tensor, log, mul, sum_all
from .errors import ShapeError


class DegenerateBatchWarning(RuntimeWarning):
    """A loss was asked to reduce over zero examples and returned 0."""


@dataclass(frozen=True)
class PseudoLabelRule:
    target_value: float = 10.0
    delta: float = 0.95
    detach_targets: bool = True

    def __post_init__(self):
        if not self.target_value > 0:
            raise ValueError("target_value must be > 0")
        # above 1 is allowed: the rule then never fires
        if not self.delta > 0:
            raise ValueError("delta must be > 0")


@dataclass(frozen=True)
class LossSchedule:
    lambda_d: float = 1.0
    tau_fraction: float = 2.0 / 3.0
    warmup_mode: str = "step"  # step | linear | off

    def __post_init__(self):
        if not 0 < self.tau_fraction <= 1:
            raise ValueError("tau_fraction must lie in (0, 1]")
        if self.warmup_mode not in ("step", "linear", "off"):
            raise ValueError(f"unknown warmup_mode {self.warmup_mode!r}")
        if self.lambda_d < 0:
            raise ValueError("lambda_d must be >= 0")


@dataclass
class LossBreakdown:
    loss_s: float
    loss_u: float
    loss_d: float
    lambda_u: float
    lambda_d: float
    total: float
    iteration: int
    total_tensor: Optional[Tensor] = None

    def is_finite(self) -> bool:
        return bool(np.isfinite([self.loss_s, self.loss_u, self.loss_d, self.total]).all())

    def as_tuple(self) -> tuple:
        return (self.iteration, self.loss_s, self.loss_u, self.loss_d, self.lambda_u, self.total)


def _check_pair(name, a: Tensor, b: Tensor):
    if a.shape != b.shape or a.ndim != 2:
        raise ShapeError(f"{name}: shapes {a.shape} and {b.shape} must be equal [rows, classes]")


def _mean_soft_ce(targets: Tensor, probs: Tensor, name: str) -> Tensor:
    _check_pair(name, targets, probs)
    rows = probs.shape[0]
    if rows == 0:
        warnings.warn(f"{name}: empty batch, loss is 0", DegenerateBatchWarning, stacklevel=3)
        return Tensor(0.0)
    return sum_all(mul(log(probs), targets)) * (-1.0 / rows)


def supervised_ce(p, y) -> Tensor:
    """Mean over labeled rows of -sum_c y_c log p_c (y one-hot)."""
    return _mean_soft_ce(as_tensor(y).detach(), as_tensor(p), "supervised_ce")


def one_hot(labels, num_classes: int) -> np.ndarray:
    return np.eye(num_classes)[np.asarray(labels, dtype=np.int64)]


def pseudo_assign(p_z, rule: PseudoLabelRule) -> Tensor:
    """Targets: ``T`` where ``p >= delta``, the prediction itself elsewhere."""
    p_z = as_tensor(p_z)
    mask = p_z.data >= rule.delta
    if rule.detach_targets:
        return Tensor(np.where(mask, rule.target_value, p_z.data))
    return mul(p_z, (~mask).astype(np.float64)) + np.where(mask, rule.target_value, 0.0)


def pseudo_ce(y_hat, p_z) -> Tensor:
    """Mean over unlabeled rows of -sum_c y_hat_c log p_c."""
    return _mean_soft_ce(as_tensor(y_hat), as_tensor(p_z), "pseudo_ce")


def distill_soft_ce(h, q) -> Tensor:
    """Mean over all clips of -sum_l h_l log q_l, teacher output ``h`` held fixed."""
    h, q = as_tensor(h), as_tensor(q)
    if h.shape[0] != q.shape[0]:
        raise ShapeError(f"distill_soft_ce: teacher rows {h.shape} vs student rows {q.shape}")
    return _mean_soft_ce(h.detach(), q, "distill_soft_ce")


def entropy(p) -> np.ndarray:
    p = np.asarray(p)
    return -(p * np.log(np.maximum(p, 1e-12))).sum(axis=-1)


def lambda_u(iteration: int, total_iterations: int, schedule: LossSchedule) -> float:
    """Pseudo-label weight at ``iteration``; reaches 1 at tau = round(fraction * total)."""
    if schedule.warmup_mode == "off":
        return 0.0
    tau = int(np.floor(schedule.tau_fraction * total_iterations + 0.5))
    if iteration >= tau:
        return 1.0
    if schedule.warmup_mode == "step":
        return 0.0
    return iteration / tau


def combined_loss(loss_s, loss_u, loss_d, schedule: LossSchedule, iteration: int,
                  total_iterations: int, lambda_u_value: Optional[float] = None,
                  lambda_d_value: Optional[float] = None) -> LossBreakdown:
    """total = L_s + lambda_u(t) * L_u + lambda_d * L_d.

    Terms whose weight is zero are left out of the sum (and may be passed as
    ``None``), so a method that disables a term builds exactly the same
    graph as one that never had it.
    """
    lu = lambda_u(iteration, total_iterations, schedule) if lambda_u_value is None else lambda_u_value
    ld = schedule.lambda_d if lambda_d_value is None else lambda_d_value
    loss_s = as_tensor(loss_s)
    total = loss_s
    lu_val = ld_val = 0.0
    if lu != 0.0 and loss_u is not None:
        loss_u = as_tensor(loss_u)
        total = total + loss_u * lu
        lu_val = loss_u.item()
    if ld != 0.0 and loss_d is not None:
        loss_d = as_tensor(loss_d)
        total = total + loss_d * ld
        ld_val = loss_d.item()
    return LossBreakdown(
        loss_s=loss_s.item(), loss_u=lu_val, loss_d=ld_val, lambda_u=float(lu),
        lambda_d=float(ld), total=total.item(), iteration=iteration, total_tensor=total,
    )

"""Central finite-difference gradient checking."""

from typing import Callable, Optional, Sequence

import numpy as np

from .tensor import Tensor, backward


def grad_check(
    model_forward: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-6,
    max_samples: Optional[int] = None,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``model_forward`` rebuilds the scalar loss from the current parameter
    values. With ``max_samples`` set, that many elements per parameter are
    checked (chosen with ``seed``); otherwise every element is.
    Relative error is ``|a - n| / max(1e-8, |a| + |n|)``.
    """
    for p in params:
        p.grad = np.zeros_like(p.data)
    backward(model_forward())
    analytic = [p.grad.copy() for p in params]

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_samples is not None and flat.size > max_samples:
            idx = np.sort(rng.choice(flat.size, size=max_samples, replace=False))
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            up = model_forward().item()
            flat[i] = orig - eps
            down = model_forward().item()
            flat[i] = orig
            numeric = (up - down) / (2 * eps)
            a = ga.reshape(-1)[i]
            err = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
            worst = max(worst, err)
    return worst

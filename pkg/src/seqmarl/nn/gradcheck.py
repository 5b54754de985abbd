"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autograd import no_grad
from .layers import Module


@dataclass
class GradCheckResult:
    name: str
    max_rel_err: float
    tolerance: float
    passed: bool
    per_param: dict = field(default_factory=dict)
    wallclock_s: float = 0.0

    def worst(self) -> str:
        if not self.per_param:
            return ""
        return max(self.per_param, key=self.per_param.get)


def grad_check(name: str, module: Module, loss_fn, tolerance: float = 1e-5,
               step: float = 1e-5) -> GradCheckResult:
    """Compares backprop gradients of loss_fn() against central differences.

    loss_fn must be deterministic and close over the module plus any fixed
    inputs; it is re-evaluated 2 * num_params times.
    """
    import time

    t0 = time.monotonic()
    module.zero_grad()
    loss = loss_fn()
    loss.backward()
    analytic = {n: p.grad.copy() for n, p in module.named_parameters()}

    per_param = {}
    with no_grad():
        for pname, p in module.named_parameters():
            flat = p.data.flat  # writes through any memory layout
            ana = analytic[pname].reshape(-1)
            worst = 0.0
            for j in range(p.data.size):
                orig = flat[j]
                flat[j] = orig + step
                up = float(loss_fn().data)
                flat[j] = orig - step
                down = float(loss_fn().data)
                flat[j] = orig
                numeric = (up - down) / (2.0 * step)
                denom = max(abs(ana[j]), abs(numeric), 1.0)
                worst = max(worst, abs(ana[j] - numeric) / denom)
            per_param[pname] = float(worst)

    max_err = float(max(per_param.values())) if per_param else 0.0
    return GradCheckResult(
        name=name,
        max_rel_err=max_err,
        tolerance=tolerance,
        passed=bool(max_err < tolerance),
        per_param=per_param,
        wallclock_s=time.monotonic() - t0,
    )

"""Central finite-difference gradient verification in float64."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor


@dataclass
class GradCheckReport:
    max_rel_err: float
    worst_param: str
    n_checked: int

    def ok(self, tol: float = 1e-4) -> bool:
        return self.max_rel_err <= tol


def grad_check(fn, tensors: dict[str, Tensor], step: float = 1e-5,
               max_entries: int = 64, rng: np.random.Generator | None = None) -> GradCheckReport:
    """Compare analytic gradients of fn(tensors)->scalar Tensor against
    central finite differences.

    All tensors must be float64. At most max_entries randomly chosen
    coordinates are probed per tensor. Relative error uses
    |a - n| / max(|a| + |n|, 1e-6).
    """
    for name, t in tensors.items():
        if t.data.dtype != np.float64:
            raise TypeError(f"grad_check needs float64 tensors, {name} is {t.data.dtype}")
        t.requires_grad = True
        t.zero_grad()

    loss = fn()
    loss.backward()
    analytic = {name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
                for name, t in tensors.items()}

    rng = rng or np.random.default_rng(0)
    worst = 0.0
    worst_param = ""
    n_checked = 0
    for name, t in tensors.items():
        flat = t.data.reshape(-1)
        n = flat.size
        picks = np.arange(n) if n <= max_entries else rng.choice(n, size=max_entries, replace=False)
        for i in picks:
            orig = flat[i]
            flat[i] = orig + step
            up = float(fn().data)
            flat[i] = orig - step
            dn = float(fn().data)
            flat[i] = orig
            numeric = (up - dn) / (2.0 * step)
            a = float(analytic[name].reshape(-1)[i])
            rel = abs(a - numeric) / max(abs(a) + abs(numeric), 1e-6)
            n_checked += 1
            if rel > worst:
                worst = rel
                worst_param = f"{name}[{i}]"
    return GradCheckReport(max_rel_err=worst, worst_param=worst_param, n_checked=n_checked)

"""Central finite-difference gradient checking."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, no_grad


@dataclass
class GradCheckReport:
    max_rel_error: float
    n_coords: int
    worst: tuple[int, tuple[int, ...], float, float] | None = None
    errors: list[float] = field(default_factory=list)
    n_kinks: int = 0  # coordinates skipped because a non-differentiable point lay inside the stencil

    def ok(self, tol: float) -> bool:
        return self.max_rel_error <= tol


def relative_error(analytic: float, numeric: float, floor: float = 1e-5) -> float:
    """|a - n| / max(|a|, |n|, floor); the floor keeps near-zero gradients from dominating."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def check_gradients(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    n_coords: int,
    rng: np.random.Generator,
    step: float = 1e-5,
    floor: float = 1e-5,
    kink_tol: float = 1e-2,
) -> GradCheckReport:
    """Compare backprop against central differences at ``n_coords`` random coordinates.

    Coordinates are drawn uniformly without replacement over the pooled entries of
    ``params``.  A coordinate whose central differences at ``step`` and ``2*step``
    disagree by more than ``kink_tol`` (relative) straddles a kink of relu / hinge /
    max-pool, where the derivative is undefined; it is skipped and replaced by the
    next draw, so ``n_coords`` differentiable coordinates are checked when available.
    """
    for p in params:
        p.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    for p in params:
        p.grad = None

    sizes = np.array([p.data.size for p in params])
    order = rng.permutation(int(sizes.sum()))
    bounds = np.cumsum(sizes)
    report = GradCheckReport(max_rel_error=0.0, n_coords=0)

    def at(p, idx, value):
        p.data[idx] = value
        return loss_fn().item()

    with no_grad():
        for f in order:
            if report.n_coords >= n_coords:
                break
            pi = int(np.searchsorted(bounds, f, side="right"))
            local = int(f - (bounds[pi - 1] if pi else 0))
            p = params[pi]
            idx = np.unravel_index(local, p.shape)
            orig = p.data[idx]
            c1 = (at(p, idx, orig + step) - at(p, idx, orig - step)) / (2 * step)
            c2 = (at(p, idx, orig + 2 * step) - at(p, idx, orig - 2 * step)) / (4 * step)
            p.data[idx] = orig
            if relative_error(c1, c2, floor) > kink_tol:
                report.n_kinks += 1
                continue
            a = float(analytic[pi][idx])
            err = relative_error(a, c1, floor)
            report.n_coords += 1
            report.errors.append(err)
            if err >= report.max_rel_error:
                report.max_rel_error = err
                report.worst = (pi, tuple(int(i) for i in idx), a, c1)
    return report

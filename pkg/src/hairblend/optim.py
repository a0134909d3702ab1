"""Optimization loop helpers shared by inversion, proxies, and color blending.

All optimizer construction funnels through new_adam so tests can assert that
feed-forward code paths never instantiate one.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import torch

log = logging.getLogger(__name__)

_adam_instantiations = 0


def new_adam(params, lr: float, eps: float = 1e-8) -> torch.optim.Adam:
    global _adam_instantiations
    _adam_instantiations += 1
    return torch.optim.Adam(params, lr=lr, eps=eps)


def optimizer_instantiations() -> int:
    return _adam_instantiations


@dataclass
class OptimizationTrace:
    """Raw per-step losses plus the best iterate bookkeeping."""

    losses: List[float] = field(default_factory=list)
    best_step: int = 0
    best_loss: float = float("inf")
    converged: bool = True
    step_norms: List[float] = field(default_factory=list)

    @property
    def initial_loss(self) -> float:
        return self.losses[0] if self.losses else float("nan")

    @property
    def final_loss(self) -> float:
        return self.best_loss


ProgressFn = Optional[Callable[[int, float], None]]


def minimize(
    params: List[torch.Tensor],
    compute_loss: Callable[[int], torch.Tensor],
    steps: int,
    lr: float,
    progress: ProgressFn = None,
    label: str = "optimize",
) -> OptimizationTrace:
    """Adam-minimize compute_loss over leaf tensors, in place.

    Loss is recorded before each update; after the budget the params are
    restored to the best-loss iterate (which may be the initialization).
    A budget that never improves on the initial loss flags the trace as
    non-converged but still leaves the best iterate in place.
    """
    trace = OptimizationTrace()
    if steps <= 0:
        return trace
    opt = new_adam(params, lr)
    best = [p.detach().clone() for p in params]
    for step in range(steps):
        opt.zero_grad()
        loss = compute_loss(step)
        val = float(loss.detach())
        trace.losses.append(val)
        if progress is not None:
            progress(step, val)
        if val < trace.best_loss:
            trace.best_loss = val
            trace.best_step = step
            best = [p.detach().clone() for p in params]
        loss.backward()
        opt.step()
    # Score the post-update iterate too so a lucky last step is not discarded.
    with torch.no_grad():
        final = float(compute_loss(steps).detach())
    trace.losses.append(final)
    if progress is not None:
        progress(steps, final)
    if final < trace.best_loss:
        trace.best_loss = final
        trace.best_step = steps
    else:
        with torch.no_grad():
            for p, b in zip(params, best):
                p.copy_(b)
    initial = trace.losses[0]
    # An initial loss already at (numerical) zero leaves nothing to reduce.
    trace.converged = trace.best_loss < initial or initial <= 1e-9
    if not trace.converged:
        log.warning("%s: loss not reduced after %d steps (%.6g)", label, steps, initial)
    return trace

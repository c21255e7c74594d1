"""Convergence instrumentation: the global optimality gap and the
per-round contraction rate estimated from its log-linear decay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import TaskfedError
from .params import ModelParams
from .protocol import NodeState
from .tasks import TaskSpec, loss

PHI_FLOOR = 1e-14


@dataclass(frozen=True)
class MetricsRecord:
    """One node's metrics at the end of one round."""

    round: int
    node_id: int
    group_id: int
    scheme: str
    train_loss: float
    val_loss: float
    phi: float | None

    def __post_init__(self):
        if self.phi is not None and self.phi < -1e-9:
            raise TaskfedError("bad-config", f"optimality gap must be >= -1e-9, got {self.phi}")


@dataclass(frozen=True)
class ContractionEstimate:
    """Least-squares fit of log(phi) against the round index."""

    gamma_hat: float
    r_squared: float
    rounds_used: int


def compute_phi(
    states: Mapping[int, NodeState],
    tasks: Mapping[int, TaskSpec],
    optimum: tuple[Sequence[ModelParams], float],
) -> float:
    """Sum of current losses minus the constrained optimal objective."""
    for t in tasks.values():
        if t.kind != "quadratic":
            raise TaskfedError("phi-undefined", f"task {t.task_id} has kind {t.kind}")
    _, opt_value = optimum
    total = 0.0
    for nid in sorted(states):
        total += loss(tasks[nid], states[nid].params)
    return total - opt_value


def estimate_contraction(phi_series: Sequence[float]) -> ContractionEstimate:
    """Fit log(phi) over rounds with phi above the numerical floor.

    The slope s of the least-squares line gives gamma_hat = 1 - exp(s); a
    constant series yields gamma_hat = 0.
    """
    xs, ys = [], []
    for i, p in enumerate(phi_series):
        if p is not None and p > PHI_FLOOR:
            xs.append(float(i))
            ys.append(math.log(p))
    if len(xs) < 5:
        raise TaskfedError(
            "insufficient-data", f"need >= 5 usable points, got {len(xs)}"
        )
    x = np.array(xs)
    y = np.array(ys)
    x_c = x - x.mean()
    y_c = y - y.mean()
    denom = float(x_c @ x_c)
    if denom == 0.0:
        raise TaskfedError("insufficient-data", "all usable points share one round index")
    slope = float(x_c @ y_c) / denom
    resid = y_c - slope * x_c
    ss_res = float(resid @ resid)
    ss_tot = float(y_c @ y_c)
    r_squared = 1.0 if ss_tot <= 1e-30 else 1.0 - ss_res / ss_tot
    return ContractionEstimate(
        gamma_hat=1.0 - math.exp(slope),
        r_squared=r_squared,
        rounds_used=len(xs),
    )

"""Parameter-merging math: intra-group averaging, the conflict-averse
cross-group merge with its simplex dual solve, and the baseline schemes.

The cross-group merge takes the per-group backbone deltas, finds simplex
weights by minimizing F(w) = <d_w, mean> + sqrt(phi) * ||d_w|| with
d_w = sum_i w_i * delta_i and phi = c^2 * ||mean||^2, and returns

    merged = mean + (sqrt(phi) / ||U_w||) * U_w,   U_w = (1/N) sum_i w_i delta_i

which by construction lands on the sphere of radius c*||mean|| around the
plain mean.  c = 0 reduces bit-for-bit to the plain average.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .errors import TaskfedError
from .params import BackboneDelta, ParamVector

WEIGHT_SUM_TOL = 1e-9


@dataclass(frozen=True)
class HcaConfig:
    """Knobs of the conflict-averse merge; ``c`` has no library default."""

    c: float
    dual_iters: int = 200
    dual_tol: float = 1e-8
    dual_step: float = 0.1

    def __post_init__(self):
        if not (0.0 <= self.c < 1.0):
            raise TaskfedError("bad-config", f"c must lie in [0, 1), got {self.c}")
        if self.dual_iters < 1:
            raise TaskfedError("bad-config", f"dual_iters must be >= 1, got {self.dual_iters}")
        if not self.dual_tol > 0.0:
            raise TaskfedError("bad-config", f"dual_tol must be positive, got {self.dual_tol}")
        if not self.dual_step > 0.0:
            raise TaskfedError("bad-config", f"dual_step must be positive, got {self.dual_step}")


@dataclass(frozen=True)
class DualWeights:
    """Nonnegative weights over the participating deltas, summing to one."""

    weights: tuple[float, ...]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise TaskfedError("bad-config", "weights must be a non-empty 1-D sequence")
        if np.any(w < 0.0):
            raise TaskfedError("bad-config", f"negative dual weight in {self.weights}")
        if abs(float(w.sum()) - 1.0) > WEIGHT_SUM_TOL:
            raise TaskfedError("bad-config", f"dual weights must sum to 1, got {float(w.sum())!r}")
        object.__setattr__(self, "weights", tuple(float(x) for x in w))

    def as_array(self) -> np.ndarray:
        return np.array(self.weights, dtype=np.float64)


@dataclass(frozen=True)
class LinearCombineWeights:
    """alpha[k, m] = group k's weight on group m's delta; diagonal ignored."""

    alpha: np.ndarray

    def __post_init__(self):
        a = np.array(self.alpha, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise TaskfedError("bad-config", f"alpha must be a square matrix, got shape {a.shape}")
        if a.size and not np.all(np.isfinite(a)):
            raise TaskfedError("bad-config", "alpha entries must be finite")
        a.setflags(write=False)
        object.__setattr__(self, "alpha", a)


def intra_aggregate(backbones: Sequence[ParamVector]) -> ParamVector:
    """Arithmetic mean of all group members' backbones (self included).

    Every member averaging the same ordered list obtains a bit-identical
    result, which is what makes in-group consensus exact.
    """
    from . import params as _p

    return _p.mean(backbones)


def compute_round_delta(
    new_backbone: ParamVector,
    old_backbone: ParamVector,
    origin_group: int = 0,
    round_idx: int = 0,
) -> BackboneDelta:
    """Backbone movement over one round: new - old."""
    if new_backbone.dim != old_backbone.dim:
        raise TaskfedError(
            "dim-mismatch", f"dims {new_backbone.dim} and {old_backbone.dim} differ"
        )
    diff = ParamVector._wrap(kernels.axpy(-1.0, old_backbone.values, new_backbone.values))
    return BackboneDelta(delta=diff, origin_group=origin_group, round=round_idx)


def _stack_deltas(deltas: Sequence[BackboneDelta]) -> np.ndarray:
    if len(deltas) == 0:
        raise TaskfedError("empty-aggregate", "no deltas to merge")
    dim = deltas[0].delta.dim
    for d in deltas[1:]:
        if d.delta.dim != dim:
            raise TaskfedError("dim-mismatch", f"delta dims {dim} and {d.delta.dim} differ")
    return np.ascontiguousarray(np.stack([d.delta.values for d in deltas]))


def solve_dual_weights(deltas: Sequence[BackboneDelta], cfg: HcaConfig) -> DualWeights:
    """Simplex weights minimizing the merge's dual objective.

    Projected gradient descent from the uniform point with step
    dual_step / max_i ||delta_i||; the best iterate by objective value is
    returned.  A single delta trivially gets weight one.
    """
    rows = _stack_deltas(deltas)
    n = rows.shape[0]
    if n == 1:
        return DualWeights((1.0,))
    norms = np.sqrt(np.sum(rows * rows, axis=1))
    max_norm = float(norms.max())
    if max_norm <= 1e-15:
        return DualWeights(tuple([1.0 / n] * n))
    mean_vec = kernels.mean_rows(rows)
    sqrt_phi = cfg.c * kernels.nrm2(mean_vec)
    gram = rows @ rows.T
    lin = rows @ mean_vec
    step = cfg.dual_step / max_norm
    w = kernels.dual_pgd(
        np.ascontiguousarray(gram),
        np.ascontiguousarray(lin),
        sqrt_phi,
        cfg.dual_iters,
        step,
        cfg.dual_tol,
    )
    return DualWeights(tuple(float(x) for x in np.asarray(w)))


def dual_objective(deltas: Sequence[BackboneDelta], weights: DualWeights, cfg: HcaConfig) -> float:
    """F(w) = <d_w, mean> + sqrt(phi) * ||d_w|| for given weights."""
    rows = _stack_deltas(deltas)
    w = weights.as_array()
    if w.shape[0] != rows.shape[0]:
        raise TaskfedError("dim-mismatch", f"{w.shape[0]} weights for {rows.shape[0]} deltas")
    mean_vec = kernels.mean_rows(rows)
    sqrt_phi = cfg.c * kernels.nrm2(mean_vec)
    d_w = w @ rows
    return float(d_w @ mean_vec) + sqrt_phi * float(np.linalg.norm(d_w))


def dual_grid_search(
    deltas: Sequence[BackboneDelta], cfg: HcaConfig, resolution: float = 1e-3
) -> tuple[DualWeights, float]:
    """Brute-force dual minimizer over the 1-simplex (two deltas only).

    Independent of the iterative solver; used as its correctness oracle.
    """
    rows = _stack_deltas(deltas)
    n = rows.shape[0]
    if n == 1:
        return DualWeights((1.0,)), dual_objective(deltas, DualWeights((1.0,)), cfg)
    if n != 2:
        raise TaskfedError("bad-config", f"grid search supports at most 2 deltas, got {n}")
    mean_vec = kernels.mean_rows(rows)
    sqrt_phi = cfg.c * kernels.nrm2(mean_vec)
    ts = np.arange(0.0, 1.0 + resolution / 2.0, resolution)
    ts = np.minimum(ts, 1.0)
    # d_w(t) = t * rows[0] + (1 - t) * rows[1]
    lin0 = float(rows[0] @ mean_vec)
    lin1 = float(rows[1] @ mean_vec)
    g00 = float(rows[0] @ rows[0])
    g01 = float(rows[0] @ rows[1])
    g11 = float(rows[1] @ rows[1])
    obj = (
        ts * lin0
        + (1.0 - ts) * lin1
        + sqrt_phi
        * np.sqrt(np.maximum(ts * ts * g00 + 2.0 * ts * (1.0 - ts) * g01 + (1.0 - ts) ** 2 * g11, 0.0))
    )
    k = int(np.argmin(obj))
    t = float(ts[k])
    return DualWeights((t, 1.0 - t)), float(obj[k])


def plain_cross_average(deltas: Sequence[BackboneDelta]) -> ParamVector:
    """Arithmetic mean of the leader deltas."""
    rows = _stack_deltas(deltas)
    return ParamVector._wrap(kernels.mean_rows(rows))


def hca_merge(
    deltas: Sequence[BackboneDelta], weights: DualWeights, cfg: HcaConfig
) -> ParamVector:
    """Conflict-averse merged update on the sphere of radius c*||mean||.

    With c = 0 or a vanishing weighted direction the plain mean is returned
    exactly (identical code path to :func:`plain_cross_average`).
    """
    rows = _stack_deltas(deltas)
    n = rows.shape[0]
    w = weights.as_array()
    if w.shape[0] != n:
        raise TaskfedError("dim-mismatch", f"{w.shape[0]} weights for {n} deltas")
    mean_vec = kernels.mean_rows(rows)
    if cfg.c == 0.0:
        return ParamVector._wrap(mean_vec)
    u_w = kernels.scale(1.0 / n, kernels.weighted_rows(rows, np.ascontiguousarray(w)))
    u_norm = kernels.nrm2(u_w)
    if u_norm <= 1e-12:
        return ParamVector._wrap(mean_vec)
    sqrt_phi = cfg.c * kernels.nrm2(mean_vec)
    merged = kernels.axpy(sqrt_phi / u_norm, u_w, mean_vec)
    return ParamVector._wrap(merged)


def linear_combine(
    own_agg_backbone: ParamVector,
    foreign_deltas: Sequence[BackboneDelta],
    weights: LinearCombineWeights,
    group_k: int,
) -> ParamVector:
    """Alternative cross update: own backbone plus alpha-weighted foreign deltas."""
    a = weights.alpha
    if not 0 <= group_k < a.shape[0]:
        raise TaskfedError("bad-config", f"group {group_k} outside alpha matrix of shape {a.shape}")
    out = own_agg_backbone.values.copy()
    for d in foreign_deltas:
        if d.delta.dim != own_agg_backbone.dim:
            raise TaskfedError(
                "dim-mismatch", f"delta dim {d.delta.dim} != backbone dim {own_agg_backbone.dim}"
            )
        if not 0 <= d.origin_group < a.shape[1]:
            raise TaskfedError(
                "bad-config", f"origin group {d.origin_group} outside alpha matrix of shape {a.shape}"
            )
        if d.origin_group == group_k:
            continue
        out = kernels.axpy(float(a[group_k, d.origin_group]), d.delta.values, out)
    return ParamVector._wrap(out)

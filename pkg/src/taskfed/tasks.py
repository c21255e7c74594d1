"""Synthetic local learning problems with exact losses and gradients.

Three task kinds are provided:

* ``quadratic`` — f(w) = 1/2 (w - b)^T A (w - b) with symmetric positive
  definite A. Deterministic (full-batch) gradients and a closed-form
  group-constrained optimum, which makes convergence behavior exactly
  checkable.
* ``logistic`` — binary logistic regression on a seeded synthetic dataset
  with an 80/20 train/validation split and seeded mini-batches.
* ``mlp-regression`` — one-hidden-layer tanh network (manual backprop) on a
  seeded regression dataset; the smallest genuinely nonconvex kind.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import TaskfedError
from .params import ModelParams, ParamVector

KINDS = ("quadratic", "logistic", "mlp-regression")

MAX_HIDDEN_UNITS = 32


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class QuadraticPayload:
    matrix: np.ndarray  # (d, d) symmetric positive definite
    target: np.ndarray  # (d,)


@dataclass(frozen=True)
class LogisticPayload:
    train_x: np.ndarray
    train_y: np.ndarray
    val_x: np.ndarray
    val_y: np.ndarray
    batch_size: int


@dataclass(frozen=True)
class MlpPayload:
    in_dim: int
    hidden_dim: int
    out_dim: int
    train_x: np.ndarray
    train_y: np.ndarray
    val_x: np.ndarray
    val_y: np.ndarray
    batch_size: int


@dataclass(frozen=True)
class TaskSpec:
    """One node's local problem; immutable and reproducible from its seed."""

    task_id: str
    kind: str
    payload: QuadraticPayload | LogisticPayload | MlpPayload
    dataset_seed: int


@dataclass(frozen=True)
class AnalysisParams:
    """Smoothness/convexity constants used by convergence instrumentation."""

    L: float
    mu: float
    sigma_sq: float
    grad_bound: float

    def __post_init__(self):
        vals = (self.L, self.mu, self.sigma_sq, self.grad_bound)
        if not all(np.isfinite(v) and v >= 0 for v in vals):
            raise TaskfedError("bad-config", f"analysis constants must be finite nonnegative, got {vals}")


def task_dim(task: TaskSpec) -> int:
    """Total parameter dimension the task's loss is defined over."""
    p = task.payload
    if task.kind == "quadratic":
        return p.target.shape[0]
    if task.kind == "logistic":
        return p.train_x.shape[1]
    if task.kind == "mlp-regression":
        return p.hidden_dim * (p.in_dim + 1) + p.out_dim * (p.hidden_dim + 1)
    raise TaskfedError("bad-config", f"unknown task kind {task.kind!r}")


# ---------------------------------------------------------------------------
# constructors


def quadratic_task(task_id: str, matrix, target, dataset_seed: int = 0) -> TaskSpec:
    a = np.array(matrix, dtype=np.float64)
    b = np.array(target, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or b.ndim != 1 or b.shape[0] != a.shape[0]:
        raise TaskfedError("bad-config", f"inconsistent quadratic shapes {a.shape} / {b.shape}")
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-12):
        raise TaskfedError("bad-config", "quadratic matrix must be symmetric")
    min_eig = float(np.linalg.eigvalsh(a).min())
    if min_eig <= 0.0:
        raise TaskfedError("bad-config", f"quadratic matrix must be positive definite (min eig {min_eig})")
    return TaskSpec(task_id, "quadratic", QuadraticPayload(_readonly(a), _readonly(b)), dataset_seed)


def _split_80_20(rng: np.random.Generator, x: np.ndarray, y: np.ndarray):
    n = x.shape[0]
    perm = rng.permutation(n)
    cut = max(1, int(round(n * 0.8)))
    if cut >= n:
        cut = n - 1
    tr, va = perm[:cut], perm[cut:]
    return x[tr], y[tr], x[va], y[va]


def logistic_task(
    task_id: str,
    n_samples: int,
    dim: int,
    dataset_seed: int,
    batch_size: int = 8,
    true_weights=None,
) -> TaskSpec:
    if n_samples < 5 or dim < 1 or batch_size < 1:
        raise TaskfedError("bad-config", "logistic task needs n_samples >= 5, dim >= 1, batch_size >= 1")
    rng = np.random.default_rng(dataset_seed)
    x = rng.normal(size=(n_samples, dim))
    if true_weights is None:
        w_true = rng.normal(size=dim) / np.sqrt(dim)
    else:
        w_true = np.array(true_weights, dtype=np.float64)
        if w_true.shape != (dim,):
            raise TaskfedError("bad-config", f"true_weights must have shape ({dim},)")
    y = (rng.random(n_samples) < _sigmoid(x @ w_true)).astype(np.float64)
    tx, ty, vx, vy = _split_80_20(rng, x, y)
    batch = min(batch_size, tx.shape[0])
    return TaskSpec(
        task_id,
        "logistic",
        LogisticPayload(_readonly(tx), _readonly(ty), _readonly(vx), _readonly(vy), batch),
        dataset_seed,
    )


def mlp_task(
    task_id: str,
    n_samples: int,
    in_dim: int,
    hidden_dim: int,
    dataset_seed: int,
    out_dim: int = 1,
    batch_size: int = 8,
    noise: float = 0.05,
) -> TaskSpec:
    if hidden_dim < 1 or hidden_dim > MAX_HIDDEN_UNITS:
        raise TaskfedError("bad-config", f"hidden_dim must be in [1, {MAX_HIDDEN_UNITS}]")
    if n_samples < 5 or in_dim < 1 or out_dim < 1 or batch_size < 1:
        raise TaskfedError("bad-config", "mlp task needs n_samples >= 5 and positive dims")
    rng = np.random.default_rng(dataset_seed)
    x = rng.normal(size=(n_samples, in_dim))
    w1 = rng.normal(size=(hidden_dim, in_dim)) / np.sqrt(in_dim)
    b1 = rng.normal(size=hidden_dim) * 0.1
    w2 = rng.normal(size=(out_dim, hidden_dim)) / np.sqrt(hidden_dim)
    b2 = rng.normal(size=out_dim) * 0.1
    y = np.tanh(x @ w1.T + b1) @ w2.T + b2 + noise * rng.normal(size=(n_samples, out_dim))
    tx, ty, vx, vy = _split_80_20(rng, x, y)
    batch = min(batch_size, tx.shape[0])
    return TaskSpec(
        task_id,
        "mlp-regression",
        MlpPayload(
            in_dim, hidden_dim, out_dim,
            _readonly(tx), _readonly(ty), _readonly(vx), _readonly(vy), batch,
        ),
        dataset_seed,
    )


# ---------------------------------------------------------------------------
# loss / gradient


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _logistic_loss(x: np.ndarray, y: np.ndarray, w: np.ndarray) -> float:
    z = x @ w
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def _logistic_grad(x: np.ndarray, y: np.ndarray, w: np.ndarray) -> np.ndarray:
    z = x @ w
    return x.T @ (_sigmoid(z) - y) / x.shape[0]


def _mlp_unpack(p: MlpPayload, w: np.ndarray):
    h, i, o = p.hidden_dim, p.in_dim, p.out_dim
    k = 0
    w1 = w[k:k + h * i].reshape(h, i); k += h * i
    b1 = w[k:k + h]; k += h
    w2 = w[k:k + o * h].reshape(o, h); k += o * h
    b2 = w[k:k + o]
    return w1, b1, w2, b2


def _mlp_forward(p: MlpPayload, x: np.ndarray, w: np.ndarray):
    w1, b1, w2, b2 = _mlp_unpack(p, w)
    a1 = np.tanh(x @ w1.T + b1)
    pred = a1 @ w2.T + b2
    return a1, pred


def _mlp_loss(p: MlpPayload, x: np.ndarray, y: np.ndarray, w: np.ndarray) -> float:
    _, pred = _mlp_forward(p, x, w)
    r = pred - y
    return float(0.5 * np.sum(r * r) / x.shape[0])


def _mlp_grad(p: MlpPayload, x: np.ndarray, y: np.ndarray, w: np.ndarray) -> np.ndarray:
    w1, b1, w2, b2 = _mlp_unpack(p, w)
    a1 = np.tanh(x @ w1.T + b1)
    pred = a1 @ w2.T + b2
    dpred = (pred - y) / x.shape[0]
    g_w2 = dpred.T @ a1
    g_b2 = dpred.sum(axis=0)
    dz1 = (dpred @ w2) * (1.0 - a1 * a1)
    g_w1 = dz1.T @ x
    g_b1 = dz1.sum(axis=0)
    return np.concatenate([g_w1.ravel(), g_b1, g_w2.ravel(), g_b2])


def _check_dim(task: TaskSpec, flat: np.ndarray) -> None:
    want = task_dim(task)
    if flat.shape[0] != want:
        raise TaskfedError("dim-mismatch", f"task {task.task_id} expects dim {want}, got {flat.shape[0]}")


def loss(task: TaskSpec, params: ModelParams) -> float:
    """Full (training-split) objective value at ``params``."""
    w = params.as_flat().values
    _check_dim(task, w)
    p = task.payload
    if task.kind == "quadratic":
        r = w - p.target
        return float(0.5 * r @ (p.matrix @ r))
    if task.kind == "logistic":
        return _logistic_loss(p.train_x, p.train_y, w)
    return _mlp_loss(p, p.train_x, p.train_y, w)


def validation_loss(task: TaskSpec, params: ModelParams) -> float:
    """Held-out objective; quadratics report the analytic loss unchanged."""
    w = params.as_flat().values
    _check_dim(task, w)
    p = task.payload
    if task.kind == "quadratic":
        r = w - p.target
        return float(0.5 * r @ (p.matrix @ r))
    if task.kind == "logistic":
        return _logistic_loss(p.val_x, p.val_y, w)
    return _mlp_loss(p, p.val_x, p.val_y, w)


def gradient(task: TaskSpec, params: ModelParams) -> ParamVector:
    """Exact full-batch gradient of :func:`loss` at ``params``."""
    w = params.as_flat().values
    _check_dim(task, w)
    p = task.payload
    if task.kind == "quadratic":
        g = p.matrix @ (w - p.target)
    elif task.kind == "logistic":
        g = _logistic_grad(p.train_x, p.train_y, w)
    else:
        g = _mlp_grad(p, p.train_x, p.train_y, w)
    return ParamVector(g)


def batch_seed(root_seed: int, node_id: int, round_idx: int, epoch_idx: int) -> int:
    """Deterministic per-(node, round, epoch) mini-batch seed.

    Independent of the aggregation scheme so scheme comparisons see
    identical gradient noise.
    """
    ss = np.random.SeedSequence([int(root_seed), int(node_id), int(round_idx), int(epoch_idx)])
    return int(ss.generate_state(2, dtype=np.uint64)[0])


def sgd_step(task: TaskSpec, params: ModelParams, lr: float, batch_seed: int = 0) -> ModelParams:
    """One gradient step: full-batch for quadratics, seeded mini-batch else."""
    if not lr > 0:
        raise TaskfedError("bad-lr", f"learning rate must be positive, got {lr}")
    w = params.as_flat().values
    _check_dim(task, w)
    p = task.payload
    if task.kind == "quadratic":
        g = p.matrix @ (w - p.target)
    else:
        rng = np.random.default_rng(batch_seed)
        n = p.train_x.shape[0]
        idx = np.sort(rng.choice(n, size=min(p.batch_size, n), replace=False))
        if task.kind == "logistic":
            g = _logistic_grad(p.train_x[idx], p.train_y[idx], w)
        else:
            g = _mlp_grad(p, p.train_x[idx], p.train_y[idx], w)
    flat = ParamVector(w - lr * g)
    return ModelParams.from_flat(flat, params.split_spec)


# ---------------------------------------------------------------------------
# constrained optimum


def global_optimum(
    tasks: Sequence[TaskSpec],
    split_spec: int,
    group_ids: Sequence[int] | None = None,
) -> tuple[list[ModelParams], float]:
    """Exact minimizer of the summed quadratic objectives under the
    constraint that nodes of the same group share their backbone.

    Variables are one backbone vector per group plus one head per node;
    stationarity gives a single dense linear system. Returns the per-node
    parameters and the optimal objective value.
    """
    if len(tasks) == 0:
        raise TaskfedError("empty-aggregate", "no tasks")
    for t in tasks:
        if t.kind != "quadratic":
            raise TaskfedError("no-analytic-optimum", f"task {t.task_id} has kind {t.kind}")
    if group_ids is None:
        group_ids = [0] * len(tasks)
    if len(group_ids) != len(tasks):
        raise TaskfedError("bad-config", "group_ids must align with tasks")

    dims = [task_dim(t) for t in tasks]
    b_dim = split_spec
    if any(d < b_dim for d in dims):
        raise TaskfedError("split-mismatch", "split_spec exceeds a task dimension")
    head_dims = [d - b_dim for d in dims]
    groups = sorted(set(group_ids))
    g_index = {g: k for k, g in enumerate(groups)}

    # Variable layout: [backbone of group 0 | backbone of group 1 | ... | head of node 0 | ...]
    n_vars = b_dim * len(groups) + sum(head_dims)
    head_off = []
    off = b_dim * len(groups)
    for hd in head_dims:
        head_off.append(off)
        off += hd

    system = np.zeros((n_vars, n_vars))
    rhs = np.zeros(n_vars)
    for i, t in enumerate(tasks):
        a = t.payload.matrix
        tb = t.payload.target
        gb = g_index[group_ids[i]] * b_dim
        hb = head_off[i]
        a_bb, a_bh = a[:b_dim, :b_dim], a[:b_dim, b_dim:]
        a_hb, a_hh = a[b_dim:, :b_dim], a[b_dim:, b_dim:]
        system[gb:gb + b_dim, gb:gb + b_dim] += a_bb
        system[gb:gb + b_dim, hb:hb + head_dims[i]] += a_bh
        system[hb:hb + head_dims[i], gb:gb + b_dim] += a_hb
        system[hb:hb + head_dims[i], hb:hb + head_dims[i]] += a_hh
        rhs[gb:gb + b_dim] += a_bb @ tb[:b_dim] + a_bh @ tb[b_dim:]
        rhs[hb:hb + head_dims[i]] += a_hb @ tb[:b_dim] + a_hh @ tb[b_dim:]

    try:
        z = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as exc:
        raise TaskfedError("singular-system", f"constrained system is singular: {exc}") from exc
    resid = float(np.linalg.norm(system @ z - rhs))
    if not np.isfinite(resid) or resid > 1e-8 * (1.0 + float(np.linalg.norm(rhs))):
        raise TaskfedError("singular-system", f"constrained solve residual too large ({resid})")

    out: list[ModelParams] = []
    value = 0.0
    for i, t in enumerate(tasks):
        gb = g_index[group_ids[i]] * b_dim
        hb = head_off[i]
        backbone = ParamVector(z[gb:gb + b_dim])
        head = ParamVector(z[hb:hb + head_dims[i]])
        mp = ModelParams(backbone, head, b_dim)
        out.append(mp)
        value += loss(t, mp)
    return out, value


def analysis_params(tasks: Sequence[TaskSpec], probe_seed: int = 0) -> AnalysisParams:
    """Smoothness/convexity constants over a task collection.

    Quadratics give exact eigenvalue bounds; logistic uses the spectral
    bound L = lambda_max(X^T X)/(4 n); the nonconvex mlp kind gets sampled
    estimates (documented as such).
    """
    if len(tasks) == 0:
        raise TaskfedError("empty-aggregate", "no tasks")
    l_vals, mu_vals, sig_vals, g_vals = [], [], [], []
    rng = np.random.default_rng(probe_seed)
    for t in tasks:
        p = t.payload
        if t.kind == "quadratic":
            eigs = np.linalg.eigvalsh(p.matrix)
            l_vals.append(float(eigs.max()))
            mu_vals.append(float(eigs.min()))
            sig_vals.append(0.0)
            g_vals.append(0.0)
        elif t.kind == "logistic":
            x = p.train_x
            l_vals.append(float(np.linalg.eigvalsh(x.T @ x).max()) / (4.0 * x.shape[0]))
            mu_vals.append(0.0)
            sig_vals.append(float(np.max(np.sum(x * x, axis=1))))
            g_vals.append(float(np.max(np.linalg.norm(x, axis=1))))
        else:
            # Sampled Lipschitz/gradient bounds near the origin.
            d = task_dim(t)
            best_l, best_g = 0.0, 0.0
            for _ in range(32):
                wa = rng.normal(size=d)
                wb = rng.normal(size=d)
                ga = _mlp_grad(p, p.train_x, p.train_y, wa)
                gb = _mlp_grad(p, p.train_x, p.train_y, wb)
                denom = float(np.linalg.norm(wa - wb))
                if denom > 1e-12:
                    best_l = max(best_l, float(np.linalg.norm(ga - gb)) / denom)
                best_g = max(best_g, float(np.linalg.norm(ga)))
            l_vals.append(best_l)
            mu_vals.append(0.0)
            sig_vals.append(best_g**2)
            g_vals.append(best_g)
    return AnalysisParams(
        L=max(l_vals),
        mu=min(mu_vals),
        sigma_sq=max(sig_vals),
        grad_bound=max(g_vals),
    )

"""Experiment harness: config loading, synthetic scenario generation,
orchestration of the federation driver, and metrics export.

Outputs per run: a CSV with the fixed header
``round,node_id,group_id,scheme,train_loss,val_loss,phi`` (one row per round
per node), a summary JSON, and a newline-delimited message transcript.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import yaml

from . import analysis, tasks as tasklib
from .aggregation import HcaConfig, LinearCombineWeights
from .errors import TaskfedError
from .netsim import SCHEMES, Federation, Topology, build_topology
from .params import ModelParams, ParamVector
from .protocol import NodeState, TaskGroup
from .tasks import TaskSpec

SCENARIOS = ("label-het-synthetic", "task-het-synthetic", "custom")

_DEFAULT_SCENARIO_PARAMS = {
    "head_dim": 2,
    "spread": 0.05,
    "group_gap": 0.0,
    "head_gap": 1.0,
    "init_noise": 1.0,
    "target_scale": 1.0,
    "curvature_backbone": [0.45, 0.6],
    "curvature_head": [1.0, 1.8],
    "curvature_scale": None,  # per-group multipliers; defaults to all ones
    "n_samples": 100,
    "batch_size": 8,
    "nodes": None,  # custom scenario: explicit per-node task specs
}


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    group_sizes: tuple[int, ...]
    rounds: int
    local_epochs: int
    lr: dict
    scheme: str
    seed: int
    out: str
    split_spec: int
    hca: HcaConfig | None = None
    alpha: np.ndarray | None = None
    scenario_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise TaskfedError("bad-config", f"unknown scenario {self.scenario!r}")
        if self.scheme not in SCHEMES:
            raise TaskfedError("bad-config", f"unknown scheme {self.scheme!r}")
        if self.rounds < 1:
            raise TaskfedError("bad-config", f"rounds must be >= 1, got {self.rounds}")
        if self.local_epochs < 1:
            raise TaskfedError("bad-config", f"local_epochs must be >= 1, got {self.local_epochs}")
        if len(self.group_sizes) == 0 or any(s < 1 for s in self.group_sizes):
            raise TaskfedError("bad-config", f"group sizes must all be >= 1, got {self.group_sizes}")
        if self.split_spec < 1:
            raise TaskfedError("bad-config", f"split_spec must be >= 1, got {self.split_spec}")
        for kind, value in self.lr.items():
            if kind not in tasklib.KINDS:
                raise TaskfedError("bad-config", f"lr given for unknown task kind {kind!r}")
            if not (isinstance(value, (int, float)) and value > 0):
                raise TaskfedError("bad-config", f"lr for {kind} must be positive, got {value!r}")
        if self.scheme == "colnet-hca" and self.hca is None:
            raise TaskfedError("bad-config", "scheme colnet-hca requires an hca section with c")
        if self.scheme == "linear-combine":
            if self.alpha is None:
                raise TaskfedError("bad-config", "scheme linear-combine requires an alpha matrix")
            if self.alpha.shape != (len(self.group_sizes), len(self.group_sizes)):
                raise TaskfedError(
                    "bad-config",
                    f"alpha must be {len(self.group_sizes)}x{len(self.group_sizes)}, "
                    f"got {self.alpha.shape}",
                )


def config_from_dict(raw: Mapping) -> ExperimentConfig:
    """Build and validate a config from a parsed mapping."""
    if not isinstance(raw, Mapping):
        raise TaskfedError("bad-config", "config root must be a mapping")
    known = {
        "scenario", "groups", "rounds", "local_epochs", "lr", "scheme",
        "seed", "out", "split_spec", "hca", "alpha", "scenario_params",
    }
    unknown = set(raw) - known
    if unknown:
        raise TaskfedError("bad-config", f"unknown config keys: {sorted(unknown)}")
    try:
        groups_raw = raw.get("groups", {})
        if isinstance(groups_raw, Mapping):
            sizes = tuple(int(s) for s in groups_raw.get("sizes", ()))
            if "count" in groups_raw and int(groups_raw["count"]) != len(sizes):
                raise TaskfedError(
                    "bad-config",
                    f"groups.count {groups_raw['count']} != number of sizes {len(sizes)}",
                )
        else:
            sizes = tuple(int(s) for s in groups_raw)
        hca_raw = raw.get("hca")
        hca = None
        if hca_raw is not None:
            if "c" not in hca_raw:
                raise TaskfedError("bad-config", "hca section requires c")
            hca = HcaConfig(
                c=float(hca_raw["c"]),
                dual_iters=int(hca_raw.get("dual_iters", 200)),
                dual_tol=float(hca_raw.get("dual_tol", 1e-8)),
                dual_step=float(hca_raw.get("dual_step", 0.1)),
            )
        alpha_raw = raw.get("alpha")
        alpha = None
        if alpha_raw is not None:
            alpha = np.array(alpha_raw, dtype=np.float64)
        sp = dict(_DEFAULT_SCENARIO_PARAMS)
        sp_raw = raw.get("scenario_params", {}) or {}
        unknown_sp = set(sp_raw) - set(sp)
        if unknown_sp:
            raise TaskfedError("bad-config", f"unknown scenario_params keys: {sorted(unknown_sp)}")
        sp.update(sp_raw)
        return ExperimentConfig(
            scenario=str(raw.get("scenario", "label-het-synthetic")),
            group_sizes=sizes,
            rounds=int(raw.get("rounds", 15)),
            local_epochs=int(raw.get("local_epochs", 2)),
            lr=dict(raw.get("lr", {})),
            scheme=str(raw.get("scheme", "colnet-hca")),
            seed=int(raw.get("seed", 0)),
            out=str(raw.get("out", "runs")),
            split_spec=int(raw.get("split_spec", 8)),
            hca=hca,
            alpha=alpha,
            scenario_params=sp,
        )
    except TaskfedError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise TaskfedError("bad-config", f"malformed config: {exc}") from exc


def load_config(path: str) -> ExperimentConfig:
    """Parse a YAML config file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise TaskfedError("bad-config", f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise TaskfedError("bad-config", f"cannot parse config {path}: {exc}") from exc
    if raw is None:
        raise TaskfedError("bad-config", f"config {path} is empty")
    return config_from_dict(raw)


def with_overrides(
    config: ExperimentConfig,
    *,
    scheme: str | None = None,
    seed: int | None = None,
    out: str | None = None,
) -> ExperimentConfig:
    """A copy of the config with CLI-level overrides applied."""
    return ExperimentConfig(
        scenario=config.scenario,
        group_sizes=config.group_sizes,
        rounds=config.rounds,
        local_epochs=config.local_epochs,
        lr=dict(config.lr),
        scheme=config.scheme if scheme is None else scheme,
        seed=config.seed if seed is None else int(seed),
        out=config.out if out is None else out,
        split_spec=config.split_spec,
        hca=config.hca,
        alpha=config.alpha,
        scenario_params=dict(config.scenario_params),
    )


# ---------------------------------------------------------------------------
# scenario generation


def _node_layout(group_sizes: Sequence[int]) -> list[TaskGroup]:
    groups = []
    next_id = 0
    for gid, size in enumerate(group_sizes):
        members = frozenset(range(next_id, next_id + size))
        next_id += size
        groups.append(
            TaskGroup(
                group_id=gid,
                member_ids=members,
                leader_id=min(members),
                task_template="quadratic",
            )
        )
    return groups


def _backbone_block(config: ExperimentConfig) -> np.ndarray:
    """Shared backbone curvature: seeded rotation of a fixed spectrum."""
    sp = config.scenario_params
    b = config.split_spec
    lo, hi = (float(v) for v in sp["curvature_backbone"])
    if not (0 < lo <= hi):
        raise TaskfedError("bad-config", f"curvature_backbone range must be 0 < lo <= hi, got {(lo, hi)}")
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0]))
    raw = rng.normal(size=(b, b))
    q, _ = np.linalg.qr(raw)
    lam = np.linspace(lo, hi, b)
    a = (q * lam) @ q.T
    return 0.5 * (a + a.T)


def _group_centers(config: ExperimentConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Per-group backbone and head target centers."""
    sp = config.scenario_params
    b, h = config.split_spec, int(sp["head_dim"])
    n_groups = len(config.group_sizes)
    t_backbone = float(sp["target_scale"]) * rng.normal(size=b)
    axis = rng.normal(size=b)
    axis /= np.linalg.norm(axis)
    offsets = np.linspace(-0.5, 0.5, n_groups) if n_groups > 1 else np.zeros(1)
    backbone_centers = t_backbone + float(sp["group_gap"]) * offsets[:, None] * axis
    t_head = float(sp["target_scale"]) * rng.normal(size=h)
    head_centers = t_head + float(sp["head_gap"]) * rng.normal(size=(n_groups, h))
    return backbone_centers, head_centers


def _curvature_scales(config: ExperimentConfig) -> list[float]:
    sp = config.scenario_params
    n_groups = len(config.group_sizes)
    scales = sp["curvature_scale"]
    if scales is None:
        return [1.0] * n_groups
    scales = [float(s) for s in scales]
    if len(scales) != n_groups or any(s <= 0 for s in scales):
        raise TaskfedError(
            "bad-config", f"curvature_scale needs {n_groups} positive entries, got {scales}"
        )
    return scales


def _label_het_tasks(config: ExperimentConfig, groups: Sequence[TaskGroup]) -> dict[int, TaskSpec]:
    """Two-plus groups of quadratics: shared backbone curvature per group,
    targets drawn near per-group centers with configurable spread."""
    sp = config.scenario_params
    b, h = config.split_spec, int(sp["head_dim"])
    if h < 1:
        raise TaskfedError("bad-config", f"head_dim must be >= 1, got {h}")
    lo, hi = (float(v) for v in sp["curvature_head"])
    if not (0 < lo <= hi):
        raise TaskfedError("bad-config", f"curvature_head range must be 0 < lo <= hi, got {(lo, hi)}")
    base_block = _backbone_block(config)
    scales = _curvature_scales(config)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    backbone_centers, head_centers = _group_centers(config, rng)
    spread = float(sp["spread"])
    out: dict[int, TaskSpec] = {}
    for g in groups:
        for nid in sorted(g.member_ids):
            target = np.concatenate(
                [
                    backbone_centers[g.group_id] + spread * rng.normal(size=b),
                    head_centers[g.group_id] + spread * rng.normal(size=h),
                ]
            )
            head_eigs = rng.uniform(lo, hi, size=h)
            matrix = np.zeros((b + h, b + h))
            matrix[:b, :b] = scales[g.group_id] * base_block
            matrix[b:, b:] = np.diag(head_eigs)
            out[nid] = tasklib.quadratic_task(f"q{nid}", matrix, target, dataset_seed=config.seed)
    return out


def _task_het_tasks(config: ExperimentConfig, groups: Sequence[TaskGroup]) -> dict[int, TaskSpec]:
    """First group keeps quadratic regression heads; the others get logistic
    tasks over the same flat parameter vector (identical split)."""
    sp = config.scenario_params
    b, h = config.split_spec, int(sp["head_dim"])
    dim = b + h
    quad = _label_het_tasks(config, groups)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 3]))
    out: dict[int, TaskSpec] = {}
    for g in groups:
        for nid in sorted(g.member_ids):
            if g.group_id == 0:
                out[nid] = quad[nid]
            else:
                dataset_seed = int(rng.integers(0, 2**31 - 1))
                out[nid] = tasklib.logistic_task(
                    f"l{nid}",
                    n_samples=int(sp["n_samples"]),
                    dim=dim,
                    dataset_seed=dataset_seed,
                    batch_size=int(sp["batch_size"]),
                )
    return out


def _custom_tasks(config: ExperimentConfig, groups: Sequence[TaskGroup]) -> dict[int, TaskSpec]:
    """Explicit per-node quadratics: scenario_params.nodes lists one entry
    per node with ``group``, ``target``, and ``eigs`` or ``matrix``."""
    sp = config.scenario_params
    specs = sp["nodes"]
    n_nodes = sum(config.group_sizes)
    if not isinstance(specs, list) or len(specs) != n_nodes:
        raise TaskfedError("bad-config", f"custom scenario needs {n_nodes} node entries")
    out: dict[int, TaskSpec] = {}
    for nid, entry in enumerate(specs):
        try:
            target = np.array(entry["target"], dtype=np.float64)
            if "matrix" in entry:
                matrix = np.array(entry["matrix"], dtype=np.float64)
            else:
                matrix = np.diag(np.array(entry["eigs"], dtype=np.float64))
        except (KeyError, TypeError, ValueError) as exc:
            raise TaskfedError("bad-config", f"bad custom node entry {nid}: {exc}") from exc
        if target.shape[0] < config.split_spec:
            raise TaskfedError("bad-config", f"custom node {nid} smaller than split_spec")
        out[nid] = tasklib.quadratic_task(f"c{nid}", matrix, target, dataset_seed=config.seed)
    return out


def generate_scenario(
    config: ExperimentConfig,
) -> tuple[list[TaskGroup], dict[int, TaskSpec], Topology]:
    """Reproducible-from-seed groups, per-node tasks, and topology."""
    groups = _node_layout(config.group_sizes)
    if config.scenario == "label-het-synthetic":
        tasks = _label_het_tasks(config, groups)
    elif config.scenario == "task-het-synthetic":
        tasks = _task_het_tasks(config, groups)
    else:
        tasks = _custom_tasks(config, groups)
    for g in groups:
        kinds = {tasks[n].kind for n in g.member_ids}
        if len(kinds) == 1:
            g.task_template = kinds.pop()
        else:
            raise TaskfedError("bad-config", f"group {g.group_id} mixes task kinds {sorted(kinds)}")
    for nid, t in tasks.items():
        if t.kind not in config.lr:
            raise TaskfedError("bad-config", f"no lr configured for task kind {t.kind!r}")
    return groups, tasks, build_topology(groups)


def initial_states(
    config: ExperimentConfig,
    groups: Sequence[TaskGroup],
    tasks: Mapping[int, TaskSpec],
) -> dict[int, NodeState]:
    """Seeded per-node initial parameters (iid normal around the origin)."""
    sp = config.scenario_params
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 2]))
    custom_specs = sp["nodes"] if config.scenario == "custom" else None
    out: dict[int, NodeState] = {}
    for g in sorted(groups, key=lambda g: g.group_id):
        for nid in sorted(g.member_ids):
            dim = tasklib.task_dim(tasks[nid])
            init = float(sp["init_noise"]) * rng.normal(size=dim)
            if custom_specs is not None and "init" in custom_specs[nid]:
                init = np.array(custom_specs[nid]["init"], dtype=np.float64)
                if init.shape[0] != dim:
                    raise TaskfedError("bad-config", f"custom init for node {nid} has wrong dim")
            params = ModelParams.from_flat(ParamVector(init), config.split_spec)
            out[nid] = NodeState(
                node_id=nid,
                group_id=g.group_id,
                params=params,
                round_start_backbone=params.backbone,
                is_leader=(nid == g.leader_id),
                rng_seed=config.seed,
                lr=float(config.lr[tasks[nid].kind]),
            )
    return out


# ---------------------------------------------------------------------------
# experiment execution


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    metrics: list[analysis.MetricsRecord]
    summary: dict
    federation: Federation
    csv_path: str | None = None
    summary_path: str | None = None
    transcript_path: str | None = None


def build_federation(config: ExperimentConfig) -> tuple[Federation, float | None]:
    """Construct the driver and, for all-quadratic scenarios, the initial
    optimality gap (the phi reference is solved once up front)."""
    groups, tasks, _ = generate_scenario(config)
    states = initial_states(config, groups, tasks)
    node_ids = sorted(tasks)
    all_quadratic = all(tasks[n].kind == "quadratic" for n in node_ids)
    phi_fn = None
    phi_initial = None
    if all_quadratic:
        optimum = tasklib.global_optimum(
            [tasks[n] for n in node_ids],
            config.split_spec,
            [states[n].group_id for n in node_ids],
        )
        phi_fn = lambda nodes: analysis.compute_phi(nodes, tasks, optimum)
        phi_initial = phi_fn(states)
    alpha = LinearCombineWeights(config.alpha) if config.alpha is not None else None
    fed = Federation(
        groups,
        states,
        tasks,
        scheme=config.scheme,
        local_epochs=config.local_epochs,
        seed=config.seed,
        hca_cfg=config.hca,
        alpha=alpha,
        phi_fn=phi_fn,
    )
    return fed, phi_initial


def _fmt(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def render_csv(metrics: Sequence[analysis.MetricsRecord]) -> str:
    lines = ["round,node_id,group_id,scheme,train_loss,val_loss,phi"]
    for m in sorted(metrics, key=lambda m: (m.round, m.node_id)):
        lines.append(
            f"{m.round},{m.node_id},{m.group_id},{m.scheme},"
            f"{_fmt(m.train_loss)},{_fmt(m.val_loss)},{_fmt(m.phi)}"
        )
    return "\n".join(lines) + "\n"


def _micro_prf(federation: Federation, group: TaskGroup) -> dict:
    """Micro-averaged precision/recall/F1 over a logistic group's validation
    splits (class-wise counts pooled over members and classes)."""
    tp = fp = fn = 0
    for nid in sorted(group.member_ids):
        task = federation.tasks[nid]
        payload = task.payload
        w = federation.nodes[nid].params.as_flat().values
        scores = payload.val_x @ w
        pred = (scores > 0.0).astype(np.float64)
        truth = payload.val_y
        for cls in (0.0, 1.0):
            tp += int(np.sum((pred == cls) & (truth == cls)))
            fp += int(np.sum((pred == cls) & (truth != cls)))
            fn += int(np.sum((pred != cls) & (truth == cls)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"precision": precision, "recall": recall, "f1": f1}


def summarize(
    config: ExperimentConfig,
    federation: Federation,
    phi_initial: float | None,
) -> dict:
    metrics = federation.metrics
    last_round = max(m.round for m in metrics)
    final = [m for m in metrics if m.round == last_round]
    per_group: dict[int, list[float]] = {}
    for m in final:
        per_group.setdefault(m.group_id, []).append(m.train_loss)
    phi_series = []
    for r in range(1, last_round + 1):
        vals = [m.phi for m in metrics if m.round == r]
        phi_series.append(vals[0] if vals else None)
    gamma_hat = r_squared = None
    if phi_series and phi_series[0] is not None:
        try:
            est = analysis.estimate_contraction(phi_series)
            gamma_hat, r_squared = est.gamma_hat, est.r_squared
        except TaskfedError:
            pass
    node_ids = sorted(federation.tasks)
    summary = {
        "scheme": config.scheme,
        "scenario": config.scenario,
        "seed": config.seed,
        "rounds": last_round,
        "local_epochs": config.local_epochs,
        "final_mean_train_loss": float(np.mean([m.train_loss for m in final])),
        "final_mean_val_loss": float(np.mean([m.val_loss for m in final])),
        "final_mean_loss_per_group": {
            str(gid): float(np.mean(vals)) for gid, vals in sorted(per_group.items())
        },
        "phi_initial": phi_initial,
        "phi_final": phi_series[-1] if phi_series else None,
        "gamma_hat": gamma_hat,
        "r_squared": r_squared,
        "transcript_sha256": federation.transcript_sha256(),
        "message_count": len(federation.message_log),
        "invariant_violations": list(federation.violations),
    }
    constants = tasklib.analysis_params([federation.tasks[n] for n in node_ids])
    summary["analysis_constants"] = {
        "L": constants.L,
        "mu": constants.mu,
        "sigma_sq": constants.sigma_sq,
        "grad_bound": constants.grad_bound,
    }
    classification = {}
    for g in federation.groups:
        if g.task_template == "logistic":
            classification[str(g.group_id)] = _micro_prf(federation, g)
    if classification:
        summary["classification"] = classification
    return summary


def run_experiment(config: ExperimentConfig, write: bool = True) -> ExperimentResult:
    """Run one experiment; optionally write CSV/JSON/transcript to disk."""
    fed, phi_initial = build_federation(config)
    fed.run(config.rounds)
    summary = summarize(config, fed, phi_initial)
    result = ExperimentResult(
        config=config, metrics=list(fed.metrics), summary=summary, federation=fed
    )
    if write:
        os.makedirs(config.out, exist_ok=True)
        base = os.path.join(config.out, config.scheme)
        result.csv_path = base + ".csv"
        with open(result.csv_path, "w", encoding="utf-8") as fh:
            fh.write(render_csv(fed.metrics))
        result.summary_path = base + "-summary.json"
        with open(result.summary_path, "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        result.transcript_path = base + "-transcript.ndjson"
        with open(result.transcript_path, "w", encoding="utf-8") as fh:
            for line in fed.transcript_lines():
                fh.write(line + "\n")
    return result

"""Per-node protocol: local training, intra-group averaging, leader-mediated
cross-group merging, and seeded leader rotation.

Nodes communicate exclusively through :class:`Message` values; a node's
task head is never placed in any payload. Rounds are synchronous: a missing
peer contribution is a hard error, never a silent partial aggregate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from . import aggregation
from . import params as pv
from .aggregation import HcaConfig, LinearCombineWeights
from .errors import TaskfedError
from .params import BackboneDelta, ModelParams, ParamVector
from .tasks import TaskSpec, sgd_step

MESSAGE_KINDS = ("BackboneShare", "DeltaShare", "LeaderBackbone", "LeaderHandoff")

# Cross-aggregation strategies a leader can apply to the exchanged deltas.
CROSS_SCHEMES = ("hca", "linear-combine", "plain-average")

_PAYLOAD_TYPES = {
    "BackboneShare": ParamVector,
    "DeltaShare": BackboneDelta,
    "LeaderBackbone": ParamVector,
    "LeaderHandoff": int,
}


@dataclass
class NodeState:
    """One node's mutable protocol state; owned by the simulation driver."""

    node_id: int
    group_id: int
    params: ModelParams
    round_start_backbone: ParamVector
    is_leader: bool
    rng_seed: int
    lr: float
    steps_taken: int = 0


@dataclass
class TaskGroup:
    """A task group: member set, current leader, and the shared task kind."""

    group_id: int
    member_ids: frozenset[int]
    leader_id: int
    task_template: str

    def __post_init__(self):
        self.member_ids = frozenset(int(m) for m in self.member_ids)
        if len(self.member_ids) == 0:
            raise TaskfedError("empty-group", f"group {self.group_id} has no members")
        if self.leader_id not in self.member_ids:
            raise TaskfedError(
                "bad-config", f"leader {self.leader_id} not a member of group {self.group_id}"
            )


@dataclass(frozen=True)
class Message:
    """A protocol message; (sender, seq) is unique per federation run."""

    kind: str
    sender: int
    receiver: int
    round: int
    payload: ParamVector | BackboneDelta | int
    seq: int

    def __post_init__(self):
        if self.kind not in MESSAGE_KINDS:
            raise TaskfedError("bad-config", f"unknown message kind {self.kind!r}")
        want = _PAYLOAD_TYPES[self.kind]
        if not isinstance(self.payload, want):
            raise TaskfedError(
                "bad-config",
                f"{self.kind} payload must be {want.__name__}, got {type(self.payload).__name__}",
            )


def _default_seq(_sender: int) -> int:
    return 0


def run_local_training(
    node: NodeState,
    task: TaskSpec,
    epochs: int,
    batch_seeds: Sequence[int] | None = None,
) -> NodeState:
    """Apply ``epochs`` gradient steps to the node's parameters in place.

    ``round_start_backbone`` is left untouched; the driver snapshots it
    before training starts.
    """
    if epochs < 1:
        raise TaskfedError("bad-config", f"epochs must be >= 1, got {epochs}")
    if batch_seeds is not None and len(batch_seeds) != epochs:
        raise TaskfedError("bad-config", "need one batch seed per epoch")
    for e in range(epochs):
        seed = 0 if batch_seeds is None else int(batch_seeds[e])
        node.params = sgd_step(task, node.params, node.lr, seed)
        node.steps_taken += 1
    return node


def intra_round(
    node: NodeState,
    received_backbones: Mapping[int, ParamVector],
    group: TaskGroup,
) -> NodeState:
    """Replace the node's backbone by the group average; head untouched.

    ``received_backbones`` maps sender id to the shared backbone and must
    cover every other group member. Members are averaged in sorted-id order
    so all members compute a bit-identical result.
    """
    expected = group.member_ids - {node.node_id}
    missing = expected - set(received_backbones)
    if missing:
        raise TaskfedError(
            "incomplete-round",
            f"node {node.node_id} missing backbone shares from {sorted(missing)}",
        )
    ordered = []
    for member in sorted(group.member_ids):
        if member == node.node_id:
            ordered.append(node.params.backbone)
        else:
            ordered.append(received_backbones[member])
    node.params = node.params.with_backbone(aggregation.intra_aggregate(ordered))
    return node


def leader_round(
    leader: NodeState,
    own_delta: BackboneDelta,
    foreign_deltas: Sequence[BackboneDelta],
    scheme: str,
    *,
    group: TaskGroup,
    hca_cfg: HcaConfig | None = None,
    alpha: LinearCombineWeights | None = None,
    expected_groups: Sequence[int] | None = None,
    seq_alloc: Callable[[int], int] = _default_seq,
) -> tuple[ParamVector, list[Message]]:
    """Merge the exchanged deltas and produce the group's new backbone.

    The merged update is added to the leader's post-averaging backbone, and
    one LeaderBackbone message per remaining member is produced. Deltas are
    ordered by origin group so every leader reduces the identical list.
    """
    if scheme not in CROSS_SCHEMES:
        raise TaskfedError("bad-scheme", f"unknown cross scheme {scheme!r}")
    if expected_groups is not None:
        got = {d.origin_group for d in foreign_deltas}
        missing = set(expected_groups) - got - {own_delta.origin_group}
        if missing:
            raise TaskfedError(
                "incomplete-round",
                f"leader {leader.node_id} missing delta shares from groups {sorted(missing)}",
            )

    all_deltas = sorted([own_delta, *foreign_deltas], key=lambda d: d.origin_group)
    if scheme == "hca":
        if hca_cfg is None:
            raise TaskfedError("bad-config", "hca scheme requires an HcaConfig")
        weights = aggregation.solve_dual_weights(all_deltas, hca_cfg)
        merged = aggregation.hca_merge(all_deltas, weights, hca_cfg)
        new_backbone = pv.add(leader.params.backbone, merged)
    elif scheme == "plain-average":
        merged = aggregation.plain_cross_average(all_deltas)
        new_backbone = pv.add(leader.params.backbone, merged)
    else:
        if alpha is None:
            raise TaskfedError("bad-config", "linear-combine scheme requires an alpha matrix")
        new_backbone = aggregation.linear_combine(
            leader.params.backbone, foreign_deltas, alpha, group.group_id
        )

    leader.params = leader.params.with_backbone(new_backbone)
    messages = []
    for member in sorted(group.member_ids - {leader.node_id}):
        messages.append(
            Message(
                kind="LeaderBackbone",
                sender=leader.node_id,
                receiver=member,
                round=own_delta.round,
                payload=new_backbone,
                seq=seq_alloc(leader.node_id),
            )
        )
    return new_backbone, messages


def follower_apply(
    node: NodeState,
    leader_backbone: Message,
    *,
    group: TaskGroup,
    current_round: int,
) -> NodeState:
    """Overwrite the node's backbone with the leader's distributed copy."""
    if leader_backbone.kind != "LeaderBackbone":
        raise TaskfedError(
            "bad-config", f"follower_apply expects LeaderBackbone, got {leader_backbone.kind}"
        )
    if leader_backbone.round != current_round:
        raise TaskfedError(
            "stale-message",
            f"message round {leader_backbone.round} != current round {current_round}",
        )
    if leader_backbone.sender != group.leader_id:
        raise TaskfedError(
            "unauthorized-update",
            f"sender {leader_backbone.sender} is not group {group.group_id}'s leader",
        )
    node.params = node.params.with_backbone(leader_backbone.payload)
    return node


def rotate_leader(
    group: TaskGroup,
    rng: np.random.Generator,
    *,
    notify_ids: Sequence[int] = (),
    seq_alloc: Callable[[int], int] = _default_seq,
    round_idx: int = 0,
) -> tuple[int, list[Message]]:
    """Draw the next leader uniformly from the members (incumbent included).

    Emits a LeaderHandoff to the successor plus one notification per id in
    ``notify_ids`` (the other groups' leaders), all carrying the new leader
    id. The group's leader_id is updated in place.
    """
    if len(group.member_ids) == 0:
        raise TaskfedError("empty-group", f"group {group.group_id} has no members")
    members = sorted(group.member_ids)
    old_leader = group.leader_id
    new_leader = members[int(rng.integers(0, len(members)))]
    group.leader_id = new_leader
    messages = [
        Message(
            kind="LeaderHandoff",
            sender=old_leader,
            receiver=new_leader,
            round=round_idx,
            payload=int(new_leader),
            seq=seq_alloc(old_leader),
        )
    ]
    for nid in notify_ids:
        if nid == old_leader:
            continue
        messages.append(
            Message(
                kind="LeaderHandoff",
                sender=old_leader,
                receiver=int(nid),
                round=round_idx,
                payload=int(new_leader),
                seq=seq_alloc(old_leader),
            )
        )
    return new_leader, messages

"""Deterministic topology construction and the round-synchronous driver.

The driver executes train -> intra -> cross -> distribute -> rotate with
barrier semantics: a phase's messages are all produced, then delivered in
(sender id, seq) order, which pins down floating-point summation order and
makes transcripts byte-reproducible.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from . import aggregation, protocol
from .aggregation import HcaConfig, LinearCombineWeights
from .errors import TaskfedError
from .params import BackboneDelta, ParamVector
from .protocol import Message, NodeState, TaskGroup
from .tasks import TaskSpec, batch_seed, loss, validation_loss

PHASES = ("train", "intra", "cross", "distribute", "rotate")

# Harness-level scheme tokens and the cross-merge strategy each one uses.
SCHEMES = ("no-agg", "intra-only", "plain-cross", "colnet-hca", "linear-combine")
_CROSS_STRATEGY = {
    "plain-cross": "plain-average",
    "colnet-hca": "hca",
    "linear-combine": "linear-combine",
}


@dataclass(frozen=True)
class Topology:
    """Undirected communication graph over node ids."""

    nodes: frozenset[int]
    edges: frozenset[tuple[int, int]]  # each edge stored as (low, high)


@dataclass
class SimClock:
    round: int = 0
    phase: str = "train"


def _edge(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


def build_topology(groups: Sequence[TaskGroup]) -> Topology:
    """Intra-group cliques plus a clique over the current leaders."""
    nodes: set[int] = set()
    edges: set[tuple[int, int]] = set()
    for g in groups:
        if len(g.member_ids) == 0:
            raise TaskfedError("empty-group", f"group {g.group_id} has no members")
        overlap = nodes & g.member_ids
        if overlap:
            raise TaskfedError("bad-config", f"nodes {sorted(overlap)} appear in multiple groups")
        nodes |= g.member_ids
        members = sorted(g.member_ids)
        for i, a in enumerate(members):
            for b in members[i + 1:]:
                edges.add(_edge(a, b))
    leaders = sorted(g.leader_id for g in groups)
    for i, a in enumerate(leaders):
        for b in leaders[i + 1:]:
            edges.add(_edge(a, b))
    return Topology(nodes=frozenset(nodes), edges=frozenset(edges))


def check_connected(topology: Topology) -> bool:
    """Breadth-first reachability from the smallest node id."""
    if len(topology.nodes) == 0:
        raise TaskfedError("bad-config", "topology has no nodes")
    adj: dict[int, list[int]] = {n: [] for n in topology.nodes}
    for a, b in topology.edges:
        adj[a].append(b)
        adj[b].append(a)
    start = min(topology.nodes)
    seen = {start}
    frontier = [start]
    while frontier:
        nxt = []
        for n in frontier:
            for m in adj[n]:
                if m not in seen:
                    seen.add(m)
                    nxt.append(m)
        frontier = nxt
    return len(seen) == len(topology.nodes)


def _payload_hash(payload: ParamVector | BackboneDelta | int) -> str:
    h = hashlib.sha256()
    if isinstance(payload, ParamVector):
        h.update(b"vec")
        h.update(payload.values.tobytes())
    elif isinstance(payload, BackboneDelta):
        h.update(b"delta")
        h.update(payload.delta.values.tobytes())
        h.update(str(payload.origin_group).encode())
        h.update(str(payload.round).encode())
    else:
        h.update(b"id")
        h.update(str(int(payload)).encode())
    return h.hexdigest()


class Federation:
    """Round-synchronous simulation of all nodes under one scheme."""

    def __init__(
        self,
        groups: Sequence[TaskGroup],
        nodes: Mapping[int, NodeState],
        tasks: Mapping[int, TaskSpec],
        *,
        scheme: str,
        local_epochs: int,
        seed: int,
        hca_cfg: HcaConfig | None = None,
        alpha: LinearCombineWeights | None = None,
        phi_fn: Callable[[Mapping[int, NodeState]], float] | None = None,
    ):
        if scheme not in SCHEMES:
            raise TaskfedError("bad-scheme", f"unknown scheme {scheme!r}")
        if local_epochs < 1:
            raise TaskfedError("bad-config", f"local_epochs must be >= 1, got {local_epochs}")
        if set(nodes) != set(tasks):
            raise TaskfedError("bad-config", "nodes and tasks must cover the same ids")
        member_union = set()
        for g in groups:
            member_union |= g.member_ids
        if member_union != set(nodes):
            raise TaskfedError("bad-config", "groups must partition the node ids")
        self.groups = sorted(groups, key=lambda g: g.group_id)
        self.nodes = dict(nodes)
        self.tasks = dict(tasks)
        self.scheme = scheme
        self.local_epochs = local_epochs
        self.seed = int(seed)
        self.hca_cfg = hca_cfg
        self.alpha = alpha
        self.phi_fn = phi_fn
        self.clock = SimClock()
        self.topology = build_topology(self.groups)
        if not check_connected(self.topology):
            raise TaskfedError("bad-config", "topology is not connected")
        self._seq: dict[int, int] = {}
        self.transcript: list[dict] = []
        self.message_log: list[Message] = []
        self.metrics: list["MetricsRecord"] = []
        self.violations: list[str] = []
        self._rotation_rngs = {
            g.group_id: np.random.default_rng(self.seed ^ g.group_id) for g in self.groups
        }
        self._group_of = {}
        for g in self.groups:
            for m in g.member_ids:
                self._group_of[m] = g

    # -- message plumbing ---------------------------------------------------

    def _alloc_seq(self, sender: int) -> int:
        n = self._seq.get(sender, 0)
        self._seq[sender] = n + 1
        return n

    def _record(self, messages: Sequence[Message]) -> list[Message]:
        """Log messages in (sender, seq) delivery order and return that order."""
        ordered = sorted(messages, key=lambda m: (m.sender, m.seq))
        for m in ordered:
            self.message_log.append(m)
            self.transcript.append(
                {
                    "round": m.round,
                    "kind": m.kind,
                    "sender": m.sender,
                    "receiver": m.receiver,
                    "payload_hash": _payload_hash(m.payload),
                }
            )
        return ordered

    def transcript_lines(self) -> list[str]:
        return [json.dumps(rec, sort_keys=True, separators=(",", ":")) for rec in self.transcript]

    def transcript_sha256(self) -> str:
        h = hashlib.sha256()
        for line in self.transcript_lines():
            h.update(line.encode())
            h.update(b"\n")
        return h.hexdigest()

    # -- round execution ----------------------------------------------------

    def run_round(self) -> list["MetricsRecord"]:
        from .analysis import MetricsRecord

        self.clock.round += 1
        rnd = self.clock.round
        cross_strategy = _CROSS_STRATEGY.get(self.scheme)

        # train
        self.clock.phase = "train"
        for nid in sorted(self.nodes):
            node = self.nodes[nid]
            node.round_start_backbone = node.params.backbone
            seeds = [batch_seed(self.seed, nid, rnd, e) for e in range(self.local_epochs)]
            protocol.run_local_training(node, self.tasks[nid], self.local_epochs, seeds)

        # intra
        self.clock.phase = "intra"
        if self.scheme != "no-agg":
            shares: list[Message] = []
            for nid in sorted(self.nodes):
                node = self.nodes[nid]
                group = self._group_of[nid]
                for peer in sorted(group.member_ids - {nid}):
                    shares.append(
                        Message(
                            kind="BackboneShare",
                            sender=nid,
                            receiver=peer,
                            round=rnd,
                            payload=node.params.backbone,
                            seq=self._alloc_seq(nid),
                        )
                    )
            inbox: dict[int, dict[int, ParamVector]] = {nid: {} for nid in self.nodes}
            for m in self._record(shares):
                inbox[m.receiver][m.sender] = m.payload
            for nid in sorted(self.nodes):
                protocol.intra_round(self.nodes[nid], inbox[nid], self._group_of[nid])

        # cross
        self.clock.phase = "cross"
        distribute_queue: list[Message] = []
        if cross_strategy is not None:
            own_deltas: dict[int, BackboneDelta] = {}
            delta_msgs: list[Message] = []
            leaders = {g.group_id: self.nodes[g.leader_id] for g in self.groups}
            for g in self.groups:
                leader = leaders[g.group_id]
                own_deltas[g.group_id] = aggregation.compute_round_delta(
                    leader.params.backbone,
                    leader.round_start_backbone,
                    origin_group=g.group_id,
                    round_idx=rnd,
                )
            for g in self.groups:
                leader = leaders[g.group_id]
                for other in self.groups:
                    if other.group_id == g.group_id:
                        continue
                    delta_msgs.append(
                        Message(
                            kind="DeltaShare",
                            sender=leader.node_id,
                            receiver=other.leader_id,
                            round=rnd,
                            payload=own_deltas[g.group_id],
                            seq=self._alloc_seq(leader.node_id),
                        )
                    )
            inboxes: dict[int, list[BackboneDelta]] = {g.group_id: [] for g in self.groups}
            for m in self._record(delta_msgs):
                inboxes[self._group_of[m.receiver].group_id].append(m.payload)
            expected = [g.group_id for g in self.groups]
            for g in self.groups:
                leader = leaders[g.group_id]
                _, member_msgs = protocol.leader_round(
                    leader,
                    own_deltas[g.group_id],
                    inboxes[g.group_id],
                    cross_strategy,
                    group=g,
                    hca_cfg=self.hca_cfg,
                    alpha=self.alpha,
                    expected_groups=expected,
                    seq_alloc=self._alloc_seq,
                )
                distribute_queue.extend(member_msgs)

        # distribute
        self.clock.phase = "distribute"
        if cross_strategy is not None:
            for m in self._record(distribute_queue):
                protocol.follower_apply(
                    self.nodes[m.receiver], m, group=self._group_of[m.receiver], current_round=rnd
                )

        # rotate
        self.clock.phase = "rotate"
        if cross_strategy is not None:
            old_leaders = {g.group_id: g.leader_id for g in self.groups}
            handoffs: list[Message] = []
            for g in self.groups:
                notify = [
                    old_leaders[h.group_id] for h in self.groups if h.group_id != g.group_id
                ]
                new_leader, msgs = protocol.rotate_leader(
                    g,
                    self._rotation_rngs[g.group_id],
                    notify_ids=notify,
                    seq_alloc=self._alloc_seq,
                    round_idx=rnd,
                )
                handoffs.extend(msgs)
                for m in g.member_ids:
                    self.nodes[m].is_leader = m == new_leader
            self._record(handoffs)
            self.topology = build_topology(self.groups)

        self._check_round_invariants()
        phi = self.phi_fn(self.nodes) if self.phi_fn is not None else None
        records = []
        for nid in sorted(self.nodes):
            node = self.nodes[nid]
            records.append(
                MetricsRecord(
                    round=rnd,
                    node_id=nid,
                    group_id=node.group_id,
                    scheme=self.scheme,
                    train_loss=loss(self.tasks[nid], node.params),
                    val_loss=validation_loss(self.tasks[nid], node.params),
                    phi=phi,
                )
            )
        self.metrics.extend(records)
        return records

    def run(self, rounds: int) -> list["MetricsRecord"]:
        if rounds < 1:
            raise TaskfedError("bad-config", f"rounds must be >= 1, got {rounds}")
        for _ in range(rounds):
            self.run_round()
        return self.metrics

    # -- invariants ----------------------------------------------------------

    def _check_round_invariants(self) -> None:
        rnd = self.clock.round
        for g in self.groups:
            if g.leader_id not in g.member_ids:
                self.violations.append(f"round {rnd}: group {g.group_id} leader not a member")
            flags = [m for m in g.member_ids if self.nodes[m].is_leader]
            if sorted(flags) != [g.leader_id]:
                self.violations.append(
                    f"round {rnd}: group {g.group_id} leader flags {sorted(flags)} "
                    f"!= [{g.leader_id}]"
                )
            if self.scheme != "no-agg":
                members = sorted(g.member_ids)
                ref = self.nodes[members[0]].params.backbone
                for m in members[1:]:
                    if self.nodes[m].params.backbone != ref:
                        self.violations.append(
                            f"round {rnd}: group {g.group_id} backbone consensus broken at node {m}"
                        )
                        break

"""Dense float64 parameter vectors and the shared/private split.

A node's model is a flat vector split at a single boundary index: the first
``split_spec`` coordinates form the backbone (shared and averaged across
nodes), the remainder the task head (private, never transmitted).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .errors import TaskfedError


class ParamVector:
    """Immutable 1-D float64 vector; NaN/Inf are rejected at construction."""

    __slots__ = ("_values",)

    def __init__(self, values):
        arr = np.array(values, dtype=np.float64, copy=True)
        if arr.ndim != 1:
            raise TaskfedError("bad-shape", f"expected 1-D values, got shape {arr.shape}")
        if arr.size and not np.all(np.isfinite(arr)):
            raise TaskfedError("non-finite", "NaN/Inf entries cannot be stored")
        arr.setflags(write=False)
        self._values = arr

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "ParamVector":
        # Internal fast path: take ownership of a fresh contiguous array.
        out = object.__new__(cls)
        if not np.all(np.isfinite(arr)):
            raise TaskfedError("non-finite", "operation produced NaN/Inf")
        arr.setflags(write=False)
        out._values = arr
        return out

    @property
    def values(self) -> np.ndarray:
        """Read-only view of the underlying array."""
        return self._values

    @property
    def dim(self) -> int:
        return self._values.shape[0]

    def tobytes(self) -> bytes:
        return self._values.tobytes()

    def __len__(self) -> int:
        return self.dim

    def __eq__(self, other) -> bool:
        if not isinstance(other, ParamVector):
            return NotImplemented
        return self._values.shape == other._values.shape and bool(
            np.all(self._values == other._values)
        )

    def __hash__(self):
        return hash(self._values.tobytes())

    def __repr__(self) -> str:
        return f"ParamVector({np.array2string(self._values, threshold=8)})"


def _require_same_dim(a: ParamVector, b: ParamVector) -> None:
    if a.dim != b.dim:
        raise TaskfedError("dim-mismatch", f"dims {a.dim} and {b.dim} differ")


def _stack(vectors: Sequence[ParamVector]) -> np.ndarray:
    if len(vectors) == 0:
        raise TaskfedError("empty-aggregate", "no vectors to aggregate")
    dim = vectors[0].dim
    for v in vectors[1:]:
        if v.dim != dim:
            raise TaskfedError("dim-mismatch", f"dims {dim} and {v.dim} differ")
    return np.ascontiguousarray(np.stack([v.values for v in vectors]))


def mean(vectors: Sequence[ParamVector]) -> ParamVector:
    """Element-wise arithmetic mean of equal-dimension vectors."""
    return ParamVector._wrap(kernels.mean_rows(_stack(vectors)))


def axpy(a: ParamVector, alpha: float, b: ParamVector) -> ParamVector:
    """a + alpha * b."""
    _require_same_dim(a, b)
    return ParamVector._wrap(kernels.axpy(float(alpha), b.values, a.values))


def add(a: ParamVector, b: ParamVector) -> ParamVector:
    return axpy(a, 1.0, b)


def sub(a: ParamVector, b: ParamVector) -> ParamVector:
    return axpy(a, -1.0, b)


def scale(alpha: float, a: ParamVector) -> ParamVector:
    return ParamVector._wrap(kernels.scale(float(alpha), a.values))


def norm(a: ParamVector) -> float:
    return kernels.nrm2(a.values)


def dot(a: ParamVector, b: ParamVector) -> float:
    _require_same_dim(a, b)
    return kernels.dot(a.values, b.values)


@dataclass(frozen=True)
class ModelParams:
    """A node's parameters: shared backbone plus private task head.

    ``split_spec`` is the boundary index; it must equal the backbone
    dimension and be identical across all nodes of a federation so backbones
    stay averageable.
    """

    backbone: ParamVector
    task_head: ParamVector
    split_spec: int

    def __post_init__(self):
        if self.split_spec != self.backbone.dim:
            raise TaskfedError(
                "split-mismatch",
                f"split_spec {self.split_spec} != backbone dim {self.backbone.dim}",
            )

    @property
    def total_dim(self) -> int:
        return self.backbone.dim + self.task_head.dim

    def as_flat(self) -> ParamVector:
        return ParamVector._wrap(
            np.concatenate([self.backbone.values, self.task_head.values])
        )

    @classmethod
    def from_flat(cls, flat: ParamVector, split_spec: int) -> "ModelParams":
        if not 0 <= split_spec <= flat.dim:
            raise TaskfedError(
                "split-mismatch", f"split_spec {split_spec} outside [0, {flat.dim}]"
            )
        vals = flat.values
        return cls(
            backbone=ParamVector(vals[:split_spec]),
            task_head=ParamVector(vals[split_spec:]),
            split_spec=split_spec,
        )

    def with_backbone(self, backbone: ParamVector) -> "ModelParams":
        """The same head under a replacement backbone (dims must agree)."""
        if backbone.dim != self.split_spec:
            raise TaskfedError(
                "split-mismatch",
                f"replacement backbone dim {backbone.dim} != split_spec {self.split_spec}",
            )
        return ModelParams(backbone, self.task_head, self.split_spec)


def split(params: ModelParams) -> tuple[ParamVector, ParamVector]:
    return params.backbone, params.task_head


def join(backbone: ParamVector, task_head: ParamVector, split_spec: int | None = None) -> ModelParams:
    """Inverse of :func:`split`; round-trips bit-exactly."""
    if split_spec is None:
        split_spec = backbone.dim
    return ModelParams(backbone, task_head, split_spec)


@dataclass(frozen=True)
class BackboneDelta:
    """Change of a group's backbone over one round, exchanged by leaders."""

    delta: ParamVector
    origin_group: int
    round: int

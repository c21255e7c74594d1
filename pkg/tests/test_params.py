"""Tests for parameter-vector containers and arithmetic."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import taskfed.params as params
from taskfed.errors import TaskfedError
from taskfed.params import BackboneDelta, ModelParams, ParamVector

from oracles import pv, scalar_dot, scalar_mean, scalar_norm


class TestParamVector:
    def test_copies_and_freezes_input(self):
        raw = np.array([1.0, 2.0, 3.0])
        vec = ParamVector(raw)
        raw[0] = 99.0
        assert vec.values[0] == 1.0
        with pytest.raises(ValueError):
            vec.values[0] = 5.0

    def test_casts_to_float64(self):
        vec = ParamVector(np.array([1, 2, 3], dtype=np.int32))
        assert vec.values.dtype == np.float64

    def test_rejects_non_finite(self):
        with pytest.raises(TaskfedError) as err:
            ParamVector(np.array([1.0, np.nan]))
        assert err.value.code == "non-finite"
        with pytest.raises(TaskfedError) as err:
            ParamVector(np.array([np.inf, 0.0]))
        assert err.value.code == "non-finite"

    def test_rejects_non_1d(self):
        with pytest.raises(TaskfedError) as err:
            ParamVector(np.zeros((2, 2)))
        assert err.value.code == "bad-shape"

    def test_equality_and_hash(self):
        a = pv([1.0, 2.0])
        b = pv([1.0, 2.0])
        c = pv([1.0, 2.5])
        assert a == b
        assert hash(a) == hash(b)
        assert a != c

    def test_tobytes_roundtrip(self):
        a = pv([0.1, -2.5, 3.75])
        back = np.frombuffer(a.tobytes(), dtype=np.float64)
        assert np.array_equal(back, a.values)


class TestArithmetic:
    def test_mean_matches_scalar_loop(self, rng):
        rows = [rng.standard_normal(7) for _ in range(5)]
        got = params.mean([ParamVector(r) for r in rows])
        expected = scalar_mean(rows)
        np.testing.assert_allclose(got.values, expected, rtol=1e-12)

    def test_mean_of_single_vector_is_identity(self, rng):
        v = ParamVector(rng.standard_normal(4))
        assert params.mean([v]) == v

    def test_mean_empty_raises(self):
        with pytest.raises(TaskfedError) as err:
            params.mean([])
        assert err.value.code == "empty-aggregate"

    def test_mean_dim_mismatch(self):
        with pytest.raises(TaskfedError) as err:
            params.mean([pv([1.0, 2.0]), pv([1.0])])
        assert err.value.code == "dim-mismatch"

    def test_add_sub_scale_axpy(self, rng):
        a = rng.standard_normal(6)
        b = rng.standard_normal(6)
        va, vb = ParamVector(a), ParamVector(b)
        np.testing.assert_allclose(params.add(va, vb).values, a + b)
        np.testing.assert_allclose(params.sub(va, vb).values, a - b)
        np.testing.assert_allclose(params.scale(2.5, va).values, 2.5 * a)
        np.testing.assert_allclose(
            params.axpy(vb, 0.3, va).values, b + 0.3 * a, rtol=1e-14
        )

    def test_dot_and_norm_match_scalar_loop(self, rng):
        a = rng.standard_normal(9)
        b = rng.standard_normal(9)
        assert params.dot(ParamVector(a), ParamVector(b)) == pytest.approx(
            scalar_dot(a, b), rel=1e-13
        )
        assert params.norm(ParamVector(a)) == pytest.approx(
            scalar_norm(a), rel=1e-13
        )

    def test_binary_op_dim_mismatch(self):
        with pytest.raises(TaskfedError) as err:
            params.add(pv([1.0]), pv([1.0, 2.0]))
        assert err.value.code == "dim-mismatch"

    @given(
        st.lists(
            st.lists(st.floats(-1e6, 1e6), min_size=3, max_size=3),
            min_size=1,
            max_size=6,
        )
    )
    @settings(max_examples=50, deadline=None)
    def test_mean_is_permutation_invariant(self, rows):
        vecs = [pv(r) for r in rows]
        forward = params.mean(vecs)
        backward = params.mean(list(reversed(vecs)))
        np.testing.assert_allclose(
            forward.values, backward.values, rtol=1e-12, atol=1e-12
        )

    @given(
        st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=4),
        st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=4),
    )
    @settings(max_examples=100, deadline=None)
    def test_triangle_inequality(self, a, b):
        va, vb = pv(a), pv(b)
        lhs = params.norm(params.add(va, vb))
        rhs = params.norm(va) + params.norm(vb)
        assert lhs <= rhs + 1e-9


class TestModelParams:
    def test_split_spec_must_match_backbone_dim(self):
        with pytest.raises(TaskfedError) as err:
            ModelParams(
                backbone=pv([1.0, 2.0]),
                task_head=pv([3.0]),
                split_spec=3,
            )
        assert err.value.code == "split-mismatch"

    def test_flat_roundtrip(self, rng):
        backbone = ParamVector(rng.standard_normal(5))
        head = ParamVector(rng.standard_normal(3))
        mp = ModelParams(backbone=backbone, task_head=head, split_spec=5)
        flat = mp.as_flat()
        assert flat.dim == 8
        back = ModelParams.from_flat(flat, split_spec=5)
        assert back.backbone == backbone
        assert back.task_head == head

    def test_from_flat_bad_split(self):
        with pytest.raises(TaskfedError) as err:
            ModelParams.from_flat(pv([1.0, 2.0]), split_spec=3)
        assert err.value.code == "split-mismatch"
        with pytest.raises(TaskfedError) as err:
            ModelParams.from_flat(pv([1.0, 2.0]), split_spec=-1)
        assert err.value.code == "split-mismatch"

    def test_with_backbone_replaces_only_backbone(self, rng):
        mp = ModelParams(
            backbone=pv([1.0, 2.0]), task_head=pv([3.0]), split_spec=2
        )
        new = mp.with_backbone(pv([9.0, 8.0]))
        assert new.backbone == pv([9.0, 8.0])
        assert new.task_head == mp.task_head
        assert new.split_spec == 2
        with pytest.raises(TaskfedError):
            mp.with_backbone(pv([1.0, 2.0, 3.0]))

    @given(
        st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=12),
        st.integers(min_value=1, max_value=11),
    )
    @settings(max_examples=100, deadline=None)
    def test_split_join_roundtrip(self, values, split):
        if split >= len(values):
            split = len(values) - 1
        flat = pv(values)
        mp = ModelParams.from_flat(flat, split_spec=split)
        backbone, head = params.split(mp)
        assert backbone.dim == split
        assert head.dim == len(values) - split
        rejoined = params.join(backbone, head)
        assert rejoined.as_flat() == flat
        assert rejoined.split_spec == split


class TestBackboneDelta:
    def test_fields_and_immutability(self):
        d = BackboneDelta(delta=pv([1.0]), origin_group=2, round=7)
        assert d.origin_group == 2
        assert d.round == 7
        with pytest.raises(AttributeError):
            d.origin_group = 3

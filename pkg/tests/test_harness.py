"""Tests for experiment configuration, scenario generation, and output files."""

from __future__ import annotations

import json

import numpy as np
import pytest

from taskfed.analysis import MetricsRecord
from taskfed.errors import TaskfedError
from taskfed.harness import (
    build_federation,
    config_from_dict,
    generate_scenario,
    initial_states,
    load_config,
    render_csv,
    run_experiment,
    with_overrides,
)

CSV_HEADER = "round,node_id,group_id,scheme,train_loss,val_loss,phi"


def base_dict(**overrides):
    raw = {
        "scenario": "label-het-synthetic",
        "groups": {"count": 2, "sizes": [2, 2]},
        "rounds": 3,
        "local_epochs": 2,
        "lr": {"quadratic": 0.05},
        "scheme": "colnet-hca",
        "split_spec": 4,
        "seed": 5,
        "out": "runs/test",
        "hca": {"c": 0.4},
        "scenario_params": {"head_dim": 2},
    }
    raw.update(overrides)
    return raw


def make_config(**overrides):
    return config_from_dict(base_dict(**overrides))


class TestConfigValidation:
    def test_happy_path(self):
        cfg = make_config()
        assert cfg.group_sizes == (2, 2)
        assert cfg.hca.c == 0.4
        assert cfg.scenario_params["head_dim"] == 2
        assert cfg.scenario_params["spread"] == 0.05  # default filled in

    def test_unknown_top_level_key(self):
        with pytest.raises(TaskfedError) as err:
            make_config(gamma=1.0)
        assert err.value.code == "bad-config"

    def test_unknown_scenario_param(self):
        with pytest.raises(TaskfedError) as err:
            make_config(scenario_params={"heads": 3})
        assert err.value.code == "bad-config"

    def test_group_count_must_match_sizes(self):
        with pytest.raises(TaskfedError) as err:
            make_config(groups={"count": 3, "sizes": [2, 2]})
        assert err.value.code == "bad-config"

    def test_groups_as_plain_list(self):
        cfg = make_config(groups=[3, 2])
        assert cfg.group_sizes == (3, 2)

    def test_hca_scheme_requires_hca_section(self):
        with pytest.raises(TaskfedError) as err:
            make_config(hca=None)
        assert err.value.code == "bad-config"

    def test_hca_section_requires_c(self):
        with pytest.raises(TaskfedError) as err:
            make_config(hca={"dual_iters": 100})
        assert err.value.code == "bad-config"

    def test_linear_combine_requires_square_alpha(self):
        with pytest.raises(TaskfedError):
            make_config(scheme="linear-combine", alpha=None)
        with pytest.raises(TaskfedError):
            make_config(scheme="linear-combine", alpha=[[0.0]])
        cfg = make_config(scheme="linear-combine", alpha=[[0.0, 0.5], [0.5, 0.0]])
        assert cfg.alpha.shape == (2, 2)

    def test_lr_validation(self):
        with pytest.raises(TaskfedError):
            make_config(lr={"tree": 0.1})
        with pytest.raises(TaskfedError):
            make_config(lr={"quadratic": -0.5})

    def test_bad_counts_rejected(self):
        with pytest.raises(TaskfedError):
            make_config(rounds=0)
        with pytest.raises(TaskfedError):
            make_config(local_epochs=0)
        with pytest.raises(TaskfedError):
            make_config(groups=[2, 0])
        with pytest.raises(TaskfedError):
            make_config(split_spec=0)

    def test_unknown_scheme_and_scenario(self):
        with pytest.raises(TaskfedError):
            make_config(scheme="federated")
        with pytest.raises(TaskfedError):
            make_config(scenario="real-data")


class TestLoadConfig:
    def test_loads_yaml(self, tmp_path):
        path = tmp_path / "cfg.yaml"
        path.write_text(
            "scenario: label-het-synthetic\n"
            "groups: {count: 2, sizes: [2, 2]}\n"
            "rounds: 2\n"
            "local_epochs: 1\n"
            "lr: {quadratic: 0.05}\n"
            "scheme: plain-cross\n"
            "split_spec: 4\n"
            "seed: 1\n"
            "out: runs/x\n"
        )
        cfg = load_config(str(path))
        assert cfg.scheme == "plain-cross"
        assert cfg.rounds == 2

    def test_missing_file(self, tmp_path):
        with pytest.raises(TaskfedError) as err:
            load_config(str(tmp_path / "nope.yaml"))
        assert err.value.code == "bad-config"

    def test_invalid_yaml(self, tmp_path):
        path = tmp_path / "broken.yaml"
        path.write_text("scenario: [unclosed\n")
        with pytest.raises(TaskfedError) as err:
            load_config(str(path))
        assert err.value.code == "bad-config"

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.yaml"
        path.write_text("")
        with pytest.raises(TaskfedError) as err:
            load_config(str(path))
        assert err.value.code == "bad-config"


class TestOverrides:
    def test_overrides_replace_only_requested_fields(self):
        cfg = make_config()
        out = with_overrides(cfg, scheme="plain-cross", seed=99, out="elsewhere")
        assert out.scheme == "plain-cross"
        assert out.seed == 99
        assert out.out == "elsewhere"
        assert out.group_sizes == cfg.group_sizes
        assert out.hca == cfg.hca
        unchanged = with_overrides(cfg)
        assert unchanged == cfg


class TestScenarioGeneration:
    def test_generation_is_seed_deterministic(self):
        a_groups, a_tasks, a_topo = generate_scenario(make_config())
        b_groups, b_tasks, b_topo = generate_scenario(make_config())
        assert a_topo == b_topo
        for nid in a_tasks:
            assert np.array_equal(a_tasks[nid].payload.matrix, b_tasks[nid].payload.matrix)
            assert np.array_equal(a_tasks[nid].payload.target, b_tasks[nid].payload.target)

    def test_different_seeds_differ(self):
        _, a_tasks, _ = generate_scenario(make_config(seed=1))
        _, b_tasks, _ = generate_scenario(make_config(seed=2))
        assert not np.array_equal(a_tasks[0].payload.target, b_tasks[0].payload.target)

    def test_group_members_share_backbone_curvature(self):
        cfg = make_config()
        _, tasks, _ = generate_scenario(cfg)
        split = cfg.split_spec
        block0 = tasks[0].payload.matrix[:split, :split]
        for nid in (1, 2, 3):
            np.testing.assert_array_equal(
                tasks[nid].payload.matrix[:split, :split], block0
            )

    def test_curvature_scale_separates_groups(self):
        cfg = make_config(scenario_params={"head_dim": 2, "curvature_scale": [1.0, 0.25]})
        _, tasks, _ = generate_scenario(cfg)
        split = cfg.split_spec
        np.testing.assert_allclose(
            tasks[2].payload.matrix[:split, :split],
            0.25 * tasks[0].payload.matrix[:split, :split],
            rtol=1e-15,
        )

    def test_zero_spread_gives_identical_targets_within_group(self):
        cfg = make_config(scenario_params={"head_dim": 2, "spread": 0.0})
        _, tasks, _ = generate_scenario(cfg)
        np.testing.assert_array_equal(tasks[0].payload.target, tasks[1].payload.target)
        np.testing.assert_array_equal(tasks[2].payload.target, tasks[3].payload.target)

    def test_group_gap_shifts_backbone_targets(self):
        near = make_config(scenario_params={"head_dim": 2, "spread": 0.0, "group_gap": 0.0})
        far = make_config(scenario_params={"head_dim": 2, "spread": 0.0, "group_gap": 3.0})
        split = near.split_spec
        _, near_tasks, _ = generate_scenario(near)
        _, far_tasks, _ = generate_scenario(far)
        near_dist = np.linalg.norm(
            near_tasks[0].payload.target[:split] - near_tasks[2].payload.target[:split]
        )
        far_dist = np.linalg.norm(
            far_tasks[0].payload.target[:split] - far_tasks[2].payload.target[:split]
        )
        assert near_dist == pytest.approx(0.0, abs=1e-12)
        assert far_dist == pytest.approx(3.0, rel=1e-12)

    def test_task_het_mixes_kinds_by_group(self):
        cfg = make_config(
            scenario="task-het-synthetic",
            scheme="plain-cross",
            hca=None,
            lr={"quadratic": 0.05, "logistic": 0.5},
        )
        groups, tasks, _ = generate_scenario(cfg)
        assert all(tasks[n].kind == "quadratic" for n in (0, 1))
        assert all(tasks[n].kind == "logistic" for n in (2, 3))
        assert groups[0].task_template == "quadratic"
        assert groups[1].task_template == "logistic"

    def test_missing_lr_for_generated_kind(self):
        cfg = make_config(
            scenario="task-het-synthetic",
            scheme="plain-cross",
            hca=None,
            lr={"quadratic": 0.05},
        )
        with pytest.raises(TaskfedError) as err:
            generate_scenario(cfg)
        assert err.value.code == "bad-config"

    def test_custom_scenario_uses_given_tasks(self):
        nodes = [
            {"group": 0, "target": [1.0, 0.0, 2.0], "eigs": [1.0, 1.0, 2.0]},
            {"group": 0, "target": [3.0, 0.0, 1.0], "eigs": [1.0, 1.0, 2.0]},
        ]
        cfg = make_config(
            scenario="custom",
            groups=[2],
            split_spec=2,
            scheme="intra-only",
            hca=None,
            scenario_params={"nodes": nodes},
        )
        _, tasks, _ = generate_scenario(cfg)
        np.testing.assert_array_equal(tasks[0].payload.target, [1.0, 0.0, 2.0])
        np.testing.assert_array_equal(tasks[1].payload.matrix, np.diag([1.0, 1.0, 2.0]))

    def test_custom_scenario_node_count_checked(self):
        cfg = make_config(
            scenario="custom",
            groups=[2],
            split_spec=2,
            scheme="intra-only",
            hca=None,
            scenario_params={"nodes": [{"group": 0, "target": [1.0], "eigs": [1.0]}]},
        )
        with pytest.raises(TaskfedError) as err:
            generate_scenario(cfg)
        assert err.value.code == "bad-config"


class TestInitialStates:
    def test_states_are_seed_deterministic(self):
        cfg = make_config()
        groups, tasks, _ = generate_scenario(cfg)
        a = initial_states(cfg, groups, tasks)
        b = initial_states(cfg, groups, tasks)
        for nid in a:
            assert a[nid].params.as_flat() == b[nid].params.as_flat()

    def test_zero_noise_starts_at_origin(self):
        cfg = make_config(scenario_params={"head_dim": 2, "init_noise": 0.0})
        groups, tasks, _ = generate_scenario(cfg)
        states = initial_states(cfg, groups, tasks)
        for s in states.values():
            assert float(np.abs(s.params.as_flat().values).max()) == 0.0

    def test_leader_flags_follow_layout(self):
        cfg = make_config(groups=[3, 2])
        groups, tasks, _ = generate_scenario(cfg)
        states = initial_states(cfg, groups, tasks)
        leaders = [nid for nid, s in states.items() if s.is_leader]
        assert leaders == [0, 3]


class TestCsvRendering:
    def test_header_is_exact(self):
        assert render_csv([]).splitlines()[0] == CSV_HEADER

    def test_rows_sorted_and_roundtrippable(self):
        records = [
            MetricsRecord(2, 0, 0, "no-agg", 0.125, 0.25, None),
            MetricsRecord(1, 1, 0, "no-agg", 1.0 / 3.0, 0.5, 7.25),
            MetricsRecord(1, 0, 0, "no-agg", 0.1, 0.2, 7.25),
        ]
        lines = render_csv(records).splitlines()
        assert lines[1].startswith("1,0,") and lines[2].startswith("1,1,")
        assert lines[3].startswith("2,0,")
        cells = lines[2].split(",")
        assert float(cells[4]) == 1.0 / 3.0  # repr round-trips exactly
        assert cells[6] == "7.25"
        assert lines[3].split(",")[6] == ""  # absent gap stays empty

    def test_float_formatting_is_shortest_repr(self):
        records = [MetricsRecord(1, 0, 0, "no-agg", 0.1, 0.30000000000000004, 1e-17)]
        line = render_csv(records).splitlines()[1]
        assert line == "1,0,0,no-agg,0.1,0.30000000000000004,1e-17"


class TestRunExperiment:
    def test_all_quadratic_runs_carry_phi(self, tmp_path):
        cfg = make_config(out=str(tmp_path / "runs"))
        result = run_experiment(cfg, write=False)
        assert result.summary["phi_initial"] is not None
        assert result.summary["phi_initial"] > 0.0
        assert all(m.phi is not None for m in result.metrics)

    def test_output_files_written(self, tmp_path):
        cfg = make_config(out=str(tmp_path / "runs"))
        result = run_experiment(cfg)
        csv_text = open(result.csv_path, encoding="utf-8").read()
        lines = csv_text.splitlines()
        assert lines[0] == CSV_HEADER
        assert len(lines) == 1 + cfg.rounds * sum(cfg.group_sizes)
        summary = json.load(open(result.summary_path, encoding="utf-8"))
        assert summary["scheme"] == "colnet-hca"
        assert summary["invariant_violations"] == []
        assert {"L", "mu", "sigma_sq", "grad_bound"} <= set(summary["analysis_constants"])
        with open(result.transcript_path, encoding="utf-8") as fh:
            for line in fh:
                rec = json.loads(line)
                assert set(rec) == {"round", "kind", "sender", "receiver", "payload_hash"}

    def test_isolated_groups_match_no_agg(self):
        # With singleton groups, averaging over the single member is the
        # identity, so intra-only must equal the no-aggregation trajectory.
        base = dict(
            groups=[1, 1, 1],
            scheme="intra-only",
            hca=None,
            scenario_params={"head_dim": 2},
        )
        intra = run_experiment(make_config(**base), write=False)
        base["scheme"] = "no-agg"
        noagg = run_experiment(make_config(**base), write=False)
        for a, b in zip(intra.metrics, noagg.metrics, strict=True):
            assert a.train_loss == b.train_loss
            assert a.val_loss == b.val_loss

    def test_task_het_run_reports_classification(self):
        cfg = make_config(
            scenario="task-het-synthetic",
            scheme="plain-cross",
            hca=None,
            lr={"quadratic": 0.05, "logistic": 0.5},
            rounds=2,
        )
        result = run_experiment(cfg, write=False)
        assert result.summary["phi_initial"] is None
        cls = result.summary["classification"]["1"]
        # Micro-averaging over exhaustive classes makes precision, recall,
        # and f1 coincide (every error is one FP and one FN).
        assert cls["precision"] == pytest.approx(cls["recall"], abs=1e-12)
        assert cls["f1"] == pytest.approx(cls["precision"], abs=1e-12)
        assert 0.0 <= cls["f1"] <= 1.0

    def test_summary_contraction_fields(self):
        cfg = make_config(rounds=12)
        result = run_experiment(cfg, write=False)
        assert result.summary["gamma_hat"] is not None
        assert 0.0 < result.summary["gamma_hat"] < 1.0
        assert result.summary["phi_final"] < result.summary["phi_initial"]


class TestBuildFederation:
    def test_initial_gap_matches_manual_evaluation(self):
        cfg = make_config()
        fed, phi_initial = build_federation(cfg)
        assert phi_initial is not None
        # Re-derive the gap from scratch through the public pieces.
        from taskfed.tasks import global_optimum, loss

        groups, tasks, _ = generate_scenario(cfg)
        states = initial_states(cfg, groups, tasks)
        node_ids = sorted(tasks)
        _, opt_value = global_optimum(
            [tasks[n] for n in node_ids],
            cfg.split_spec,
            [states[n].group_id for n in node_ids],
        )
        manual = sum(loss(tasks[n], states[n].params) for n in node_ids) - opt_value
        assert phi_initial == pytest.approx(manual, rel=1e-12)

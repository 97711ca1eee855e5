"""Experiment orchestration: sweeps, significance plumbing, and persistence.

Configs here are deliberately tiny (hundreds of samples, a few seeds) so the
whole module stays fast; the full-scale behavior lives in the acceptance
tests.
"""

import json

import numpy as np
import pytest

from sepbias.datagen import population_for_targets, sample_population, save_dataset_csv
from sepbias.errors import (
    DomainError,
    IntegrityError,
    SchemaError,
    UnsupportedArchitectureError,
)
from sepbias.experiments import (
    DEFAULT_ABLATION_RATES,
    DEFAULT_SEPARABILITY_TARGETS,
    EXPERIMENT_KINDS,
    SCHEMA_VERSION,
    ExperimentConfig,
    load_run,
    persist_run,
    plotdata_tables,
    run_degradation_experiment,
    run_noise_ablation,
    run_separability_audit,
    run_split_experiment,
)
from sepbias.learner import TrainConfig


def tiny_config(**overrides):
    base = dict(
        separability_targets=(0.6, 0.9),
        noise_rates=(0.25,),
        n_train=400,
        n_test=300,
        n_seeds=3,
        arch="linear",
        train_config=TrainConfig(
            learning_rate=0.3, max_epochs=40, patience=5, val_fraction=0.2,
            batch_size="full", hidden_width=4, seed=0,
        ),
        master_seed=7,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def results_equal(a, b):
    """Structural comparison of two ExperimentResults."""
    if (a.kind, a.config) != (b.kind, b.config):
        return False
    if len(a.records) != len(b.records):
        return False
    for ra, rb in zip(a.records, b.records):
        if (ra.run_id, ra.target, ra.seed_index, ra.arm, ra.rho) != (
            rb.run_id, rb.target, rb.seed_index, rb.arm, rb.rho
        ):
            return False
        if ra.report != rb.report or ra.extras != rb.extras:
            return False
    if [(cid, t.statistic, t.p_value, t.adjusted_p, t.method, t.significant) for cid, t in a.tests] != [
        (cid, t.statistic, t.p_value, t.adjusted_p, t.method, t.significant) for cid, t in b.tests
    ]:
        return False
    return True


class TestExperimentConfig:
    def test_defaults(self):
        cfg = ExperimentConfig()
        assert cfg.separability_targets == DEFAULT_SEPARABILITY_TARGETS
        assert cfg.n_seeds == 10
        assert cfg.target_group == 1

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"separability_targets": ()},
            {"separability_targets": (1.0,)},
            {"separability_targets": (0.4,)},
            {"noise_rates": ()},
            {"noise_rates": (1.5,)},
            {"n_seeds": 0},
            {"n_train": -1},
            {"arch": "cnn"},
            {"target_group": 2},
            {"alpha": 0.0},
            {"dim": 1},
            {"jobs": 0},
        ],
    )
    def test_invalid_rejected(self, kwargs):
        with pytest.raises(DomainError):
            tiny_config(**kwargs)

    def test_partial_json_keeps_defaults(self):
        cfg = ExperimentConfig.from_json_dict({"n_seeds": 4, "arch": "linear"})
        assert cfg.n_seeds == 4
        assert cfg.arch == "linear"
        assert cfg.separability_targets == DEFAULT_SEPARABILITY_TARGETS

    def test_unknown_key_rejected(self):
        with pytest.raises(SchemaError, match="mystery"):
            ExperimentConfig.from_json_dict({"mystery": 1})

    def test_json_round_trip(self):
        cfg = tiny_config()
        assert ExperimentConfig.from_json_dict(cfg.to_json_dict()) == cfg

    def test_fingerprint_ignores_execution_details(self):
        cfg = tiny_config()
        assert cfg.fingerprint() == tiny_config(output_dir="/tmp/x", jobs=4).fingerprint()
        assert cfg.fingerprint() != tiny_config(master_seed=8).fingerprint()

    def test_default_ablation_rates_exported(self):
        assert 0.25 in DEFAULT_ABLATION_RATES
        assert list(DEFAULT_ABLATION_RATES) == sorted(DEFAULT_ABLATION_RATES)


class TestSeparabilityAudit:
    def test_structure_and_calibration(self):
        cfg = tiny_config()
        result = run_separability_audit(cfg)
        assert result.kind == "audit"
        assert len(result.records) == 2 * 3  # targets x seeds
        assert {r.run_id for r in result.records} == {
            f"audit:t={repr(t)}:s={s}:audit" for t in (0.6, 0.9) for s in range(3)
        }
        table = result.summary["table"]
        assert [row["auc_mean"] for row in table] == sorted(row["auc_mean"] for row in table)
        by_target = {row["target"]: row for row in table}
        # Loose at this sample size; the tight check is in acceptance.
        assert abs(by_target[0.9]["auc_mean"] - 0.9) < 0.1
        assert abs(by_target[0.6]["auc_mean"] - 0.6) < 0.1

    def test_deterministic(self):
        a = run_separability_audit(tiny_config())
        b = run_separability_audit(tiny_config())
        assert results_equal(a, b)
        assert a.summary == b.summary or all(
            ra.report == rb.report for ra, rb in zip(a.records, b.records)
        )


@pytest.fixture(scope="module")
def deg_result():
    return run_degradation_experiment(tiny_config())


class TestDegradation:

    def test_record_layout(self, deg_result):
        assert deg_result.kind == "degradation"
        assert len(deg_result.records) == 2 * 3 * 2  # targets x seeds x arms
        arms = {r.arm for r in deg_result.records}
        assert arms == {"clean", "biased"}
        for r in deg_result.records:
            assert r.rho == (0.25 if r.arm == "biased" else 0.0)

    def test_comparison_family(self, deg_result):
        # Per target: accuracy and tpr over slices 0, 1, overall, one-sided,
        # plus two between-group two-sided tests.
        assert len(deg_result.tests) == 2 * (6 + 2)
        for cid, test in deg_result.tests:
            assert test.adjusted_p is not None
            assert test.adjusted_p >= test.p_value - 1e-15
            assert test.significant == (test.adjusted_p < deg_result.config.alpha)
        one_sided = [cid for cid, _ in deg_result.tests if cid.endswith("biased_lt_clean")]
        assert len(one_sided) == 12

    def test_summary_shape(self, deg_result):
        per_target = deg_result.summary["per_target"]
        assert [row["target"] for row in per_target] == [0.6, 0.9]
        for row in per_target:
            assert set(row["groups"]) == {"0", "1", "overall"}
            for entry in row["groups"].values():
                assert "acc_delta_mean" in entry and "tpr_delta_mean" in entry
            assert "acc_p_adj" in row["between"] or "acc_significant" in row["between"]
        assert deg_result.summary["holm_family"]

    def test_needs_multiple_seeds(self):
        with pytest.raises(DomainError, match="n_seeds"):
            run_degradation_experiment(tiny_config(n_seeds=1))

    def test_needs_positive_rate(self):
        with pytest.raises(DomainError, match="positive"):
            run_degradation_experiment(tiny_config(noise_rates=(0.0, 0.25)))


@pytest.fixture(scope="module")
def abl_result():
    return run_noise_ablation(tiny_config(noise_rates=(0.0, 0.25, 0.5), n_seeds=2))


class TestAblation:

    def test_grid_covers_all_cells(self, abl_result):
        grid = abl_result.summary["grid"]
        assert len(grid) == 2 * 3  # targets x rates
        assert {(cell["target"], cell["rho"]) for cell in grid} == {
            (t, r) for t in (0.6, 0.9) for r in (0.0, 0.25, 0.5)
        }

    def test_zero_rate_reuses_clean_model(self, abl_result):
        by_id = {r.run_id: r for r in abl_result.records}
        for t in (0.6, 0.9):
            for s in range(2):
                clean = by_id[f"ablation:t={repr(t)}:s={s}:clean"]
                zero = by_id[f"ablation:t={repr(t)}:s={s}:rho=0"]
                assert zero.report == clean.report
                assert zero.duration_s == 0.0

    def test_zero_rate_deltas_are_zero(self, abl_result):
        for cell in abl_result.summary["grid"]:
            if cell["rho"] == 0.0:
                for entry in cell["groups"].values():
                    assert entry["acc_delta_mean"] == 0.0

    def test_zero_rate_kendall_skipped_as_degenerate(self, abl_result):
        rows = {row["rho"]: row for row in abl_result.summary["kendall_by_rho"]}
        assert rows[0.0]["skipped"] is True
        assert rows[0.0]["note"]

    def test_needs_three_rates(self):
        with pytest.raises(DomainError, match="three"):
            run_noise_ablation(tiny_config(noise_rates=(0.0, 0.25)))


@pytest.fixture(scope="module")
def split_result():
    return run_split_experiment(tiny_config(
        arch="mlp",
        separability_targets=(0.6, 0.75, 0.9),
        n_seeds=2,
        n_train=300,
        n_test=240,
    ))


class TestSplit:

    def test_requires_mlp(self):
        with pytest.raises(UnsupportedArchitectureError):
            run_split_experiment(tiny_config(arch="linear"))

    def test_record_layout(self, split_result):
        # clean, biased, and audit per (target, seed)
        assert len(split_result.records) == 3 * 2 * 3
        for r in split_result.records:
            assert "sep_auc" in r.extras
            if r.arm in ("clean", "biased"):
                assert "split_auc" in r.extras
                assert 0.0 <= r.extras["split_auc"] <= 1.0

    def test_points_and_association(self, split_result):
        points = split_result.summary["points"]
        assert len(points) == 3 * 2 * 2
        assoc = split_result.summary["association"]
        assert set(assoc) == {"clean", "biased"}
        for row in assoc.values():
            assert row["n_points"] == 6
            if not row["skipped"]:
                assert -1.0 <= row["tau"] <= 1.0

    def test_per_target_sorted_by_measured_separability(self, split_result):
        seps = [row["sep_auc_mean"] for row in split_result.summary["per_target"]]
        assert seps == sorted(seps)

    def test_ceiling_reported(self, split_result):
        ceiling = split_result.summary["ceiling"]
        assert set(ceiling) == {"max_split_minus_sep_clean", "max_split_minus_sep_biased"}
        for v in ceiling.values():
            assert v is not None


class TestPersistence:

    def test_round_trip(self, tmp_path, deg_result):
        run_dir = persist_run(deg_result, tmp_path / "run")
        for name in ("config.json", "results.csv", "tests.csv", "summary.json"):
            assert (run_dir / name).exists()
        assert (run_dir / "plotdata" / "fig2_analogue.csv").exists()
        loaded = load_run(run_dir)
        assert results_equal(loaded, deg_result)
        assert loaded.summary == deg_result.summary

    def test_round_trip_all_kinds(self, tmp_path):
        cfg = tiny_config(n_seeds=2)
        runs = {
            "audit": run_separability_audit(cfg),
            "ablation": run_noise_ablation(tiny_config(noise_rates=(0.0, 0.25, 0.5), n_seeds=2)),
            "split": run_split_experiment(tiny_config(arch="mlp", n_seeds=2, n_train=300, n_test=240)),
        }
        for kind, result in runs.items():
            assert kind in EXPERIMENT_KINDS
            run_dir = persist_run(result, tmp_path / kind)
            loaded = load_run(run_dir)
            assert results_equal(loaded, result)

    def test_rerun_is_byte_identical(self, tmp_path):
        cfg = tiny_config(n_seeds=2)
        dir_a = persist_run(run_degradation_experiment(cfg), tmp_path / "a")
        dir_b = persist_run(run_degradation_experiment(cfg), tmp_path / "b")
        for name in ("config.json", "results.csv", "tests.csv", "plotdata/fig2_analogue.csv"):
            assert (dir_a / name).read_bytes() == (dir_b / name).read_bytes(), name

    def test_parallel_execution_gives_identical_results(self, tmp_path):
        serial = persist_run(run_degradation_experiment(tiny_config(n_seeds=2, jobs=1)), tmp_path / "s")
        parallel = persist_run(run_degradation_experiment(tiny_config(n_seeds=2, jobs=3)), tmp_path / "p")
        assert (serial / "results.csv").read_bytes() == (parallel / "results.csv").read_bytes()
        assert (serial / "tests.csv").read_bytes() == (parallel / "tests.csv").read_bytes()

    def test_no_output_dir_rejected(self, deg_result):
        with pytest.raises(DomainError, match="output"):
            persist_run(deg_result)

    def test_config_output_dir_used(self, tmp_path):
        result = run_separability_audit(tiny_config(n_seeds=2, output_dir=str(tmp_path / "via_cfg")))
        run_dir = persist_run(result)
        assert run_dir == tmp_path / "via_cfg"
        assert (run_dir / "results.csv").exists()

    def test_tampered_row_count(self, tmp_path, deg_result):
        run_dir = persist_run(deg_result, tmp_path / "tamper")
        path = run_dir / "results.csv"
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(IntegrityError, match="results.csv"):
            load_run(run_dir)

    def test_tampered_schema_version(self, tmp_path, deg_result):
        run_dir = persist_run(deg_result, tmp_path / "schema")
        path = run_dir / "config.json"
        payload = json.loads(path.read_text())
        payload["schema_version"] = SCHEMA_VERSION + 1
        path.write_text(json.dumps(payload))
        with pytest.raises(IntegrityError, match="schema_version"):
            load_run(run_dir)

    def test_tampered_significance_flag(self, tmp_path, deg_result):
        run_dir = persist_run(deg_result, tmp_path / "flag")
        path = run_dir / "tests.csv"
        lines = path.read_text().splitlines()
        first = lines[1].rsplit(",", 1)
        flipped = "true" if first[1] == "false" else "false"
        lines[1] = first[0] + "," + flipped
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(IntegrityError, match="contradicts"):
            load_run(run_dir)

    def test_missing_file(self, tmp_path, deg_result):
        run_dir = persist_run(deg_result, tmp_path / "missing")
        (run_dir / "tests.csv").unlink()
        with pytest.raises(IntegrityError, match="tests.csv"):
            load_run(run_dir)

    def test_plotdata_tables_headers(self, deg_result):
        tables = plotdata_tables(deg_result)
        header, rows = tables["fig2_analogue.csv"]
        assert header == ("separability", "group", "delta_mean", "delta_sd", "p_adj", "significant")
        assert len(rows) == 2 * 2  # targets x plotted groups


@pytest.fixture(scope="module")
def csv_path(tmp_path_factory):
    spec = population_for_targets(
        group_auc=0.85, disease_auc=0.7, group_prior=0.6, class_prior=(0.65, 0.65)
    )
    data = sample_population(spec, 1200, seed=0)
    path = tmp_path_factory.mktemp("csvdata") / "cohort.csv"
    save_dataset_csv(data, path)
    return str(path)


class TestCsvBackedData:
    def csv_config(self, csv_path, **overrides):
        base = dict(dataset_csv=csv_path, n_train=700, n_test=400, n_seeds=2)
        base.update(overrides)
        return tiny_config(**base)

    def test_audit_measures_instead_of_dials(self, csv_path):
        result = run_separability_audit(self.csv_config(csv_path))
        assert len(result.records) == 2
        assert all(r.target is None for r in result.records)
        assert all(":t=data:" in r.run_id for r in result.records)
        row = result.summary["table"][0]
        assert row["target"] is None
        assert 0.7 < row["auc_mean"] < 0.95

    def test_degradation_reports_measured_separability(self, csv_path):
        result = run_degradation_experiment(self.csv_config(csv_path))
        arms = {r.arm for r in result.records}
        assert arms == {"clean", "biased", "audit"}
        row = result.summary["per_target"][0]
        assert row["target"] is None
        assert row["separability"] is not None
        assert 0.6 < row["separability"] < 1.0

    def test_too_few_rows_rejected(self, csv_path):
        with pytest.raises(DomainError, match="rows"):
            run_separability_audit(self.csv_config(csv_path, n_train=1000, n_test=500))

    def test_corrupted_observed_labels_rejected(self, tmp_path):
        spec = population_for_targets(group_auc=0.8, disease_auc=0.7)
        data = sample_population(spec, 600, seed=1)
        data.observed_label = 1 - data.true_label  # violates the clean-test contract
        path = tmp_path / "dirty.csv"
        save_dataset_csv(data, path)
        cfg = tiny_config(dataset_csv=str(path), n_train=300, n_test=200, n_seeds=2)
        with pytest.raises(IntegrityError, match="clean"):
            run_degradation_experiment(cfg)

"""Experiment harness: sweeps, statistics and run-directory persistence.

Four experiment kinds share one execution skeleton:

- audit: train group classifiers across separability targets, measure AUC.
- degradation: clean-vs-corrupted arms at one noise rate, per-group deltas
  plus Mann-Whitney comparisons (Holm-adjusted within the invocation).
- ablation: the degradation grid swept over noise rates, with per-rate
  Kendall associations between separability and the target group's delta.
- split: frozen-backbone probes quantifying how much group information the
  trained models encode, against the separability measured on the same data.

Every (target, seed) unit derives its RNG streams from the master seed plus
its own coordinates, so units are order-independent and can run in parallel;
rerunning an identical config reproduces results.csv byte for byte on the
same platform. The biased and clean arms of a unit share the identical
pre-injection dataset and the identical training seed, so they differ only in
the injected labels.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from .biasinject import NoiseSpec, inject_underdiagnosis
from .datagen import (
    Dataset,
    PopulationSpec,
    load_dataset_csv,
    population_for_targets,
    sample_population,
)
from .errors import (
    DomainError,
    IntegrityError,
    SchemaError,
    UnsupportedArchitectureError,
)
from .learner import TrainConfig, predict_proba, probe_split_indices, split_probe, train_classifier
from .metrics import METRICS_CSV_COLUMNS, GroupMetrics, MetricsReport, group_metrics, metrics_csv_rows, roc_auc
from .stats import (
    TESTS_CSV_COLUMNS,
    TestResult,
    holm_bonferroni,
    kendall_tau,
    mann_whitney_u,
    test_result_csv_row,
)

__all__ = [
    "SCHEMA_VERSION",
    "ExperimentConfig",
    "RunRecord",
    "ExperimentResult",
    "run_separability_audit",
    "run_degradation_experiment",
    "run_noise_ablation",
    "run_split_experiment",
    "persist_run",
    "load_run",
]

SCHEMA_VERSION = 1

EXPERIMENT_KINDS = ("audit", "degradation", "ablation", "split")

DECISION_THRESHOLD = 0.5

# Default sweep of separability targets, low to nearly saturated.
DEFAULT_SEPARABILITY_TARGETS = (0.55, 0.65, 0.75, 0.85, 0.92, 0.98)

# Default noise-rate grid for the ablation sweep.
DEFAULT_ABLATION_RATES = (0.0, 0.1, 0.2, 0.25, 0.3, 0.4, 0.5)

HOLM_FAMILY_NOTE = "all comparisons within this experiment invocation"


def _default_train_config() -> TrainConfig:
    # Mini-batches converge much faster per unit work than full-batch steps at
    # the default dataset sizes, so the harness default departs from the
    # train_classifier default there.
    return TrainConfig(learning_rate=0.1, max_epochs=200, patience=5, val_fraction=0.2, batch_size=256)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything an experiment invocation depends on.

    ``separability_targets`` and the population shape knobs describe the
    synthetic family; when ``dataset_csv`` is set they are ignored and the
    sweep collapses to the provided data, whose separability is measured
    instead of dialed. ``noise_rates`` holds the ablation grid; degradation
    and split use its first entry. ``output_dir`` and ``jobs`` are execution
    details and excluded from the config fingerprint.
    """

    separability_targets: tuple[float, ...] = DEFAULT_SEPARABILITY_TARGETS
    noise_rates: tuple[float, ...] = (0.25,)
    n_train: int = 20000
    n_test: int = 10000
    n_seeds: int = 10
    arch: str = "mlp"
    train_config: TrainConfig = field(default_factory=_default_train_config)
    target_group: int = 1
    alpha: float = 0.05
    master_seed: int = 0
    disease_auc: float = 0.7
    group_prior: float = 0.6
    class_prior: tuple[float, float] = (0.65, 0.65)
    noise_scale: float = 1.0
    dim: int = 2
    dataset_csv: str | None = None
    output_dir: str | None = None
    jobs: int = 1

    def __post_init__(self) -> None:
        targets = tuple(float(t) for t in self.separability_targets)
        if not targets:
            raise DomainError("separability_targets must be nonempty")
        for t in targets:
            if not math.isfinite(t) or not 0.5 <= t < 1.0:
                raise DomainError(f"separability targets must lie in [0.5, 1.0), got {t!r}")
        object.__setattr__(self, "separability_targets", targets)
        rates = tuple(float(r) for r in self.noise_rates)
        if not rates:
            raise DomainError("noise_rates must be nonempty")
        for r in rates:
            if not math.isfinite(r) or not 0.0 <= r <= 1.0:
                raise DomainError(f"noise rates must lie in [0, 1], got {r!r}")
        object.__setattr__(self, "noise_rates", rates)
        for name in ("n_train", "n_test", "n_seeds", "jobs"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise DomainError(f"{name} must be a positive integer, got {v!r}")
        if self.arch not in ("linear", "mlp"):
            raise DomainError(f"arch must be 'linear' or 'mlp', got {self.arch!r}")
        if not isinstance(self.train_config, TrainConfig):
            raise DomainError("train_config must be a TrainConfig")
        if self.target_group not in (0, 1):
            raise DomainError(f"target_group must be 0 or 1, got {self.target_group!r}")
        alpha = float(self.alpha)
        if not 0.0 < alpha < 1.0:
            raise DomainError(f"alpha must lie strictly in (0, 1), got {self.alpha!r}")
        object.__setattr__(self, "alpha", alpha)
        if not isinstance(self.master_seed, int) or isinstance(self.master_seed, bool):
            raise DomainError(f"master_seed must be an integer, got {self.master_seed!r}")
        disease = float(self.disease_auc)
        if not 0.5 <= disease < 1.0:
            raise DomainError(f"disease_auc must lie in [0.5, 1.0), got {self.disease_auc!r}")
        object.__setattr__(self, "disease_auc", disease)
        gp = float(self.group_prior)
        if not 0.0 < gp < 1.0:
            raise DomainError(f"group_prior must lie strictly in (0, 1), got {self.group_prior!r}")
        object.__setattr__(self, "group_prior", gp)
        cp = tuple(float(v) for v in self.class_prior)
        if len(cp) != 2 or any(not 0.0 < v < 1.0 for v in cp):
            raise DomainError(f"class_prior must be two values strictly in (0, 1), got {self.class_prior!r}")
        object.__setattr__(self, "class_prior", cp)
        ns = float(self.noise_scale)
        if not math.isfinite(ns) or ns <= 0.0:
            raise DomainError(f"noise_scale must be positive, got {self.noise_scale!r}")
        object.__setattr__(self, "noise_scale", ns)
        if not isinstance(self.dim, int) or isinstance(self.dim, bool) or self.dim < 2:
            raise DomainError(f"dim must be an integer >= 2, got {self.dim!r}")

    def to_json_dict(self) -> dict:
        return {
            "separability_targets": list(self.separability_targets),
            "noise_rates": list(self.noise_rates),
            "n_train": self.n_train,
            "n_test": self.n_test,
            "n_seeds": self.n_seeds,
            "arch": self.arch,
            "train_config": self.train_config.to_json_dict(),
            "target_group": self.target_group,
            "alpha": self.alpha,
            "master_seed": self.master_seed,
            "disease_auc": self.disease_auc,
            "group_prior": self.group_prior,
            "class_prior": list(self.class_prior),
            "noise_scale": self.noise_scale,
            "dim": self.dim,
            "dataset_csv": self.dataset_csv,
            "output_dir": self.output_dir,
            "jobs": self.jobs,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "ExperimentConfig":
        """Build a config from a (possibly partial) JSON object; unknown keys are fatal."""
        if not isinstance(data, dict):
            raise SchemaError(f"experiment config must be a JSON object, got {type(data).__name__}")
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise SchemaError(f"experiment config has unknown field(s): {', '.join(sorted(unknown))}")
        kwargs = dict(data)
        if "separability_targets" in kwargs:
            kwargs["separability_targets"] = tuple(kwargs["separability_targets"])
        if "noise_rates" in kwargs:
            kwargs["noise_rates"] = tuple(kwargs["noise_rates"])
        if "class_prior" in kwargs:
            kwargs["class_prior"] = tuple(kwargs["class_prior"])
        if "train_config" in kwargs and kwargs["train_config"] is not None:
            kwargs["train_config"] = TrainConfig.from_json_dict(kwargs["train_config"])
        return cls(**kwargs)

    def fingerprint(self) -> str:
        """Content hash over the scientific fields (output_dir and jobs excluded)."""
        payload = self.to_json_dict()
        payload.pop("output_dir")
        payload.pop("jobs")
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class RunRecord:
    """One trained-and-evaluated model inside an experiment."""

    run_id: str
    config_fingerprint: str
    target: float | None
    seed_index: int
    arm: str
    rho: float
    report: MetricsReport
    duration_s: float
    extras: dict = field(default_factory=dict)


@dataclass
class ExperimentResult:
    kind: str
    config: ExperimentConfig
    records: list[RunRecord]
    tests: list[tuple[str, TestResult]]
    summary: dict


def _derive_seed(master_seed: int, *parts) -> int:
    """Deterministic 64-bit stream seed from the master seed and coordinates."""
    text = ":".join([str(int(master_seed)), *(str(p) for p in parts)])
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")


def _target_token(target: float | None) -> str:
    return "data" if target is None else repr(float(target))


def _population_for_target(config: ExperimentConfig, target: float) -> PopulationSpec:
    return population_for_targets(
        target,
        config.disease_auc,
        dim=config.dim,
        group_prior=config.group_prior,
        class_prior=config.class_prior,
        noise_scale=config.noise_scale,
    )


@lru_cache(maxsize=4)
def _load_csv_cached(path: str) -> Dataset:
    return load_dataset_csv(path)


def _subset(dataset: Dataset, idx: np.ndarray) -> Dataset:
    return Dataset(
        features=dataset.features[idx].copy(),
        group=dataset.group[idx].copy(),
        true_label=dataset.true_label[idx].copy(),
        observed_label=dataset.observed_label[idx].copy(),
    )


def _data_for(config: ExperimentConfig, target: float | None, seed_index: int) -> tuple[Dataset, Dataset]:
    """Train and test datasets for one unit, synthetic or CSV-backed."""
    if target is None:
        full = _load_csv_cached(config.dataset_csv)
        if config.n_train + config.n_test > len(full):
            raise DomainError(
                f"dataset has {len(full)} rows; n_train + n_test = "
                f"{config.n_train + config.n_test} exceeds it"
            )
        rng = np.random.default_rng(_derive_seed(config.master_seed, "datasplit", seed_index))
        perm = rng.permutation(len(full))
        return (
            _subset(full, perm[: config.n_train]),
            _subset(full, perm[config.n_train : config.n_train + config.n_test]),
        )
    spec = _population_for_target(config, target)
    token = _target_token(target)
    train = sample_population(spec, config.n_train, _derive_seed(config.master_seed, "train-data", token, seed_index))
    test = sample_population(spec, config.n_test, _derive_seed(config.master_seed, "test-data", token, seed_index))
    return train, test


def _require_clean_labels(dataset: Dataset, context: str) -> None:
    # Evaluation must always happen against uncorrupted labels.
    mismatched = int(np.count_nonzero(dataset.observed_label != dataset.true_label))
    if mismatched:
        raise IntegrityError(
            f"{context}: evaluation split has {mismatched} samples whose observed label "
            "differs from the true label; tests must run on clean labels"
        )


def _evaluate(model, dataset: Dataset) -> MetricsReport:
    scores = predict_proba(model, dataset.features)
    preds = (scores > DECISION_THRESHOLD).astype(np.int64)
    return group_metrics(preds, scores, dataset.true_label, dataset.group, threshold=DECISION_THRESHOLD)


def _evaluate_group_classifier(model, dataset: Dataset) -> MetricsReport:
    scores = predict_proba(model, dataset.features)
    preds = (scores > DECISION_THRESHOLD).astype(np.int64)
    return group_metrics(preds, scores, dataset.group, dataset.group, threshold=DECISION_THRESHOLD)


def _train_seeded(config: ExperimentConfig, dataset: Dataset, target_column: str, role: str,
                  target: float | None, seed_index: int):
    tcfg = replace(
        config.train_config,
        seed=_derive_seed(config.master_seed, role, _target_token(target), seed_index),
    )
    return train_classifier(dataset, target_column, config.arch, tcfg)


def _record(kind: str, config: ExperimentConfig, target: float | None, seed_index: int,
            arm: str, rho: float, report: MetricsReport, duration_s: float,
            extras: dict | None = None, rho_tag: str | None = None) -> RunRecord:
    run_id = f"{kind}:t={_target_token(target)}:s={seed_index}:{arm}"
    if rho_tag is not None:
        run_id = f"{kind}:t={_target_token(target)}:s={seed_index}:{rho_tag}"
    return RunRecord(
        run_id=run_id,
        config_fingerprint=config.fingerprint(),
        target=target,
        seed_index=seed_index,
        arm=arm,
        rho=rho,
        report=report,
        duration_s=duration_s,
        extras=dict(extras or {}),
    )


# --- per-unit work functions (module level so they can cross process boundaries) ---


def _audit_unit(config: ExperimentConfig, target: float | None, seed_index: int) -> list[RunRecord]:
    train, test = _data_for(config, target, seed_index)
    start = time.perf_counter()
    model = _train_seeded(config, train, "group", "audit-train", target, seed_index)
    report = _evaluate_group_classifier(model, test)
    duration = time.perf_counter() - start
    return [_record("audit", config, target, seed_index, "audit", 0.0, report, duration)]


def _degradation_unit(config: ExperimentConfig, target: float | None, seed_index: int) -> list[RunRecord]:
    rho = config.noise_rates[0]
    train, test = _data_for(config, target, seed_index)
    _require_clean_labels(test, f"degradation t={_target_token(target)} s={seed_index}")
    noise = NoiseSpec(
        target_group=config.target_group,
        rate=rho,
        seed=_derive_seed(config.master_seed, "noise", _target_token(target), seed_index),
    )
    biased_train = inject_underdiagnosis(train, noise)
    records = []
    start = time.perf_counter()
    clean_model = _train_seeded(config, train, "observed_label", "train", target, seed_index)
    clean_report = _evaluate(clean_model, test)
    records.append(_record("degradation", config, target, seed_index, "clean", 0.0,
                           clean_report, time.perf_counter() - start))
    start = time.perf_counter()
    biased_model = _train_seeded(config, biased_train, "observed_label", "train", target, seed_index)
    biased_report = _evaluate(biased_model, test)
    records.append(_record("degradation", config, target, seed_index, "biased", rho,
                           biased_report, time.perf_counter() - start))
    if target is None:
        start = time.perf_counter()
        audit_model = _train_seeded(config, train, "group", "audit-train", target, seed_index)
        audit_report = _evaluate_group_classifier(audit_model, test)
        records.append(_record("degradation", config, target, seed_index, "audit", 0.0,
                               audit_report, time.perf_counter() - start))
    return records


def _ablation_unit(config: ExperimentConfig, target: float | None, seed_index: int) -> list[RunRecord]:
    train, test = _data_for(config, target, seed_index)
    _require_clean_labels(test, f"ablation t={_target_token(target)} s={seed_index}")
    noise_seed = _derive_seed(config.master_seed, "noise", _target_token(target), seed_index)
    records = []
    start = time.perf_counter()
    clean_model = _train_seeded(config, train, "observed_label", "train", target, seed_index)
    clean_report = _evaluate(clean_model, test)
    records.append(_record("ablation", config, target, seed_index, "clean", 0.0,
                           clean_report, time.perf_counter() - start))
    for rho in config.noise_rates:
        tag = f"rho={rho:g}"
        if rho == 0.0:
            # Same data, same training seed: the model is identical to the
            # clean arm, so reuse its report rather than retraining.
            records.append(_record("ablation", config, target, seed_index, "biased", 0.0,
                                   clean_report, 0.0, rho_tag=tag))
            continue
        start = time.perf_counter()
        noise = NoiseSpec(target_group=config.target_group, rate=rho, seed=noise_seed)
        biased_train = inject_underdiagnosis(train, noise)
        biased_model = _train_seeded(config, biased_train, "observed_label", "train", target, seed_index)
        biased_report = _evaluate(biased_model, test)
        records.append(_record("ablation", config, target, seed_index, "biased", rho,
                               biased_report, time.perf_counter() - start, rho_tag=tag))
    return records


def _split_unit(config: ExperimentConfig, target: float | None, seed_index: int) -> list[RunRecord]:
    rho = config.noise_rates[0]
    train, test = _data_for(config, target, seed_index)
    _require_clean_labels(test, f"split t={_target_token(target)} s={seed_index}")
    noise = NoiseSpec(
        target_group=config.target_group,
        rate=rho,
        seed=_derive_seed(config.master_seed, "noise", _target_token(target), seed_index),
    )
    biased_train = inject_underdiagnosis(train, noise)

    start = time.perf_counter()
    audit_model = _train_seeded(config, train, "group", "audit-train", target, seed_index)
    audit_report = _evaluate_group_classifier(audit_model, test)
    audit_duration = time.perf_counter() - start

    # Probe AUCs are compared against separability measured on the very same
    # samples, so both arms share one probe split and the audit model is
    # rescored on the probe's held-out half.
    probe_cfg = replace(
        config.train_config,
        seed=_derive_seed(config.master_seed, "probe", _target_token(target), seed_index),
    )
    eval_idx, _ = probe_split_indices(len(test), probe_cfg.seed)
    audit_scores = predict_proba(audit_model, test.features[eval_idx])
    sep_auc = float(roc_auc(audit_scores, test.group[eval_idx]))

    records = []
    for arm, data in (("clean", train), ("biased", biased_train)):
        start = time.perf_counter()
        model = _train_seeded(config, data, "observed_label", "train", target, seed_index)
        report = _evaluate(model, test)
        _, split_auc = split_probe(model, test, probe_cfg)
        records.append(_record("split", config, target, seed_index, arm, rho if arm == "biased" else 0.0,
                               report, time.perf_counter() - start,
                               extras={"split_auc": split_auc, "sep_auc": sep_auc}))
    records.append(_record("split", config, target, seed_index, "audit", 0.0,
                           audit_report, audit_duration, extras={"sep_auc": sep_auc}))
    return records


_UNIT_FUNCTIONS = {
    "audit": _audit_unit,
    "degradation": _degradation_unit,
    "ablation": _ablation_unit,
    "split": _split_unit,
}


def _run_units(kind: str, config: ExperimentConfig, targets: list[float | None]) -> list[RunRecord]:
    unit = _UNIT_FUNCTIONS[kind]
    args = [(target, seed) for target in targets for seed in range(config.n_seeds)]
    if config.jobs <= 1:
        batches = [unit(config, target, seed) for target, seed in args]
    else:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            futures = [pool.submit(unit, config, target, seed) for target, seed in args]
            batches = [f.result() for f in futures]
    return [record for batch in batches for record in batch]


def _targets_for(config: ExperimentConfig) -> list[float | None]:
    if config.dataset_csv is not None:
        return [None]
    return sorted(config.separability_targets)


def _mean_sd(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    sd = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return mean, sd


def _metric_value(report: MetricsReport, metric: str, slice_key) -> float | None:
    gm: GroupMetrics | None = report.overall if slice_key == "overall" else report.groups.get(slice_key)
    if gm is None:
        return None
    return getattr(gm, metric)


def _apply_holm(raw: list[tuple[str, TestResult]]) -> list[tuple[str, TestResult]]:
    if not raw:
        return []
    adjusted = holm_bonferroni([result.p_value for _, result in raw])
    return [(cid, result.with_adjusted(p)) for (cid, result), p in zip(raw, adjusted)]


def _index_records(records: list[RunRecord]) -> dict:
    index = {}
    for record in records:
        index[(record.target, record.seed_index, record.run_id.rsplit(":", 1)[1])] = record
    return index


def _measured_separability(records: list[RunRecord], target: float | None) -> float | None:
    aucs = [r.report.overall.auc for r in records if r.target == target and r.arm == "audit"]
    aucs = [a for a in aucs if a is not None]
    return float(np.mean(aucs)) if aucs else None


def run_separability_audit(config: ExperimentConfig) -> ExperimentResult:
    """Group-classifier AUC for every separability target (or for the CSV data)."""
    targets = _targets_for(config)
    records = _run_units("audit", config, targets)
    table = []
    for target in targets:
        aucs = [r.report.overall.auc for r in records if r.target == target]
        mean, sd = _mean_sd([a for a in aucs if a is not None])
        table.append({
            "target": target,
            "auc_mean": mean,
            "auc_sd": sd,
            "n_seeds": config.n_seeds,
        })
    table.sort(key=lambda row: row["auc_mean"])
    summary = {"kind": "audit", "table": table}
    return _finish("audit", config, records, [], summary)


def run_degradation_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Clean vs biased arms at noise_rates[0], with per-group significance tests."""
    if config.n_seeds < 2:
        raise DomainError("degradation needs n_seeds >= 2 for significance testing")
    rho = config.noise_rates[0]
    if rho <= 0.0:
        raise DomainError("degradation needs a positive noise rate first in noise_rates")
    targets = _targets_for(config)
    records = _run_units("degradation", config, targets)
    index = _index_records(records)

    raw_tests: list[tuple[str, TestResult]] = []
    per_target_values = {}
    for target in targets:
        token = _target_token(target)
        arms = {}
        for arm in ("clean", "biased"):
            arms[arm] = [index[(target, s, arm)].report for s in range(config.n_seeds)]
        values = {}
        for metric in ("accuracy", "tpr", "auc"):
            for slice_key in (0, 1, "overall"):
                values[(metric, slice_key, "clean")] = [_metric_value(r, metric, slice_key) for r in arms["clean"]]
                values[(metric, slice_key, "biased")] = [_metric_value(r, metric, slice_key) for r in arms["biased"]]
        per_target_values[target] = values
        for metric in ("accuracy", "tpr"):
            for slice_key in (0, 1, "overall"):
                clean_vals = values[(metric, slice_key, "clean")]
                biased_vals = values[(metric, slice_key, "biased")]
                if any(v is None for v in clean_vals + biased_vals):
                    continue
                cid = f"deg:t={token}:slice={slice_key}:{metric}:biased_lt_clean"
                raw_tests.append((cid, mann_whitney_u(biased_vals, clean_vals, "less", alpha=config.alpha)))
            deltas = {}
            for g in (0, 1):
                clean_vals = values[(metric, g, "clean")]
                biased_vals = values[(metric, g, "biased")]
                if any(v is None for v in clean_vals + biased_vals):
                    deltas = None
                    break
                deltas[g] = [100.0 * (b - c) for b, c in zip(biased_vals, clean_vals)]
            if deltas is not None:
                cid = f"deg:t={token}:between_groups:{metric}:two_sided"
                raw_tests.append((cid, mann_whitney_u(deltas[1], deltas[0], "two_sided", alpha=config.alpha)))
    tests = _apply_holm(raw_tests)
    adjusted = dict(tests)

    per_target = []
    for target in targets:
        token = _target_token(target)
        values = per_target_values[target]
        separability = target if target is not None else _measured_separability(records, target)
        groups_summary = {}
        for slice_key in (0, 1, "overall"):
            entry = {}
            for metric, short in (("accuracy", "acc"), ("tpr", "tpr"), ("auc", "auc")):
                clean_vals = values[(metric, slice_key, "clean")]
                biased_vals = values[(metric, slice_key, "biased")]
                if any(v is None for v in clean_vals + biased_vals):
                    entry[f"{short}_delta_mean"] = None
                    entry[f"{short}_delta_sd"] = None
                    continue
                per_seed = [100.0 * (b - c) for b, c in zip(biased_vals, clean_vals)]
                mean, sd = _mean_sd(per_seed)
                entry[f"{short}_delta_mean"] = mean
                entry[f"{short}_delta_sd"] = sd
                if short != "auc":
                    result = adjusted.get(f"deg:t={token}:slice={slice_key}:{metric}:biased_lt_clean")
                    entry[f"{short}_p_adj"] = None if result is None else result.adjusted_p
                    entry[f"{short}_significant"] = None if result is None else result.significant
            groups_summary[str(slice_key)] = entry
        between = {}
        for metric, short in (("accuracy", "acc"), ("tpr", "tpr")):
            result = adjusted.get(f"deg:t={token}:between_groups:{metric}:two_sided")
            between[f"{short}_p_adj"] = None if result is None else result.adjusted_p
            between[f"{short}_significant"] = None if result is None else result.significant
        per_target.append({
            "target": target,
            "separability": separability,
            "groups": groups_summary,
            "between": between,
        })
    per_target.sort(key=lambda row: (row["separability"] is None, row["separability"]))
    summary = {
        "kind": "degradation",
        "rho": rho,
        "alternative": "less (biased arm worse than clean arm)",
        "holm_family": HOLM_FAMILY_NOTE,
        "per_target": per_target,
    }
    return _finish("degradation", config, records, tests, summary)


def run_noise_ablation(config: ExperimentConfig) -> ExperimentResult:
    """Degradation swept over the full noise-rate grid (at least three rates)."""
    if len(config.noise_rates) < 3:
        raise DomainError("ablation needs at least three noise rates")
    targets = _targets_for(config)
    records = _run_units("ablation", config, targets)
    index = _index_records(records)

    grid = []
    deltas_by_rho: dict[float, list[tuple[float, float]]] = {rho: [] for rho in config.noise_rates}
    for target in targets:
        separability = target if target is not None else _measured_separability(records, target)
        for rho in config.noise_rates:
            tag = f"rho={rho:g}"
            per_group: dict[str, dict] = {}
            for slice_key in (0, 1, "overall"):
                acc_deltas = []
                tpr_deltas = []
                for s in range(config.n_seeds):
                    clean = index[(target, s, "clean")].report
                    biased = index[(target, s, tag)].report
                    c_acc = _metric_value(clean, "accuracy", slice_key)
                    b_acc = _metric_value(biased, "accuracy", slice_key)
                    c_tpr = _metric_value(clean, "tpr", slice_key)
                    b_tpr = _metric_value(biased, "tpr", slice_key)
                    if None not in (c_acc, b_acc):
                        acc_deltas.append(100.0 * (b_acc - c_acc))
                    if None not in (c_tpr, b_tpr):
                        tpr_deltas.append(100.0 * (b_tpr - c_tpr))
                    if slice_key == config.target_group and None not in (c_acc, b_acc) and separability is not None:
                        deltas_by_rho[rho].append((separability, 100.0 * (b_acc - c_acc)))
                per_group[str(slice_key)] = {
                    "acc_delta_mean": _mean_sd(acc_deltas)[0] if acc_deltas else None,
                    "tpr_delta_mean": _mean_sd(tpr_deltas)[0] if tpr_deltas else None,
                }
            grid.append({"target": target, "separability": separability, "rho": rho, "groups": per_group})

    raw_tests: list[tuple[str, TestResult]] = []
    kendall_rows = []
    for rho in config.noise_rates:
        points = deltas_by_rho[rho]
        cid = f"abl:rho={rho:g}:kendall:separability_vs_group{config.target_group}_acc_delta"
        row = {"rho": rho, "n_points": len(points), "skipped": False, "note": None}
        try:
            result = kendall_tau([p[0] for p in points], [p[1] for p in points], alpha=config.alpha)
        except DomainError as exc:
            row["skipped"] = True
            row["note"] = str(exc)
            kendall_rows.append(row)
            continue
        raw_tests.append((cid, result))
        row["comparison_id"] = cid
        kendall_rows.append(row)
    tests = _apply_holm(raw_tests)
    adjusted = dict(tests)
    for row in kendall_rows:
        if row["skipped"]:
            continue
        result = adjusted[row.pop("comparison_id")]
        row["tau"] = result.statistic
        row["p"] = result.p_value
        row["p_adj"] = result.adjusted_p
        row["significant"] = result.significant

    summary = {
        "kind": "ablation",
        "rhos": list(config.noise_rates),
        "holm_family": HOLM_FAMILY_NOTE,
        "grid": grid,
        "kendall_by_rho": kendall_rows,
    }
    return _finish("ablation", config, records, tests, summary)


def run_split_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Frozen-backbone group probes for clean- and biased-arm models.

    Needs the mlp architecture, since the probe reads hidden representations.
    Separability is always measured on the same data by a group classifier, so
    every probe AUC can be compared with how much group information was
    available in the first place.
    """
    if config.arch != "mlp":
        raise UnsupportedArchitectureError("the split experiment requires arch='mlp'")
    rho = config.noise_rates[0]
    if rho <= 0.0:
        raise DomainError("split needs a positive noise rate first in noise_rates")
    targets = _targets_for(config)
    records = _run_units("split", config, targets)

    points = []
    for record in records:
        if record.arm in ("clean", "biased"):
            points.append({
                "target": record.target,
                "seed": record.seed_index,
                "arm": record.arm,
                "separability": record.extras["sep_auc"],
                "split_auc": record.extras["split_auc"],
            })

    raw_tests = []
    association_rows = {}
    for arm in ("clean", "biased"):
        arm_points = [p for p in points if p["arm"] == arm]
        cid = f"split:arm={arm}:kendall:separability_vs_split_auc"
        row = {"n_points": len(arm_points), "skipped": False, "note": None}
        try:
            result = kendall_tau(
                [p["separability"] for p in arm_points],
                [p["split_auc"] for p in arm_points],
                alpha=config.alpha,
            )
        except DomainError as exc:
            row["skipped"] = True
            row["note"] = str(exc)
            association_rows[arm] = row
            continue
        raw_tests.append((cid, result))
        row["comparison_id"] = cid
        association_rows[arm] = row
    tests = _apply_holm(raw_tests)
    adjusted = dict(tests)
    for arm, row in association_rows.items():
        if row["skipped"]:
            continue
        result = adjusted[row.pop("comparison_id")]
        row["tau"] = result.statistic
        row["p"] = result.p_value
        row["p_adj"] = result.adjusted_p
        row["significant"] = result.significant

    per_target = []
    for target in targets:
        target_points = [p for p in points if p["target"] == target]
        sep_mean, _ = _mean_sd([p["separability"] for p in target_points])
        arms_summary = {}
        for arm in ("clean", "biased"):
            split_aucs = [p["split_auc"] for p in target_points if p["arm"] == arm]
            mean, sd = _mean_sd(split_aucs)
            arms_summary[arm] = {"split_auc_mean": mean, "split_auc_sd": sd}
        per_target.append({"target": target, "sep_auc_mean": sep_mean, "arms": arms_summary})
    per_target.sort(key=lambda row: row["sep_auc_mean"])

    ceiling = {}
    for arm in ("clean", "biased"):
        gaps = [p["split_auc"] - p["separability"] for p in points if p["arm"] == arm]
        ceiling[f"max_split_minus_sep_{arm}"] = max(gaps) if gaps else None

    summary = {
        "kind": "split",
        "rho": rho,
        "holm_family": HOLM_FAMILY_NOTE,
        "per_target": per_target,
        "association": association_rows,
        "ceiling": ceiling,
        "points": points,
    }
    return _finish("split", config, records, tests, summary)


def _finish(kind: str, config: ExperimentConfig, records: list[RunRecord],
            tests: list[tuple[str, TestResult]], summary: dict) -> ExperimentResult:
    summary = dict(summary)
    summary["config_fingerprint"] = config.fingerprint()
    summary["run_index"] = {
        record.run_id: {
            "target": record.target,
            "seed": record.seed_index,
            "arm": record.arm,
            "rho": record.rho,
            "duration_s": record.duration_s,
            **record.extras,
        }
        for record in records
    }
    return ExperimentResult(kind=kind, config=config, records=records, tests=tests, summary=summary)


# --- persistence ---


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def plotdata_tables(result: ExperimentResult) -> dict[str, tuple[tuple[str, ...], list[list[str]]]]:
    """Figure-analogue CSV tables for a result, keyed by file name."""
    tables: dict[str, tuple[tuple[str, ...], list[list[str]]]] = {}
    if result.kind == "degradation":
        header = ("separability", "group", "delta_mean", "delta_sd", "p_adj", "significant")
        rows = []
        for entry in result.summary["per_target"]:
            for g in ("0", "1"):
                stats = entry["groups"][g]
                rows.append([
                    _fmt(entry["separability"]),
                    g,
                    _fmt(stats["acc_delta_mean"]),
                    _fmt(stats["acc_delta_sd"]),
                    _fmt(stats.get("acc_p_adj")),
                    _fmt(stats.get("acc_significant")),
                ])
        tables["fig2_analogue.csv"] = (header, rows)
    elif result.kind == "ablation":
        header = ("separability", "rho", "group", "delta_mean")
        rows = []
        for cell in result.summary["grid"]:
            for g in ("0", "1", "overall"):
                rows.append([
                    _fmt(cell["separability"]),
                    _fmt(cell["rho"]),
                    g,
                    _fmt(cell["groups"][g]["acc_delta_mean"]),
                ])
        tables["figA1_analogue.csv"] = (header, rows)
    elif result.kind == "split":
        header = ("separability", "arm", "split_auc")
        rows = [
            [_fmt(p["separability"]), p["arm"], _fmt(p["split_auc"])]
            for p in result.summary["points"]
        ]
        tables["fig3_analogue.csv"] = (header, rows)
    return tables


def persist_run(result: ExperimentResult, out_dir: str | Path | None = None) -> Path:
    """Write config.json, results.csv, tests.csv, summary.json and plotdata/.

    Rerunning an identical config always reproduces results.csv byte for byte
    (wall-clock durations live in summary.json, which is allowed to differ).
    """
    target = out_dir if out_dir is not None else result.config.output_dir
    if target is None:
        raise DomainError("no output directory: pass out_dir or set config.output_dir")
    run_dir = Path(target)
    run_dir.mkdir(parents=True, exist_ok=True)

    config_payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": result.kind,
        "fingerprint": result.config.fingerprint(),
        "config": result.config.to_json_dict(),
    }
    (run_dir / "config.json").write_text(
        json.dumps(config_payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    results_rows = 0
    with (run_dir / "results.csv").open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_CSV_COLUMNS)
        for record in result.records:
            for row in metrics_csv_rows(record.report, record.run_id, record.seed_index):
                writer.writerow(row)
                results_rows += 1

    with (run_dir / "tests.csv").open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TESTS_CSV_COLUMNS)
        for cid, test in result.tests:
            writer.writerow(test_result_csv_row(test, cid))

    tables = plotdata_tables(result)
    plot_counts = {}
    if tables:
        plot_dir = run_dir / "plotdata"
        plot_dir.mkdir(exist_ok=True)
        for name, (header, rows) in tables.items():
            with (plot_dir / name).open("w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(header)
                writer.writerows(rows)
            plot_counts[name] = len(rows)

    summary = dict(result.summary)
    summary["integrity"] = {
        "results_rows": results_rows,
        "tests_rows": len(result.tests),
        "plotdata_rows": plot_counts,
    }
    (run_dir / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return run_dir


def _read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    if not path.exists():
        raise IntegrityError(f"run directory is missing {path.name}")
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IntegrityError(f"{path.name} is empty") from None
        return header, list(reader)


def _opt_float(text: str) -> float | None:
    return None if text == "" else float(text)


def load_run(path: str | Path) -> ExperimentResult:
    """Reload a persisted run, verifying its integrity counts along the way."""
    run_dir = Path(path)
    config_path = run_dir / "config.json"
    summary_path = run_dir / "summary.json"
    for p in (config_path, summary_path):
        if not p.exists():
            raise IntegrityError(f"run directory is missing {p.name}")
    try:
        config_payload = json.loads(config_path.read_text(encoding="utf-8"))
        summary = json.loads(summary_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise IntegrityError(f"run directory holds invalid JSON: {exc}") from None
    if config_payload.get("schema_version") != SCHEMA_VERSION:
        raise IntegrityError(
            f"unsupported schema_version {config_payload.get('schema_version')!r}; "
            f"this build reads version {SCHEMA_VERSION}"
        )
    kind = config_payload.get("kind")
    if kind not in EXPERIMENT_KINDS:
        raise IntegrityError(f"unknown experiment kind {kind!r}")
    config = ExperimentConfig.from_json_dict(config_payload["config"])
    integrity = summary.get("integrity")
    run_index = summary.get("run_index")
    if not isinstance(integrity, dict) or not isinstance(run_index, dict):
        raise IntegrityError("summary.json is missing its integrity or run_index section")

    header, rows = _read_csv(run_dir / "results.csv")
    if tuple(header) != METRICS_CSV_COLUMNS:
        raise IntegrityError(f"results.csv has unexpected header {header}")
    if len(rows) != integrity.get("results_rows"):
        raise IntegrityError(
            f"results.csv holds {len(rows)} rows but summary.json recorded "
            f"{integrity.get('results_rows')}"
        )

    grouped: dict[str, dict] = {}
    order: list[str] = []
    for row in rows:
        run_id, seed, group = row[0], row[1], row[2]
        if run_id not in grouped:
            grouped[run_id] = {"seed": int(seed), "groups": {}, "overall": None, "threshold": None}
            order.append(run_id)
        gm = GroupMetrics(
            n_pos=int(row[3]),
            n_neg=int(row[4]),
            tpr=_opt_float(row[5]),
            accuracy=float(row[6]),
            auc=_opt_float(row[7]),
        )
        grouped[run_id]["threshold"] = float(row[8])
        if group == "overall":
            grouped[run_id]["overall"] = gm
        else:
            grouped[run_id]["groups"][int(group)] = gm

    if set(grouped) != set(run_index):
        raise IntegrityError("results.csv run ids do not match summary.json run_index")

    records = []
    fingerprint = config.fingerprint()
    for run_id in order:
        meta = run_index[run_id]
        data = grouped[run_id]
        if data["overall"] is None:
            raise IntegrityError(f"results.csv is missing the overall row for {run_id}")
        extras = {
            k: v for k, v in meta.items() if k not in ("target", "seed", "arm", "rho", "duration_s")
        }
        records.append(RunRecord(
            run_id=run_id,
            config_fingerprint=fingerprint,
            target=meta["target"],
            seed_index=meta["seed"],
            arm=meta["arm"],
            rho=meta["rho"],
            report=MetricsReport(threshold=data["threshold"], overall=data["overall"], groups=data["groups"]),
            duration_s=meta["duration_s"],
            extras=extras,
        ))

    header, test_rows = _read_csv(run_dir / "tests.csv")
    if tuple(header) != TESTS_CSV_COLUMNS:
        raise IntegrityError(f"tests.csv has unexpected header {header}")
    if len(test_rows) != integrity.get("tests_rows"):
        raise IntegrityError(
            f"tests.csv holds {len(test_rows)} rows but summary.json recorded "
            f"{integrity.get('tests_rows')}"
        )
    tests = []
    for row in test_rows:
        cid, statistic, p, p_adj, method, significant = row
        result = TestResult(
            statistic=float(statistic),
            p_value=float(p),
            method=method,
            adjusted_p=_opt_float(p_adj),
            alpha=config.alpha,
        )
        if significant != _fmt(result.significant):
            raise IntegrityError(f"tests.csv significance flag for {cid} contradicts its p-values")
        tests.append((cid, result))

    for name, expected in integrity.get("plotdata_rows", {}).items():
        _, plot_rows = _read_csv(run_dir / "plotdata" / name)
        if len(plot_rows) != expected:
            raise IntegrityError(
                f"plotdata/{name} holds {len(plot_rows)} rows but summary.json recorded {expected}"
            )

    summary_clean = {k: v for k, v in summary.items() if k != "integrity"}
    return ExperimentResult(kind=kind, config=config, records=records, tests=tests, summary=summary_clean)

"""Command-line interface.

Subcommands cover dataset generation, label-bias injection, separability
auditing, single-model training and evaluation, the four experiment kinds,
and rendering persisted runs into aligned text tables plus PNG figures.

Exit codes: 0 on success; 1 on usage, domain or validation errors (one-line
diagnostic on stderr); 2 on I/O errors or corrupted run directories.

Configuration precedence, lowest to highest: built-in defaults, the
SEPBIAS_SEED environment variable (seed fields only), --config file values,
then explicit flags. The merged effective config is what gets persisted with
each experiment run.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .biasinject import NoiseSpec, inject_underdiagnosis, save_noise_spec
from .datagen import (
    PopulationSpec,
    load_dataset_csv,
    load_population_spec,
    population_for_targets,
    sample_population,
    save_dataset_csv,
    save_population_spec,
)
from .errors import IntegrityError, SepbiasError
from .experiments import (
    DECISION_THRESHOLD,
    ExperimentConfig,
    load_run,
    persist_run,
    run_degradation_experiment,
    run_noise_ablation,
    run_separability_audit,
    run_split_experiment,
)
from .figures import render_result_figures
from .learner import TrainConfig, load_model, predict_proba, save_model, train_classifier
from .metrics import METRICS_CSV_COLUMNS, group_metrics, metrics_csv_rows

__all__ = ["main", "entrypoint"]

ENV_SEED = "SEPBIAS_SEED"

_EXPERIMENT_RUNNERS = {
    "audit": run_separability_audit,
    "degradation": run_degradation_experiment,
    "ablation": run_noise_ablation,
    "split": run_split_experiment,
}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; this artifact promises 1.
    def error(self, message):
        raise _UsageError(message)


def _env_seed() -> int | None:
    raw = os.environ.get(ENV_SEED)
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        raise _UsageError(f"{ENV_SEED} must be an integer, got {raw!r}") from None


def _parse_float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _parse_pair(text: str) -> tuple[float, float]:
    values = _parse_float_list(text)
    if len(values) != 2:
        raise argparse.ArgumentTypeError(f"expected two comma-separated numbers, got {text!r}")
    return values


def _parse_batch_size(text: str):
    if text == "full":
        return "full"
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"batch size must be 'full' or an integer, got {text!r}") from None


_TRAIN_FLAGS = (
    ("--learning-rate", "learning_rate", float, "gradient step size"),
    ("--max-epochs", "max_epochs", int, "training epoch cap"),
    ("--patience", "patience", int, "epochs without validation improvement before stopping"),
    ("--val-fraction", "val_fraction", float, "fraction of training data held out for validation"),
    ("--batch-size", "batch_size", _parse_batch_size, "mini-batch size, or 'full'"),
    ("--hidden-width", "hidden_width", int, "hidden layer width for the mlp architecture"),
)


def _add_train_flags(parser: argparse.ArgumentParser, defaults: TrainConfig) -> None:
    for flag, field, parse, doc in _TRAIN_FLAGS:
        parser.add_argument(flag, dest=f"tc_{field}", type=parse, default=None,
                            help=f"{doc} (default: {getattr(defaults, field)})")


def _train_config_from_args(args, defaults: TrainConfig, seed: int) -> TrainConfig:
    overrides = {}
    for _, field, _, _ in _TRAIN_FLAGS:
        value = getattr(args, f"tc_{field}")
        if value is not None:
            overrides[field] = value
    return replace(defaults, seed=seed, **overrides)


def _build_parser() -> _Parser:
    parser = _Parser(prog="sepbias", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    pop_defaults = PopulationSpec()
    exp_defaults = ExperimentConfig()
    tc_defaults = TrainConfig()

    p = sub.add_parser("generate", help="sample a synthetic dataset to CSV",
                       description="Sample a two-group Gaussian dataset and write data.csv plus "
                                   "population_spec.json under --out.")
    p.add_argument("--auc", type=float, default=None,
                   help="group separability target as group-classifier AUC (required unless --spec)")
    p.add_argument("--disease-auc", type=float, default=exp_defaults.disease_auc,
                   help=f"disease signal strength as single-group AUC (default: {exp_defaults.disease_auc})")
    p.add_argument("--dim", type=int, default=pop_defaults.dim,
                   help=f"feature dimension (default: {pop_defaults.dim})")
    p.add_argument("--group-prior", type=float, default=pop_defaults.group_prior,
                   help=f"probability of group 1 (default: {pop_defaults.group_prior})")
    p.add_argument("--class-prior", type=_parse_pair, default=pop_defaults.class_prior,
                   metavar="P0,P1",
                   help=f"per-group positive rates (default: {pop_defaults.class_prior[0]},{pop_defaults.class_prior[1]})")
    p.add_argument("--noise-scale", type=float, default=pop_defaults.noise_scale,
                   help=f"isotropic feature noise scale (default: {pop_defaults.noise_scale})")
    p.add_argument("--axis-angle", type=float, default=90.0,
                   help="angle in degrees between group and disease axes (default: 90.0)")
    p.add_argument("--spec", type=str, default=None,
                   help="population spec JSON to sample from instead of target flags")
    p.add_argument("--n", type=int, required=True, help="number of samples")
    p.add_argument("--seed", type=int, default=None,
                   help=f"sampling seed (default: {ENV_SEED} or 0)")
    p.add_argument("--out", type=str, required=True, help="output directory")
    p.set_defaults(handler=_cmd_generate)

    p = sub.add_parser("inject", help="corrupt observed labels in a dataset CSV",
                       description="Flip observed labels 1 to 0 for the target group at the "
                                   "given rate and write the corrupted CSV to --out.")
    p.add_argument("--in", dest="in_path", type=str, required=True, help="input dataset CSV")
    p.add_argument("--out", type=str, required=True, help="output dataset CSV")
    p.add_argument("--rate", type=float, required=True, help="fraction of the group's positives to flip")
    p.add_argument("--group", type=int, required=True, choices=(0, 1), help="group whose labels are corrupted")
    p.add_argument("--seed", type=int, default=None,
                   help=f"flip-selection seed (default: {ENV_SEED} or 0)")
    p.add_argument("--save-spec", type=str, default=None,
                   help="also write the noise spec JSON to this path")
    p.set_defaults(handler=_cmd_inject)

    p = sub.add_parser("audit", help="measure a dataset's subgroup separability",
                       description="Train a group classifier on part of the dataset and report "
                                   "its AUC on the rest; writes metrics.csv and model.json under --out.")
    p.add_argument("--data", type=str, required=True, help="dataset CSV to audit")
    p.add_argument("--arch", choices=("linear", "mlp"), default="linear",
                   help="group classifier architecture (default: linear)")
    p.add_argument("--test-fraction", type=float, default=0.5,
                   help="fraction of rows held out for measuring AUC (default: 0.5)")
    p.add_argument("--seed", type=int, default=None,
                   help=f"split and training seed (default: {ENV_SEED} or 0)")
    p.add_argument("--out", type=str, required=True, help="output directory")
    _add_train_flags(p, tc_defaults)
    p.set_defaults(handler=_cmd_audit)

    p = sub.add_parser("train", help="train a classifier on a dataset CSV",
                       description="Train on the observed labels (or the group column) and write "
                                   "model.json under --out.")
    p.add_argument("--data", type=str, required=True, help="training dataset CSV")
    p.add_argument("--target", choices=("observed_label", "group"), default="observed_label",
                   help="column to predict (default: observed_label)")
    p.add_argument("--arch", choices=("linear", "mlp"), required=True, help="model architecture")
    p.add_argument("--seed", type=int, default=None,
                   help=f"training seed (default: {ENV_SEED} or 0)")
    p.add_argument("--out", type=str, required=True, help="output directory")
    _add_train_flags(p, tc_defaults)
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a trained model on a dataset CSV",
                       description="Score a saved model against true labels on a clean dataset; "
                                   "writes metrics.csv under --out and prints a per-group table.")
    p.add_argument("--data", type=str, required=True, help="evaluation dataset CSV (clean labels)")
    p.add_argument("--model", type=str, required=True, help="model JSON written by train")
    p.add_argument("--threshold", type=float, default=DECISION_THRESHOLD,
                   help=f"decision threshold (default: {DECISION_THRESHOLD})")
    p.add_argument("--out", type=str, required=True, help="output directory")
    p.set_defaults(handler=_cmd_evaluate)

    p = sub.add_parser("experiment", help="run one of the four experiment kinds",
                       description="Run an experiment sweep and persist config.json, results.csv, "
                                   "tests.csv, summary.json and plotdata/ under --out.")
    p.add_argument("kind", choices=("audit", "degradation", "ablation", "split"),
                   help="experiment kind")
    p.add_argument("--config", type=str, default=None, help="experiment config JSON (may be partial)")
    p.add_argument("--out", type=str, default=None, help="run output directory")
    p.add_argument("--jobs", type=int, default=None,
                   help=f"parallel worker cap (default: {exp_defaults.jobs})")
    p.add_argument("--master-seed", type=int, default=None,
                   help=f"seed all unit seeds derive from (default: {ENV_SEED} or {exp_defaults.master_seed})")
    p.add_argument("--targets", type=_parse_float_list, default=None, metavar="T1,T2,...",
                   help="separability targets (default: "
                        f"{','.join(repr(t) for t in exp_defaults.separability_targets)})")
    p.add_argument("--rates", type=_parse_float_list, default=None, metavar="R1,R2,...",
                   help="noise rates; degradation and split use the first (default: "
                        f"{','.join(repr(r) for r in exp_defaults.noise_rates)})")
    p.add_argument("--n-train", type=int, default=None,
                   help=f"training samples per unit (default: {exp_defaults.n_train})")
    p.add_argument("--n-test", type=int, default=None,
                   help=f"evaluation samples per unit (default: {exp_defaults.n_test})")
    p.add_argument("--n-seeds", type=int, default=None,
                   help=f"seeds per target (default: {exp_defaults.n_seeds})")
    p.add_argument("--arch", choices=("linear", "mlp"), default=None,
                   help=f"model architecture (default: {exp_defaults.arch})")
    p.add_argument("--target-group", type=int, choices=(0, 1), default=None,
                   help=f"group whose labels get corrupted (default: {exp_defaults.target_group})")
    p.add_argument("--alpha", type=float, default=None,
                   help=f"significance level (default: {exp_defaults.alpha})")
    p.add_argument("--disease-auc", type=float, default=None,
                   help=f"disease signal strength (default: {exp_defaults.disease_auc})")
    p.add_argument("--group-prior", type=float, default=None,
                   help=f"probability of group 1 (default: {exp_defaults.group_prior})")
    p.add_argument("--class-prior", type=_parse_pair, default=None, metavar="P0,P1",
                   help="per-group positive rates (default: "
                        f"{exp_defaults.class_prior[0]},{exp_defaults.class_prior[1]})")
    p.add_argument("--noise-scale", type=float, default=None,
                   help=f"isotropic feature noise scale (default: {exp_defaults.noise_scale})")
    p.add_argument("--dim", type=int, default=None,
                   help=f"feature dimension (default: {exp_defaults.dim})")
    p.add_argument("--dataset-csv", type=str, default=None,
                   help="run on this dataset instead of the synthetic sweep (default: none)")
    _add_train_flags(p, exp_defaults.train_config)
    p.set_defaults(handler=_cmd_experiment)

    p = sub.add_parser("report", help="render a persisted run as a text table and figures",
                       description="Load a run directory, verify its integrity, print an aligned "
                                   "summary table, and render PNG figures under <run>/figures.")
    p.add_argument("--run", type=str, required=True, help="run directory written by experiment")
    p.set_defaults(handler=_cmd_report)

    return parser


def _seed_or_default(value: int | None) -> int:
    if value is not None:
        return value
    env = _env_seed()
    return env if env is not None else 0


# --- subcommand handlers ---


def _cmd_generate(args) -> int:
    if args.spec is not None:
        spec = load_population_spec(args.spec)
    else:
        if args.auc is None:
            raise _UsageError("generate needs --auc (or --spec)")
        spec = population_for_targets(
            args.auc,
            args.disease_auc,
            dim=args.dim,
            group_prior=args.group_prior,
            class_prior=tuple(args.class_prior),
            noise_scale=args.noise_scale,
            axis_angle_deg=args.axis_angle,
        )
    seed = _seed_or_default(args.seed)
    dataset = sample_population(spec, args.n, seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    data_path = out_dir / "data.csv"
    save_dataset_csv(dataset, data_path)
    save_population_spec(spec, out_dir / "population_spec.json")
    print(f"wrote {len(dataset)} rows to {data_path} (seed {seed})")
    return 0


def _cmd_inject(args) -> int:
    dataset = load_dataset_csv(args.in_path)
    spec = NoiseSpec(target_group=args.group, rate=args.rate, seed=_seed_or_default(args.seed))
    corrupted = inject_underdiagnosis(dataset, spec)
    flipped = int(np.count_nonzero(corrupted.observed_label != dataset.observed_label))
    out_path = Path(args.out)
    if out_path.parent != Path(""):
        out_path.parent.mkdir(parents=True, exist_ok=True)
    save_dataset_csv(corrupted, out_path)
    if args.save_spec is not None:
        save_noise_spec(spec, args.save_spec)
    print(f"flipped {flipped} observed labels (group {spec.target_group}, rate {spec.rate:g}); "
          f"wrote {out_path}")
    return 0


def _split_rows(dataset, test_fraction: float, seed: int):
    from .errors import DomainError

    if not 0.0 < test_fraction < 1.0:
        raise DomainError(f"test fraction must lie strictly in (0, 1), got {test_fraction!r}")
    n = len(dataset)
    n_test = int(round(test_fraction * n))
    n_test = min(max(n_test, 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    from .experiments import _subset

    return _subset(dataset, perm[n_test:]), _subset(dataset, perm[:n_test])


def _write_metrics_csv(path: Path, report, run_id: str, seed: int) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_CSV_COLUMNS)
        writer.writerows(metrics_csv_rows(report, run_id, seed))


def _cmd_audit(args) -> int:
    dataset = load_dataset_csv(args.data)
    seed = _seed_or_default(args.seed)
    train, test = _split_rows(dataset, args.test_fraction, seed)
    config = _train_config_from_args(args, TrainConfig(), seed)
    model = train_classifier(train, "group", args.arch, config)
    scores = predict_proba(model, test.features)
    preds = (scores > DECISION_THRESHOLD).astype(np.int64)
    report = group_metrics(preds, scores, test.group, test.group, threshold=DECISION_THRESHOLD)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_metrics_csv(out_dir / "metrics.csv", report, "audit", seed)
    save_model(model, out_dir / "model.json")
    auc = report.overall.auc
    print(f"measured separability (group AUC): {auc:.4f}" if auc is not None
          else "measured separability (group AUC): n/a")
    return 0


def _cmd_train(args) -> int:
    dataset = load_dataset_csv(args.data)
    seed = _seed_or_default(args.seed)
    config = _train_config_from_args(args, TrainConfig(), seed)
    model = train_classifier(dataset, args.target, args.arch, config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    model_path = out_dir / "model.json"
    save_model(model, model_path)
    print(f"trained {args.arch} classifier on {len(dataset)} rows (target {args.target}); "
          f"wrote {model_path}")
    return 0


def _cmd_evaluate(args) -> int:
    dataset = load_dataset_csv(args.data)
    mismatched = int(np.count_nonzero(dataset.observed_label != dataset.true_label))
    if mismatched:
        raise IntegrityError(
            f"evaluation data has {mismatched} rows whose observed label differs from the "
            "true label; evaluate on clean labels"
        )
    model = load_model(args.model)
    scores = predict_proba(model, dataset.features)
    preds = (scores > args.threshold).astype(np.int64)
    report = group_metrics(preds, scores, dataset.true_label, dataset.group, threshold=args.threshold)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_metrics_csv(out_dir / "metrics.csv", report, "evaluate", 0)

    def _cell(v, fmt="{:.4f}"):
        return "n/a" if v is None else fmt.format(v)

    headers = ["slice", "n_pos", "n_neg", "tpr", "accuracy", "auc"]
    rows = []
    for key in sorted(report.groups) + ["overall"]:
        gm = report.overall if key == "overall" else report.groups[key]
        label = "overall" if key == "overall" else f"group {key}"
        rows.append([label, str(gm.n_pos), str(gm.n_neg), _cell(gm.tpr), _cell(gm.accuracy), _cell(gm.auc)])
    for line in _aligned_table(headers, rows):
        print(line)
    return 0


def _cmd_experiment(args) -> int:
    payload: dict = {}
    env = _env_seed()
    if env is not None:
        payload["master_seed"] = env
    if args.config is not None:
        try:
            file_payload = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise _UsageError(f"config file is not valid JSON: {exc}") from None
        if not isinstance(file_payload, dict):
            raise _UsageError("config file must hold a JSON object")
        payload.update(file_payload)

    flag_map = {
        "separability_targets": args.targets,
        "noise_rates": args.rates,
        "n_train": args.n_train,
        "n_test": args.n_test,
        "n_seeds": args.n_seeds,
        "arch": args.arch,
        "target_group": args.target_group,
        "alpha": args.alpha,
        "master_seed": args.master_seed,
        "disease_auc": args.disease_auc,
        "group_prior": args.group_prior,
        "class_prior": args.class_prior,
        "noise_scale": args.noise_scale,
        "dim": args.dim,
        "dataset_csv": args.dataset_csv,
        "output_dir": args.out,
        "jobs": args.jobs,
    }
    for field, value in flag_map.items():
        if value is not None:
            payload[field] = list(value) if isinstance(value, tuple) else value

    tc_payload = dict(payload.get("train_config") or {})
    for _, field, _, _ in _TRAIN_FLAGS:
        value = getattr(args, f"tc_{field}")
        if value is not None:
            tc_payload[field] = value
    if tc_payload:
        payload["train_config"] = tc_payload

    config = ExperimentConfig.from_json_dict(payload)
    if config.output_dir is None:
        raise _UsageError("experiment needs an output directory: pass --out or set output_dir in --config")

    result = _EXPERIMENT_RUNNERS[args.kind](config)
    run_dir = persist_run(result)
    print(f"{args.kind} experiment finished: {len(result.records)} runs, "
          f"{len(result.tests)} statistical tests; wrote {run_dir}")
    return 0


def _aligned_table(headers: list[str], rows: list[list[str]]) -> list[str]:
    widths = [
        max(len(headers[i]), *(len(row[i]) for row in rows)) if rows else len(headers[i])
        for i in range(len(headers))
    ]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return lines


def _fmt_sep(value) -> str:
    return "data" if value is None else f"{value:.4f}"


def _fmt_delta(mean, sd, significant=None) -> str:
    if mean is None:
        return "n/a"
    text = f"{mean:+.2f}"
    if sd is not None:
        text += f" ({sd:.2f})"
    if significant:
        text += "*"
    return text


def _fmt_p(value) -> str:
    return "n/a" if value is None else f"{value:.4g}"


def _report_lines(result) -> list[str]:
    cfg = result.config
    lines = [
        f"kind: {result.kind}",
        f"config fingerprint: {cfg.fingerprint()}",
        f"n_train={cfg.n_train} n_test={cfg.n_test} n_seeds={cfg.n_seeds} arch={cfg.arch}",
        "",
    ]
    summary = result.summary
    if result.kind == "audit":
        rows = [
            [_fmt_sep(row["target"]), f"{row['auc_mean']:.4f}", f"{row['auc_sd']:.4f}", str(row["n_seeds"])]
            for row in summary["table"]
        ]
        lines += _aligned_table(["target", "measured AUC", "sd", "seeds"], rows)
    elif result.kind == "degradation":
        lines.append(f"label-bias rate: {summary['rho']:g} on group {cfg.target_group}; "
                     "deltas are biased minus clean, percentage points; * = significant after "
                     "step-down adjustment")
        lines.append("")
        rows = []
        for entry in summary["per_target"]:
            g0 = entry["groups"]["0"]
            g1 = entry["groups"]["1"]
            overall = entry["groups"]["overall"]
            rows.append([
                _fmt_sep(entry["separability"]),
                _fmt_delta(g0["acc_delta_mean"], g0["acc_delta_sd"], g0.get("acc_significant")),
                _fmt_delta(g1["acc_delta_mean"], g1["acc_delta_sd"], g1.get("acc_significant")),
                _fmt_delta(g0["tpr_delta_mean"], g0["tpr_delta_sd"], g0.get("tpr_significant")),
                _fmt_delta(g1["tpr_delta_mean"], g1["tpr_delta_sd"], g1.get("tpr_significant")),
                _fmt_delta(overall["acc_delta_mean"], overall["acc_delta_sd"], overall.get("acc_significant")),
                _fmt_p(entry["between"]["acc_p_adj"]),
            ])
        lines += _aligned_table(
            ["separability", "g0 acc", "g1 acc", "g0 tpr", "g1 tpr", "overall acc", "between p(acc)"],
            rows,
        )
    elif result.kind == "ablation":
        lines.append(f"accuracy delta (pp) for group {cfg.target_group}, by separability and rate")
        lines.append("")
        rhos = summary["rhos"]
        by_sep: dict = {}
        sep_order = []
        for cell in summary["grid"]:
            key = cell["separability"]
            if key not in by_sep:
                by_sep[key] = {}
                sep_order.append(key)
            delta = cell["groups"][str(cfg.target_group)]["acc_delta_mean"]
            by_sep[key][cell["rho"]] = delta
        sep_order.sort(key=lambda v: (v is None, v))
        rows = []
        for sep in sep_order:
            row = [_fmt_sep(sep)]
            for rho in rhos:
                delta = by_sep[sep].get(rho)
                row.append("n/a" if delta is None else f"{delta:+.2f}")
            rows.append(row)
        lines += _aligned_table(["separability"] + [f"rate {r:g}" for r in rhos], rows)
        lines.append("")
        lines.append("separability-vs-delta association per rate:")
        for entry in summary["kendall_by_rho"]:
            if entry["skipped"]:
                lines.append(f"  rate {entry['rho']:g}: skipped ({entry['note']})")
            else:
                star = "*" if entry["significant"] else ""
                lines.append(f"  rate {entry['rho']:g}: tau={entry['tau']:+.3f} "
                             f"p_adj={_fmt_p(entry['p_adj'])}{star} (n={entry['n_points']})")
    elif result.kind == "split":
        lines.append(f"frozen-probe group AUC vs measured separability (bias rate {summary['rho']:g})")
        lines.append("")
        rows = []
        for entry in summary["per_target"]:
            clean = entry["arms"]["clean"]
            biased = entry["arms"]["biased"]
            rows.append([
                _fmt_sep(entry["target"]),
                f"{entry['sep_auc_mean']:.4f}",
                f"{clean['split_auc_mean']:.4f} ({clean['split_auc_sd']:.4f})",
                f"{biased['split_auc_mean']:.4f} ({biased['split_auc_sd']:.4f})",
            ])
        lines += _aligned_table(["target", "measured sep", "clean probe", "biased probe"], rows)
        lines.append("")
        for arm in ("clean", "biased"):
            entry = summary["association"][arm]
            if entry.get("skipped"):
                lines.append(f"{arm}: association skipped ({entry['note']})")
            else:
                star = "*" if entry["significant"] else ""
                lines.append(f"{arm}: tau={entry['tau']:+.3f} p_adj={_fmt_p(entry['p_adj'])}{star} "
                             f"(n={entry['n_points']})")
        ceiling = summary["ceiling"]
        lines.append("max probe AUC above measured separability: "
                     f"clean {ceiling['max_split_minus_sep_clean']:+.4f}, "
                     f"biased {ceiling['max_split_minus_sep_biased']:+.4f}")
    return lines


def _cmd_report(args) -> int:
    result = load_run(args.run)
    for line in _report_lines(result):
        print(line)
    paths = render_result_figures(result, args.run)
    print("")
    for path in paths:
        print(f"figure: {path}")
    return 0


def main(argv=None) -> int:
    try:
        parser = _build_parser()
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)
    try:
        return args.handler(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except IntegrityError as exc:
        print(f"error: {' '.join(str(exc).split())}", file=sys.stderr)
        return 2
    except SepbiasError as exc:
        print(f"error: {' '.join(str(exc).split())}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())

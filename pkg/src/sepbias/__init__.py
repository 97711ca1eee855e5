"""Subgroup separability and label-bias analysis toolkit.

Synthetic two-group Gaussian populations with a dialable group-classifier
AUC, one-directional label corruption targeting a single group, closed-form
posterior oracles for the clean and corrupted populations, small from-scratch
classifiers, per-group evaluation metrics, nonparametric statistics, and an
experiment harness with deterministic persisted runs.
"""

from .biasinject import NoiseSpec, inject_underdiagnosis, load_noise_spec, save_noise_spec
from .datagen import (
    Dataset,
    PopulationSpec,
    Sample,
    auc_for_separation,
    load_dataset_csv,
    load_population_spec,
    population_for_targets,
    sample_population,
    save_dataset_csv,
    save_population_spec,
    separation_for_auc,
)
from .errors import (
    DegenerateDatasetError,
    DegenerateLabelsError,
    DegenerateTargetError,
    DomainError,
    IncompatibleReportsError,
    IntegrityError,
    SchemaError,
    SepbiasError,
    TrainingFailureError,
    UnsupportedArchitectureError,
)
from .experiments import (
    ExperimentConfig,
    ExperimentResult,
    RunRecord,
    load_run,
    persist_run,
    run_degradation_experiment,
    run_noise_ablation,
    run_separability_audit,
    run_split_experiment,
)
from .figures import render_result_figures, render_run_figures
from .learner import (
    LinearModel,
    MlpModel,
    TrainConfig,
    check_gradients,
    load_model,
    predict,
    predict_proba,
    representation,
    save_model,
    split_probe,
    train_classifier,
)
from .metrics import (
    DegradationReport,
    GroupDelta,
    GroupMetrics,
    MetricsReport,
    degradation,
    group_metrics,
    metrics_csv_rows,
    roc_auc,
)
from .oracle import (
    PosteriorBundle,
    TprEstimate,
    biased_posteriors,
    posteriors,
    theoretical_tpr,
)
from .stats import (
    TestResult,
    holm_bonferroni,
    kendall_tau,
    mann_whitney_u,
    midranks,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # errors
    "SepbiasError", "DomainError", "SchemaError", "DegenerateDatasetError",
    "DegenerateTargetError", "DegenerateLabelsError", "TrainingFailureError",
    "UnsupportedArchitectureError", "IncompatibleReportsError", "IntegrityError",
    # datagen
    "PopulationSpec", "Sample", "Dataset", "auc_for_separation", "separation_for_auc",
    "population_for_targets", "sample_population", "save_dataset_csv", "load_dataset_csv",
    "save_population_spec", "load_population_spec",
    # biasinject
    "NoiseSpec", "inject_underdiagnosis", "save_noise_spec", "load_noise_spec",
    # oracle
    "PosteriorBundle", "TprEstimate", "posteriors", "biased_posteriors", "theoretical_tpr",
    # learner
    "TrainConfig", "LinearModel", "MlpModel", "train_classifier", "predict_proba",
    "predict", "representation", "split_probe", "check_gradients", "save_model", "load_model",
    # metrics
    "GroupMetrics", "MetricsReport", "GroupDelta", "DegradationReport", "roc_auc",
    "group_metrics", "degradation", "metrics_csv_rows",
    # stats
    "TestResult", "midranks", "mann_whitney_u", "holm_bonferroni", "kendall_tau",
    # experiments
    "ExperimentConfig", "RunRecord", "ExperimentResult", "run_separability_audit",
    "run_degradation_experiment", "run_noise_ablation", "run_split_experiment",
    "persist_run", "load_run",
    # figures
    "render_result_figures", "render_run_figures",
]

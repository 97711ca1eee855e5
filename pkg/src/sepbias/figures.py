"""Rendering of persisted experiment runs to PNG figures.

Everything here draws from the verified structures that load_run returns, so
a tampered run directory fails integrity checks before any figure is drawn.
The Agg backend is forced because runs render headlessly.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .experiments import ExperimentResult, load_run

__all__ = ["render_result_figures", "render_run_figures"]

_DPI = 150


def _finite(pairs):
    return [(x, y) for x, y in pairs if x is not None and y is not None]


def _render_audit(result: ExperimentResult, fig_dir: Path) -> list[Path]:
    table = result.summary["table"]
    fig, ax = plt.subplots(figsize=(6, 4.5))
    measured = [row["auc_mean"] for row in table]
    sds = [row["auc_sd"] for row in table]
    targets = [row["target"] for row in table]
    if any(t is None for t in targets):
        ax.errorbar(range(len(measured)), measured, yerr=sds, fmt="o", capsize=3)
        ax.set_xticks(range(len(measured)))
        ax.set_xticklabels(["data"] * len(measured))
        ax.set_xlabel("dataset")
    else:
        ax.errorbar(targets, measured, yerr=sds, fmt="o", capsize=3, label="measured")
        lo = min(min(targets), min(measured))
        hi = max(max(targets), max(measured))
        ax.plot([lo, hi], [lo, hi], ls="--", c="gray", lw=1, label="target = measured")
        ax.set_xlabel("separability target (group AUC)")
        ax.legend()
    ax.set_ylabel("measured group AUC")
    ax.set_title("Separability audit")
    path = fig_dir / "separability_audit.png"
    fig.savefig(path, dpi=_DPI, bbox_inches="tight")
    plt.close(fig)
    return [path]


def _render_degradation(result: ExperimentResult, fig_dir: Path) -> list[Path]:
    per_target = result.summary["per_target"]
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    for g, color, marker in (("0", "tab:blue", "o"), ("1", "tab:red", "s")):
        pts = [
            (row["separability"], row["groups"][g]["acc_delta_mean"], row["groups"][g]["acc_delta_sd"],
             row["groups"][g].get("acc_significant"))
            for row in per_target
        ]
        pts = [p for p in pts if p[0] is not None and p[1] is not None]
        if not pts:
            continue
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        es = [p[2] or 0.0 for p in pts]
        ax.errorbar(xs, ys, yerr=es, marker=marker, color=color, capsize=3, label=f"group {g}")
        for x, y, _, sig in pts:
            if sig:
                ax.annotate("*", (x, y), textcoords="offset points", xytext=(0, 6),
                            ha="center", color=color, fontsize=12)
    ax.axhline(0.0, color="gray", lw=1, ls=":")
    ax.set_xlabel("subgroup separability (group AUC)")
    ax.set_ylabel("accuracy change under label bias (pp)")
    ax.set_title(f"Per-group accuracy degradation (rate {result.summary['rho']:g})")
    ax.legend()
    path = fig_dir / "accuracy_deltas.png"
    fig.savefig(path, dpi=_DPI, bbox_inches="tight")
    plt.close(fig)
    return [path]


def _render_ablation(result: ExperimentResult, fig_dir: Path) -> list[Path]:
    grid = result.summary["grid"]
    rhos = result.summary["rhos"]
    target_group = str(result.config.target_group)
    other_group = "0" if target_group == "1" else "1"
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    cmap = plt.get_cmap("viridis")
    for i, rho in enumerate(rhos):
        color = cmap(i / max(1, len(rhos) - 1))
        cells = [c for c in grid if c["rho"] == rho]
        tgt = _finite([(c["separability"], c["groups"][target_group]["acc_delta_mean"]) for c in cells])
        oth = _finite([(c["separability"], c["groups"][other_group]["acc_delta_mean"]) for c in cells])
        if tgt:
            ax.plot([p[0] for p in tgt], [p[1] for p in tgt], marker="o", color=color,
                    label=f"rate {rho:g}")
        if oth:
            ax.plot([p[0] for p in oth], [p[1] for p in oth], marker=".", color=color,
                    ls=":", alpha=0.6)
    ax.axhline(0.0, color="gray", lw=1, ls=":")
    ax.set_xlabel("subgroup separability (group AUC)")
    ax.set_ylabel("accuracy change (pp)")
    ax.set_title(f"Noise-rate ablation, group {target_group} solid / group {other_group} dotted")
    ax.legend(fontsize=8)
    path = fig_dir / "ablation_grid.png"
    fig.savefig(path, dpi=_DPI, bbox_inches="tight")
    plt.close(fig)
    return [path]


def _render_split(result: ExperimentResult, fig_dir: Path) -> list[Path]:
    points = result.summary["points"]
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for arm, color, marker in (("clean", "tab:blue", "o"), ("biased", "tab:red", "s")):
        arm_points = [p for p in points if p["arm"] == arm]
        ax.scatter(
            [p["separability"] for p in arm_points],
            [p["split_auc"] for p in arm_points],
            c=color, marker=marker, s=24, alpha=0.7, label=f"{arm} model",
        )
    xs = [p["separability"] for p in points]
    if xs:
        lo, hi = min(min(xs), 0.5), max(max(xs), 1.0)
        ax.plot([lo, hi], [lo, hi], ls="--", c="gray", lw=1, label="probe = separability")
    ax.set_xlabel("measured separability (group AUC)")
    ax.set_ylabel("frozen-probe group AUC")
    ax.set_title("Group information encoded by trained models")
    ax.legend()
    path = fig_dir / "split_probe.png"
    fig.savefig(path, dpi=_DPI, bbox_inches="tight")
    plt.close(fig)
    return [path]


_RENDERERS = {
    "audit": _render_audit,
    "degradation": _render_degradation,
    "ablation": _render_ablation,
    "split": _render_split,
}


def render_result_figures(result: ExperimentResult, run_dir: str | Path) -> list[Path]:
    """Render a result's figures into <run_dir>/figures, returning their paths."""
    fig_dir = Path(run_dir) / "figures"
    fig_dir.mkdir(parents=True, exist_ok=True)
    return _RENDERERS[result.kind](result, fig_dir)


def render_run_figures(run_dir: str | Path) -> list[Path]:
    """Load a persisted run (verifying integrity) and render its figures."""
    return render_result_figures(load_run(run_dir), run_dir)

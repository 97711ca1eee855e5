"""Synthetic two-group, two-class populations with a dialable separability knob.

Each sample carries a binary group attribute ``a`` and a binary label ``y``.
Features are drawn as

    x = (a - 1/2) * group_separation * group_axis
      + (y - 1/2) * disease_separation * disease_axis
      + noise_scale * eps,          eps ~ N(0, I)

so the group signal and the label signal live on two fixed directions (unit
vectors, orthogonal by default) on top of isotropic Gaussian noise. For two
equal-covariance isotropic Gaussians whose means are ``delta`` apart, the AUC
of the optimal discriminator is ``Phi(delta / (sigma * sqrt(2)))``, which makes
subgroup separability a quantity you set rather than one you hope for.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import DegenerateDatasetError, DomainError, SchemaError

__all__ = [
    "PopulationSpec",
    "Sample",
    "Dataset",
    "auc_for_separation",
    "separation_for_auc",
    "population_for_targets",
    "sample_population",
    "save_dataset_csv",
    "load_dataset_csv",
    "save_population_spec",
    "load_population_spec",
]

# Maximum deviation from unit norm tolerated for the two signal axes.
UNIT_NORM_TOL = 1e-12

_LABEL_COLUMNS = ("group", "true_label", "observed_label")


def _require_finite_float(name: str, value: float) -> float:
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise DomainError(f"{name} must be a real number, got {value!r}") from None
    if not math.isfinite(out):
        raise DomainError(f"{name} must be finite, got {out!r}")
    return out


@dataclass(frozen=True)
class PopulationSpec:
    """Parameters of the generative family described in the module docstring.

    ``group_prior`` is P(a = 1); ``class_prior[a]`` is P(y = 1 | a). Both axes
    must be unit vectors of length ``dim``. Separations are the distances
    between the two group (respectively class) conditional means.
    """

    dim: int = 2
    group_prior: float = 0.5
    class_prior: tuple[float, float] = (0.5, 0.5)
    group_separation: float = 0.0
    disease_separation: float = 0.0
    group_axis: tuple[float, ...] = (1.0, 0.0)
    disease_axis: tuple[float, ...] = (0.0, 1.0)
    noise_scale: float = 1.0

    def __post_init__(self) -> None:
        if not isinstance(self.dim, int) or isinstance(self.dim, bool) or self.dim < 1:
            raise DomainError(f"dim must be a positive integer, got {self.dim!r}")
        gp = _require_finite_float("group_prior", self.group_prior)
        if not 0.0 < gp < 1.0:
            raise DomainError(f"group_prior must lie strictly in (0, 1), got {gp}")
        object.__setattr__(self, "group_prior", gp)
        if len(self.class_prior) != 2:
            raise DomainError("class_prior must hold exactly two values, one per group")
        cp = tuple(_require_finite_float(f"class_prior[{i}]", v) for i, v in enumerate(self.class_prior))
        for i, v in enumerate(cp):
            if not 0.0 < v < 1.0:
                raise DomainError(f"class_prior[{i}] must lie strictly in (0, 1), got {v}")
        object.__setattr__(self, "class_prior", cp)
        for name in ("group_separation", "disease_separation"):
            v = _require_finite_float(name, getattr(self, name))
            if v < 0.0:
                raise DomainError(f"{name} must be nonnegative, got {v}")
            object.__setattr__(self, name, v)
        ns = _require_finite_float("noise_scale", self.noise_scale)
        if ns <= 0.0:
            raise DomainError(f"noise_scale must be positive, got {ns}")
        object.__setattr__(self, "noise_scale", ns)
        for name in ("group_axis", "disease_axis"):
            axis = tuple(_require_finite_float(f"{name}[{i}]", v) for i, v in enumerate(getattr(self, name)))
            if len(axis) != self.dim:
                raise DomainError(f"{name} must have length dim={self.dim}, got {len(axis)}")
            norm = math.sqrt(sum(v * v for v in axis))
            if abs(norm - 1.0) > UNIT_NORM_TOL:
                raise DomainError(f"{name} must be a unit vector, got norm {norm!r}")
            object.__setattr__(self, name, axis)

    def mean(self, group: int, label: int) -> np.ndarray:
        """Conditional feature mean for the (group, label) cell."""
        if group not in (0, 1) or label not in (0, 1):
            raise DomainError(f"group and label must be 0 or 1, got ({group!r}, {label!r})")
        g = np.asarray(self.group_axis, dtype=np.float64)
        d = np.asarray(self.disease_axis, dtype=np.float64)
        return (group - 0.5) * self.group_separation * g + (label - 0.5) * self.disease_separation * d

    def cell_prior(self, group: int, label: int) -> float:
        """P(a = group, y = label) under the spec."""
        pa = self.group_prior if group == 1 else 1.0 - self.group_prior
        py = self.class_prior[group] if label == 1 else 1.0 - self.class_prior[group]
        return pa * py

    def to_json_dict(self) -> dict:
        return {
            "dim": self.dim,
            "group_prior": self.group_prior,
            "class_prior": list(self.class_prior),
            "group_separation": self.group_separation,
            "disease_separation": self.disease_separation,
            "group_axis": list(self.group_axis),
            "disease_axis": list(self.disease_axis),
            "noise_scale": self.noise_scale,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "PopulationSpec":
        if not isinstance(data, dict):
            raise SchemaError(f"population spec must be a JSON object, got {type(data).__name__}")
        expected = set(cls.__dataclass_fields__)
        missing = expected - set(data)
        if missing:
            raise SchemaError(f"population spec missing field(s): {', '.join(sorted(missing))}")
        unknown = set(data) - expected
        if unknown:
            raise SchemaError(f"population spec has unknown field(s): {', '.join(sorted(unknown))}")
        try:
            return cls(
                dim=data["dim"],
                group_prior=data["group_prior"],
                class_prior=tuple(data["class_prior"]),
                group_separation=data["group_separation"],
                disease_separation=data["disease_separation"],
                group_axis=tuple(data["group_axis"]),
                disease_axis=tuple(data["disease_axis"]),
                noise_scale=data["noise_scale"],
            )
        except TypeError as exc:
            raise SchemaError(f"population spec is malformed: {exc}") from None

    def fingerprint(self) -> str:
        """Content hash of the spec (sha256 over its canonical JSON form)."""
        canonical = json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class Sample:
    features: tuple[float, ...]
    group: int
    true_label: int
    observed_label: int


@dataclass
class Dataset:
    """Columnar store of samples.

    ``observed_label`` equals ``true_label`` unless a corruption step rewrote
    it. Arrays are validated on construction; group and labels must be binary.
    """

    features: np.ndarray
    group: np.ndarray
    true_label: np.ndarray
    observed_label: np.ndarray
    seed: int | None = None
    spec_fingerprint: str | None = None

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise DomainError(f"features must be a 2-d array, got shape {self.features.shape}")
        n = self.features.shape[0]
        if not np.all(np.isfinite(self.features)):
            raise DomainError("features must be finite")
        for name in ("group", "true_label", "observed_label"):
            col = np.asarray(getattr(self, name))
            if col.shape != (n,):
                raise DomainError(f"{name} must have shape ({n},), got {col.shape}")
            col = col.astype(np.int64)
            if not np.isin(col, (0, 1)).all():
                raise DomainError(f"{name} entries must be 0 or 1")
            setattr(self, name, col)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def samples(self) -> list[Sample]:
        return [
            Sample(
                features=tuple(float(v) for v in self.features[i]),
                group=int(self.group[i]),
                true_label=int(self.true_label[i]),
                observed_label=int(self.observed_label[i]),
            )
            for i in range(len(self))
        ]

    def cell_count(self, group: int, label: int) -> int:
        """Number of samples with the given (group, true_label) pair."""
        return int(np.count_nonzero((self.group == group) & (self.true_label == label)))

    def copy(self) -> "Dataset":
        return Dataset(
            features=self.features.copy(),
            group=self.group.copy(),
            true_label=self.true_label.copy(),
            observed_label=self.observed_label.copy(),
            seed=self.seed,
            spec_fingerprint=self.spec_fingerprint,
        )


def auc_for_separation(delta: float, sigma: float) -> float:
    """Bayes AUC for two isotropic Gaussians with means ``delta`` apart.

    The projection onto the line joining the means is sufficient, so the AUC
    equals Phi(delta / (sigma * sqrt(2))). Returns a value in [0.5, 1.0).
    """
    delta = _require_finite_float("delta", delta)
    sigma = _require_finite_float("sigma", sigma)
    if delta < 0.0:
        raise DomainError(f"delta must be nonnegative, got {delta}")
    if sigma <= 0.0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    return float(ndtr(delta / (sigma * math.sqrt(2.0))))


def separation_for_auc(target_auc: float, sigma: float) -> float:
    """Inverse of :func:`auc_for_separation`: the mean gap achieving a target AUC.

    Requires 0.5 <= target_auc < 1.0 (an AUC of exactly 1 needs an infinite
    separation).
    """
    target_auc = _require_finite_float("target_auc", target_auc)
    sigma = _require_finite_float("sigma", sigma)
    if sigma <= 0.0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    if not 0.5 <= target_auc < 1.0:
        raise DomainError(f"target_auc must lie in [0.5, 1.0), got {target_auc}")
    return float(sigma * math.sqrt(2.0) * ndtri(target_auc))


def population_for_targets(
    group_auc: float,
    disease_auc: float,
    *,
    dim: int = 2,
    group_prior: float = 0.5,
    class_prior: tuple[float, float] = (0.5, 0.5),
    noise_scale: float = 1.0,
    axis_angle_deg: float = 90.0,
) -> PopulationSpec:
    """Build a spec whose group and label signals hit the requested Bayes AUCs.

    The group axis is the first coordinate direction; the disease axis is
    rotated ``axis_angle_deg`` away from it inside the first coordinate plane
    (90 degrees, the default, keeps the two signals disentangled; the analytic
    AUC calibration for the group signal is exact only in that case).
    """
    if not isinstance(dim, int) or isinstance(dim, bool) or dim < 2:
        raise DomainError(f"dim must be an integer >= 2, got {dim!r}")
    angle = math.radians(_require_finite_float("axis_angle_deg", axis_angle_deg))
    group_axis = tuple(1.0 if i == 0 else 0.0 for i in range(dim))
    disease_axis = tuple(
        math.cos(angle) if i == 0 else (math.sin(angle) if i == 1 else 0.0) for i in range(dim)
    )
    return PopulationSpec(
        dim=dim,
        group_prior=group_prior,
        class_prior=tuple(class_prior),
        group_separation=separation_for_auc(group_auc, noise_scale),
        disease_separation=separation_for_auc(disease_auc, noise_scale),
        group_axis=group_axis,
        disease_axis=disease_axis,
        noise_scale=noise_scale,
    )


def sample_population(spec: PopulationSpec, n: int, seed: int) -> Dataset:
    """Draw ``n`` i.i.d. samples from ``spec``; deterministic given ``seed``.

    Observed labels start out equal to the true labels. Raises
    DegenerateDatasetError if any of the four (group, label) cells comes out
    empty; with cell priors bounded away from zero the chance of that is at
    most ``4 * (1 - p_min)**n`` where ``p_min`` is the smallest cell prior, so
    any n of a few hundred or more is comfortably safe at the default priors.
    """
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise DomainError(f"n must be a positive integer, got {n!r}")
    rng = np.random.default_rng(seed)
    group = (rng.random(n) < spec.group_prior).astype(np.int64)
    p_pos = np.asarray(spec.class_prior, dtype=np.float64)[group]
    label = (rng.random(n) < p_pos).astype(np.int64)
    eps = rng.standard_normal((n, spec.dim))
    g_axis = np.asarray(spec.group_axis, dtype=np.float64)
    d_axis = np.asarray(spec.disease_axis, dtype=np.float64)
    features = (
        (group - 0.5)[:, None] * spec.group_separation * g_axis
        + (label - 0.5)[:, None] * spec.disease_separation * d_axis
        + spec.noise_scale * eps
    )
    dataset = Dataset(
        features=features,
        group=group,
        true_label=label,
        observed_label=label.copy(),
        seed=int(seed),
        spec_fingerprint=spec.fingerprint(),
    )
    for g in (0, 1):
        for y in (0, 1):
            if dataset.cell_count(g, y) == 0:
                raise DegenerateDatasetError(
                    f"generated dataset has no samples with group={g}, true_label={y} "
                    f"(n={n}; raise n or move the priors away from the boundary)"
                )
    return dataset


def _fmt_float(value: float) -> str:
    # repr of a Python float is the shortest string that round-trips exactly.
    return repr(float(value))


def save_dataset_csv(dataset: Dataset, path: str | Path) -> None:
    """Write the dataset with columns feature_0..feature_{dim-1}, group, true_label, observed_label."""
    path = Path(path)
    header = [f"feature_{j}" for j in range(dataset.dim)] + list(_LABEL_COLUMNS)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(len(dataset)):
            row = [_fmt_float(v) for v in dataset.features[i]]
            row += [str(int(dataset.group[i])), str(int(dataset.true_label[i])), str(int(dataset.observed_label[i]))]
            writer.writerow(row)


def _parse_binary(value: str, column: str, line_no: int) -> int:
    if value == "0":
        return 0
    if value == "1":
        return 1
    raise SchemaError(f"line {line_no}: column '{column}' must be 0 or 1, got {value!r}")


def load_dataset_csv(path: str | Path) -> Dataset:
    """Read a dataset written by :func:`save_dataset_csv`.

    Columns are matched by name, so their order does not matter. Feature
    columns must be exactly feature_0..feature_{k-1} for some k >= 1. Schema
    violations raise SchemaError naming the offending line or column.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: file is empty") from None
        rows = list(reader)
    indices = sorted_feature_indices(header)
    missing = [c for c in _LABEL_COLUMNS if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing column(s): {', '.join(missing)}")
    if len(set(header)) != len(header):
        raise SchemaError(f"{path}: duplicate column names in header")
    col_of = {name: i for i, name in enumerate(header)}
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    dim = len(indices)
    n = len(rows)
    features = np.empty((n, dim), dtype=np.float64)
    group = np.empty(n, dtype=np.int64)
    true_label = np.empty(n, dtype=np.int64)
    observed_label = np.empty(n, dtype=np.int64)
    for i, row in enumerate(rows):
        line_no = i + 2  # header is line 1
        if len(row) != len(header):
            raise SchemaError(f"{path}: line {line_no}: expected {len(header)} fields, got {len(row)}")
        for j in range(dim):
            raw = row[col_of[f"feature_{j}"]]
            try:
                value = float(raw)
            except ValueError:
                raise SchemaError(
                    f"{path}: line {line_no}: column 'feature_{j}' is not numeric: {raw!r}"
                ) from None
            if not math.isfinite(value):
                raise SchemaError(f"{path}: line {line_no}: column 'feature_{j}' must be finite, got {raw!r}")
            features[i, j] = value
        group[i] = _parse_binary(row[col_of["group"]], "group", line_no)
        true_label[i] = _parse_binary(row[col_of["true_label"]], "true_label", line_no)
        observed_label[i] = _parse_binary(row[col_of["observed_label"]], "observed_label", line_no)
    return Dataset(features=features, group=group, true_label=true_label, observed_label=observed_label)


def sorted_feature_indices(header: list[str]) -> list[int]:
    """Validate feature column names in a header and return their indices 0..k-1."""
    pattern = re.compile(r"feature_(\d+)$")
    found: dict[int, str] = {}
    for name in header:
        if name in _LABEL_COLUMNS:
            continue
        match = pattern.match(name)
        if match is None:
            raise SchemaError(f"unexpected column {name!r} (want feature_<i>, group, true_label, observed_label)")
        found[int(match.group(1))] = name
    if not found:
        raise SchemaError("no feature columns (need at least feature_0)")
    expected = set(range(len(found)))
    if set(found) != expected:
        raise SchemaError(
            f"feature columns must be contiguous feature_0..feature_{len(found) - 1}, "
            f"got {sorted(found)}"
        )
    return sorted(found)


def save_population_spec(spec: PopulationSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(spec.to_json_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_population_spec(path: str | Path) -> PopulationSpec:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON: {exc}") from None
    try:
        return PopulationSpec.from_json_dict(data)
    except DomainError as exc:
        raise SchemaError(f"{path}: {exc}") from None

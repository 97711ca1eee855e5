"""Group-targeted underdiagnosis noise.

The corruption model flips observed labels from 1 to 0, and only for samples
of one target group, so that the observed positive rate of that group becomes
(1 - rate) times its true positive rate. Labels are never flipped 0 -> 1 and
other groups are never touched.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .datagen import Dataset
from .errors import DegenerateTargetError, DomainError, SchemaError

__all__ = ["NoiseSpec", "inject_underdiagnosis", "save_noise_spec", "load_noise_spec"]


@dataclass(frozen=True)
class NoiseSpec:
    """Which group to underdiagnose, how hard, and with what RNG seed."""

    target_group: int
    rate: float
    seed: int

    def __post_init__(self) -> None:
        if self.target_group not in (0, 1):
            raise DomainError(f"target_group must be 0 or 1, got {self.target_group!r}")
        try:
            rate = float(self.rate)
        except (TypeError, ValueError):
            raise DomainError(f"rate must be a real number, got {self.rate!r}") from None
        if not math.isfinite(rate) or not 0.0 <= rate <= 1.0:
            raise DomainError(f"rate must lie in [0, 1], got {self.rate!r}")
        object.__setattr__(self, "rate", rate)
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise DomainError(f"seed must be an integer, got {self.seed!r}")

    def to_json_dict(self) -> dict:
        return {"target_group": self.target_group, "rate": self.rate, "seed": self.seed}

    @classmethod
    def from_json_dict(cls, data: dict) -> "NoiseSpec":
        if not isinstance(data, dict):
            raise SchemaError(f"noise spec must be a JSON object, got {type(data).__name__}")
        expected = {"target_group", "rate", "seed"}
        missing = expected - set(data)
        if missing:
            raise SchemaError(f"noise spec missing field(s): {', '.join(sorted(missing))}")
        unknown = set(data) - expected
        if unknown:
            raise SchemaError(f"noise spec has unknown field(s): {', '.join(sorted(unknown))}")
        return cls(target_group=data["target_group"], rate=data["rate"], seed=data["seed"])


def inject_underdiagnosis(dataset: Dataset, spec: NoiseSpec) -> Dataset:
    """Return a copy of ``dataset`` with underdiagnosis noise applied.

    Exactly ``round(rate * n_eligible)`` samples with group == target_group
    and true_label == 1 get observed_label set to 0, where rounding is
    Python's round-half-to-even. The flipped subset is a prefix of a single
    seed-determined permutation of the eligible indices, so for two rates
    r1 <= r2 at the same seed the flips at r1 are a subset of the flips at r2.
    The input dataset is never modified.
    """
    if len(dataset) == 0:
        raise DomainError("dataset is empty")
    eligible = np.flatnonzero((dataset.group == spec.target_group) & (dataset.true_label == 1))
    if eligible.size == 0 and spec.rate > 0.0:
        raise DegenerateTargetError(
            f"no samples with group={spec.target_group} and true_label=1 to corrupt"
        )
    k = int(round(spec.rate * eligible.size))
    out = dataset.copy()
    if k > 0:
        order = np.random.default_rng(spec.seed).permutation(eligible.size)
        out.observed_label[eligible[order[:k]]] = 0
    return out


def save_noise_spec(spec: NoiseSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(spec.to_json_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_noise_spec(path: str | Path) -> NoiseSpec:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON: {exc}") from None
    try:
        return NoiseSpec.from_json_dict(data)
    except DomainError as exc:
        raise SchemaError(f"{path}: {exc}") from None

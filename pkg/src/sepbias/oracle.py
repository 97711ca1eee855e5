"""Closed-form posteriors for the synthetic family, clean and corrupted.

Everything here follows from Bayes' rule on the four-cell Gaussian mixture
defined by a PopulationSpec. For a point x the joint score of cell (a, y) is

    log P(a) + log P(y | a) + (x . mu_ay - ||mu_ay||^2 / 2) / sigma^2

(the x-only terms of the Gaussian log-density cancel in every posterior, so
they are dropped). Underdiagnosis noise at rate rho on group a* rescales the
positive-class posterior of that group only:

    P_tr(y=1 | x, a*) = (1 - rho) * P(y=1 | x, a*)

while P(a | x) is untouched, because the corruption rewrites labels, not
features. The corrupted marginal posterior is recovered by mixing the
group-conditional posteriors with P(a | x).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .biasinject import NoiseSpec
from .datagen import PopulationSpec
from .errors import DomainError

__all__ = ["PosteriorBundle", "TprEstimate", "posteriors", "biased_posteriors", "theoretical_tpr"]

REGIMES = ("separable", "pooled")

# Floor for Monte-Carlo sample counts; below this the standard error is too
# coarse for the comparisons this module exists to support.
MIN_MC_SAMPLES = 1000


@dataclass(frozen=True)
class PosteriorBundle:
    """Posterior probabilities at a single feature point.

    p_group is P(a=1 | x); p_class_given_group[a] is P(y=1 | x, a) for a in
    {0, 1}; p_class is the group-marginalized P(y=1 | x).
    """

    p_group: float
    p_class_given_group: tuple[float, float]
    p_class: float


@dataclass(frozen=True)
class TprEstimate:
    """Monte-Carlo TPR estimate with its binomial standard error."""

    value: float
    std_error: float
    n_samples: int


def _as_points(spec: PopulationSpec, x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != spec.dim:
        raise DomainError(f"x must have {spec.dim} coordinates, got shape {np.asarray(x).shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("x must be finite")
    return arr, single


def _cell_scores(spec: PopulationSpec, points: np.ndarray) -> np.ndarray:
    """Log joint scores, shape (n, 2, 2) indexed by [point, group, label]."""
    var = spec.noise_scale**2
    scores = np.empty((points.shape[0], 2, 2), dtype=np.float64)
    for a in (0, 1):
        for y in (0, 1):
            mu = spec.mean(a, y)
            prior = spec.cell_prior(a, y)
            scores[:, a, y] = math.log(prior) + (points @ mu - 0.5 * float(mu @ mu)) / var
    return scores


def _posterior_arrays(spec: PopulationSpec, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized posteriors: (P(a=1|x), P(y=1|x,a) as (n, 2), P(y=1|x))."""
    scores = _cell_scores(spec, points)
    total = logsumexp(scores, axis=(1, 2))
    p_group = np.exp(logsumexp(scores[:, 1, :], axis=1) - total)
    per_group_norm = logsumexp(scores, axis=2)
    p_class_given_group = np.exp(scores[:, :, 1] - per_group_norm)
    p_class = np.exp(logsumexp(scores[:, :, 1], axis=1) - total)
    return p_group, p_class_given_group, p_class


def posteriors(spec: PopulationSpec, x) -> PosteriorBundle:
    """Exact posteriors of group and label at a feature point ``x``."""
    points, single = _as_points(spec, x)
    if not single:
        raise DomainError("x must be a single feature vector")
    p_group, p_cgg, p_class = _posterior_arrays(spec, points)
    return PosteriorBundle(
        p_group=float(p_group[0]),
        p_class_given_group=(float(p_cgg[0, 0]), float(p_cgg[0, 1])),
        p_class=float(p_class[0]),
    )


def _corrupted_arrays(
    spec: PopulationSpec, noise: NoiseSpec | None, points: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    p_group, p_cgg, p_class = _posterior_arrays(spec, points)
    if noise is None or noise.rate == 0.0:
        # No corruption: keep the clean arrays bit-identical rather than
        # recombining the mixture through a second arithmetic path.
        return p_group, p_cgg, p_class
    p_cgg = p_cgg.copy()
    p_cgg[:, noise.target_group] *= 1.0 - noise.rate
    p_a = np.stack([1.0 - p_group, p_group], axis=1)
    p_class = np.sum(p_cgg * p_a, axis=1)
    return p_group, p_cgg, p_class


def biased_posteriors(spec: PopulationSpec, noise: NoiseSpec, x) -> PosteriorBundle:
    """Posteriors of the label-corrupted population at ``x``.

    The target group's positive posterior is scaled by (1 - rate); the other
    group's is unchanged; the marginal label posterior mixes the two with the
    unchanged group posterior. Consequently the corrupted marginal never
    exceeds the clean one anywhere.
    """
    points, single = _as_points(spec, x)
    if not single:
        raise DomainError("x must be a single feature vector")
    p_group, p_cgg, p_class = _corrupted_arrays(spec, noise, points)
    return PosteriorBundle(
        p_group=float(p_group[0]),
        p_class_given_group=(float(p_cgg[0, 0]), float(p_cgg[0, 1])),
        p_class=float(p_class[0]),
    )


def theoretical_tpr(
    spec: PopulationSpec,
    noise: NoiseSpec | None,
    regime: str,
    group: int,
    threshold: float = 0.5,
    n_mc: int = 100_000,
    seed: int = 0,
) -> TprEstimate:
    """Predicted TPR of an idealized classifier on truly positive group members.

    Draws ``n_mc`` samples from the positive feature distribution of ``group``
    and thresholds the posterior the idealized model would have learned:

    - ``regime="separable"``: the group-conditional posterior P_tr(y=1|x, group),
      i.e. the mapping a model can learn when the groups are telling apart.
    - ``regime="pooled"``: the group-marginalized posterior P_tr(y=1|x), the
      best a model can do when group membership is invisible in features.

    With ``noise=None`` the clean posteriors are used. The returned standard
    error is the binomial one, sqrt(p(1-p)/n_mc).
    """
    if regime not in REGIMES:
        raise DomainError(f"regime must be one of {REGIMES}, got {regime!r}")
    if group not in (0, 1):
        raise DomainError(f"group must be 0 or 1, got {group!r}")
    if not isinstance(n_mc, int) or isinstance(n_mc, bool) or n_mc < MIN_MC_SAMPLES:
        raise DomainError(f"n_mc must be an integer >= {MIN_MC_SAMPLES}, got {n_mc!r}")
    threshold = float(threshold)
    if not math.isfinite(threshold) or not 0.0 < threshold < 1.0:
        raise DomainError(f"threshold must lie strictly in (0, 1), got {threshold!r}")
    rng = np.random.default_rng(seed)
    points = spec.mean(group, 1)[None, :] + spec.noise_scale * rng.standard_normal((n_mc, spec.dim))
    _, p_cgg, p_class = _corrupted_arrays(spec, noise, points)
    p = p_cgg[:, group] if regime == "separable" else p_class
    tpr = float(np.mean(p > threshold))
    se = math.sqrt(tpr * (1.0 - tpr) / n_mc)
    return TprEstimate(value=tpr, std_error=se, n_samples=n_mc)

"""Shared fixtures and hand-built datasets used across the test modules."""

import numpy as np
import pytest

from sepbias.datagen import Dataset, PopulationSpec
from sepbias.learner import TrainConfig


def build_dataset(features, group, true_label, observed_label=None, **kwargs):
    """Dataset from plain lists; observed defaults to true."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 1:
        features = features[:, None]
    true_label = np.asarray(true_label)
    if observed_label is None:
        observed_label = true_label.copy()
    return Dataset(
        features=features,
        group=np.asarray(group),
        true_label=true_label,
        observed_label=np.asarray(observed_label),
        **kwargs,
    )


@pytest.fixture
def symmetric_spec():
    """Balanced priors, orthogonal axes, unit noise."""
    return PopulationSpec(
        dim=2,
        group_prior=0.5,
        class_prior=(0.5, 0.5),
        group_separation=1.5,
        disease_separation=1.0,
        group_axis=(1.0, 0.0),
        disease_axis=(0.0, 1.0),
        noise_scale=1.0,
    )


@pytest.fixture
def skewed_spec():
    """Unbalanced priors so group and label marginals differ."""
    return PopulationSpec(
        dim=2,
        group_prior=0.3,
        class_prior=(0.6, 0.4),
        group_separation=2.0,
        disease_separation=1.2,
        group_axis=(1.0, 0.0),
        disease_axis=(0.0, 1.0),
        noise_scale=0.8,
    )


@pytest.fixture
def quick_train_config():
    return TrainConfig(
        learning_rate=0.5,
        max_epochs=200,
        patience=10,
        val_fraction=0.2,
        batch_size="full",
        hidden_width=8,
        seed=0,
    )

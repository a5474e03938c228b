import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from care import (ClusterSpec, ImbalanceSpec, NoiseSpec, inject_noise,
                  longtail_profile, synth_features)

settings.register_profile(
    "ci", deadline=None, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")


@pytest.fixture(scope="session")
def small_noisy_dataset():
    """C=10 long-tailed clusters with 40% symmetric noise, ~1.2k samples."""
    counts = longtail_profile(ImbalanceSpec(10.0, 300, 10))
    clean = synth_features(counts, ClusterSpec(32, 0.25, seed=1234))
    return inject_noise(clean, NoiseSpec("symmetric-uniform", 0.4, seed=1234))


@pytest.fixture(scope="session")
def tiny_dataset():
    """3 samples, 3 classes, hand-checkable."""
    from care import Dataset
    eye = np.eye(3)
    return Dataset(features=eye, observed_labels=[0, 1, 2], prototypes=eye,
                   true_labels=[0, 1, 1])

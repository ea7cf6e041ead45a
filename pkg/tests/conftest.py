import numpy as np
import pytest
import torch

from motionreplay.data import Dataset, MotionSequence
from motionreplay.synth import SynthSpec, default_skeleton, synth_generate


def random_rotations(n: int, seed: int) -> np.ndarray:
    """Proper rotation matrices via QR of Gaussian matrices, det forced to +1.

    Independent of the package's own Gram-Schmidt code on purpose.
    """
    rng = np.random.default_rng(seed)
    out = np.empty((n, 3, 3))
    for i in range(n):
        q, r = np.linalg.qr(rng.normal(size=(3, 3)))
        q = q * np.sign(np.diag(r))  # make the factorization unique
        if np.linalg.det(q) < 0:
            q[:, 2] = -q[:, 2]
        out[i] = q
    return out


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@pytest.fixture(scope="session")
def skeleton():
    return default_skeleton()


@pytest.fixture(scope="session")
def micro_dataset() -> Dataset:
    """3 classes, 6 sequences each, short clips; enough for mechanics tests."""
    return synth_generate(SynthSpec(num_classes=3, sequences_per_class=6,
                                    length_range=(12, 14), seed=21))


@pytest.fixture(scope="session")
def micro_dataset_4c() -> Dataset:
    return synth_generate(SynthSpec(num_classes=4, sequences_per_class=6,
                                    length_range=(12, 14), seed=22))


def make_sequence(length: int, label: int, seed: int) -> MotionSequence:
    """A single random-but-valid motion sequence."""
    ds = synth_generate(SynthSpec(num_classes=label + 1, sequences_per_class=1,
                                  length_range=(length, length), seed=seed))
    return ds.by_class(label)[0]

"""Synthetic skeletal motion for fast, fully reproducible experiments.

Each class is a distinct family of joint-angle oscillations: a class picks
which joints swing, around which axes, how fast and how far. Sequences within
a class differ by phase, amplitude jitter, and angle noise, so a class is a
genuine distribution rather than a single clip.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .body import NUM_JOINTS, Skeleton
from .data import Dataset, MotionSequence
from .errors import ValidationError
from .rotations import rotmats_to_sixd

# Torso chain, two legs, two arms; parent index precedes each joint.
DEFAULT_PARENTS = (-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21)


def default_skeleton() -> Skeleton:
    """A 24-joint humanoid with hand-set bone offsets (meters)."""
    offsets = np.zeros((NUM_JOINTS, 3))
    offsets[1] = (0.07, -0.09, 0.0)   # left hip
    offsets[2] = (-0.07, -0.09, 0.0)  # right hip
    offsets[3] = (0.0, 0.11, 0.0)     # spine1
    offsets[4] = (0.0, -0.38, 0.0)    # left knee
    offsets[5] = (0.0, -0.38, 0.0)    # right knee
    offsets[6] = (0.0, 0.13, 0.0)     # spine2
    offsets[7] = (0.0, -0.40, 0.0)    # left ankle
    offsets[8] = (0.0, -0.40, 0.0)    # right ankle
    offsets[9] = (0.0, 0.05, 0.0)     # spine3
    offsets[10] = (0.0, -0.06, 0.12)  # left foot
    offsets[11] = (0.0, -0.06, 0.12)  # right foot
    offsets[12] = (0.0, 0.21, 0.0)    # neck
    offsets[13] = (0.08, 0.11, 0.0)   # left collar
    offsets[14] = (-0.08, 0.11, 0.0)  # right collar
    offsets[15] = (0.0, 0.09, 0.0)    # head
    offsets[16] = (0.09, 0.0, 0.0)    # left shoulder
    offsets[17] = (-0.09, 0.0, 0.0)   # right shoulder
    offsets[18] = (0.26, 0.0, 0.0)    # left elbow
    offsets[19] = (-0.26, 0.0, 0.0)   # right elbow
    offsets[20] = (0.25, 0.0, 0.0)    # left wrist
    offsets[21] = (-0.25, 0.0, 0.0)   # right wrist
    offsets[22] = (0.08, 0.0, 0.0)    # left hand
    offsets[23] = (-0.08, 0.0, 0.0)   # right hand
    return Skeleton(parents=DEFAULT_PARENTS, offsets=offsets)


@dataclass(frozen=True)
class SynthSpec:
    num_classes: int = 4
    sequences_per_class: int = 50
    length_range: tuple[int, int] = (60, 64)
    fps: int = 20
    angle_noise: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 1 or self.sequences_per_class < 1:
            raise ValidationError("num_classes and sequences_per_class must be >= 1")
        lo, hi = self.length_range
        if not 1 <= lo <= hi:
            raise ValidationError(f"bad length_range {self.length_range}")


def _axis_angle_rotmats(axes: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Rodrigues formula, vectorized. axes (J, 3) unit; angles (T, J) -> (T, J, 3, 3)."""
    t, j = angles.shape
    k = np.zeros((j, 3, 3))
    k[:, 0, 1], k[:, 0, 2] = -axes[:, 2], axes[:, 1]
    k[:, 1, 0], k[:, 1, 2] = axes[:, 2], -axes[:, 0]
    k[:, 2, 0], k[:, 2, 1] = -axes[:, 1], axes[:, 0]
    sin = np.sin(angles)[..., None, None]
    cos = np.cos(angles)[..., None, None]
    eye = np.broadcast_to(np.eye(3), (t, j, 3, 3))
    kk = np.einsum("jab,jbc->jac", k, k)
    return eye + sin * k + (1.0 - cos) * kk


@dataclass(frozen=True)
class _ClassSignature:
    joints: np.ndarray       # active joint ids
    axes: np.ndarray         # (J, 3) unit rotation axes, one per active joint
    freq: float              # cycles per second
    amplitude: np.ndarray    # (J,) radians
    joint_phase: np.ndarray  # (J,) fixed offsets between joints
    root_speed: float        # forward meters per second


def _class_signature(spec: SynthSpec, label: int) -> _ClassSignature:
    rng = np.random.default_rng(np.random.SeedSequence(entropy=[spec.seed, 97, label]))
    joints = rng.choice(np.arange(1, NUM_JOINTS), size=6, replace=False)
    axes = rng.normal(size=(6, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    return _ClassSignature(
        joints=joints,
        axes=axes,
        freq=0.4 + 0.3 * label + rng.uniform(0.0, 0.1),
        amplitude=rng.uniform(0.4, 0.9, size=6),
        joint_phase=rng.uniform(0.0, 2.0 * np.pi, size=6),
        root_speed=rng.uniform(0.2, 1.0),
    )


def _make_sequence(spec: SynthSpec, sig: _ClassSignature, label: int, index: int) -> MotionSequence:
    rng = np.random.default_rng(np.random.SeedSequence(entropy=[spec.seed, label, index]))
    length = int(rng.integers(spec.length_range[0], spec.length_range[1] + 1))
    t = np.arange(length) / spec.fps

    phase = rng.uniform(0.0, 2.0 * np.pi)
    amp_scale = rng.uniform(0.85, 1.15)
    angles = (
        amp_scale
        * sig.amplitude[None, :]
        * np.sin(2.0 * np.pi * sig.freq * t[:, None] + phase + sig.joint_phase[None, :])
    )
    angles = angles + rng.normal(scale=spec.angle_noise, size=angles.shape)

    rot6d = np.tile(np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]), (length, NUM_JOINTS, 1))
    rot6d[:, sig.joints, :] = rotmats_to_sixd(_axis_angle_rotmats(sig.axes, angles))

    disp = np.zeros((length, 3))
    disp[:, 0] = sig.root_speed * t
    disp[:, 2] = 0.03 * np.sin(2.0 * np.pi * sig.freq * t + phase)
    disp -= disp[0]

    frames = np.concatenate([rot6d.reshape(length, -1), disp], axis=1)
    return MotionSequence(frames, label, spec.fps)


def synth_generate(spec: SynthSpec) -> Dataset:
    """Deterministic dataset for the given spec; same spec, same bits."""
    sequences = []
    for label in range(spec.num_classes):
        sig = _class_signature(spec, label)
        for index in range(spec.sequences_per_class):
            sequences.append(_make_sequence(spec, sig, label, index))
    class_names = tuple(f"motion_{c:02d}" for c in range(spec.num_classes))
    return Dataset(tuple(sequences), class_names, default_skeleton(), spec.fps)

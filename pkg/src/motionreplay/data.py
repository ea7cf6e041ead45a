"""Pose and motion data model plus the canonical dataset file format.

A pose frame is 24 joint rotations in 6D form plus a root displacement,
flattened to a 147-vector for network consumption. Sequences are stored
re-centered: frame 0 has its root at the origin.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .body import NUM_JOINTS, Skeleton
from .errors import ValidationError

FRAME_DIM = NUM_JOINTS * 6 + 3  # 147


@dataclass(frozen=True)
class PoseFrame:
    """One time step: 24 joint rotations (6D) and the root translation in meters."""

    joint_rot6d: np.ndarray  # (24, 6)
    root_disp: np.ndarray  # (3,)

    def __post_init__(self):
        rot = np.asarray(self.joint_rot6d, dtype=np.float64)
        disp = np.asarray(self.root_disp, dtype=np.float64)
        if rot.shape != (NUM_JOINTS, 6):
            raise ValidationError(f"joint_rot6d must be ({NUM_JOINTS}, 6), got {rot.shape}")
        if disp.shape != (3,):
            raise ValidationError(f"root_disp must be a 3-vector, got shape {disp.shape}")
        if not (np.all(np.isfinite(rot)) and np.all(np.isfinite(disp))):
            raise ValidationError("pose frame contains non-finite entries")
        object.__setattr__(self, "joint_rot6d", rot)
        object.__setattr__(self, "root_disp", disp)

    def __eq__(self, other):
        return (
            isinstance(other, PoseFrame)
            and np.array_equal(self.joint_rot6d, other.joint_rot6d)
            and np.array_equal(self.root_disp, other.root_disp)
        )


def frame_to_vector(frame: PoseFrame) -> np.ndarray:
    """Row-major flatten of the 24x6 rotations followed by the root displacement."""
    return np.concatenate([frame.joint_rot6d.ravel(), frame.root_disp])


def vector_to_frame(vector: np.ndarray) -> PoseFrame:
    """Exact inverse of `frame_to_vector`."""
    vector = np.asarray(vector, dtype=np.float64)
    if vector.shape != (FRAME_DIM,):
        raise ValidationError(f"frame vector must have {FRAME_DIM} entries, got {vector.shape}")
    return PoseFrame(vector[: NUM_JOINTS * 6].reshape(NUM_JOINTS, 6), vector[NUM_JOINTS * 6 :])


@dataclass(frozen=True)
class MotionSequence:
    """An ordered stack of pose frames with an action label.

    `frames` is the (T, 147) matrix of frame vectors (layout of
    `frame_to_vector`); per-frame `PoseFrame` views are available through
    `pose_frame`.
    """

    frames: np.ndarray  # (T, 147)
    label: int
    fps: int = 20

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[1] != FRAME_DIM or frames.shape[0] < 1:
            raise ValidationError(f"frames must be (T>=1, {FRAME_DIM}), got {frames.shape}")
        if not np.all(np.isfinite(frames)):
            raise ValidationError("motion frames contain non-finite entries")
        if int(self.label) < 0:
            raise ValidationError(f"label must be non-negative, got {self.label}")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "label", int(self.label))
        object.__setattr__(self, "fps", int(self.fps))

    @classmethod
    def from_pose_frames(cls, pose_frames: list[PoseFrame], label: int, fps: int = 20) -> "MotionSequence":
        if not pose_frames:
            raise ValidationError("a motion sequence needs at least one frame")
        return cls(np.stack([frame_to_vector(p) for p in pose_frames]), label, fps)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    def pose_frame(self, t: int) -> PoseFrame:
        return vector_to_frame(self.frames[t])

    def joint_rot6d(self) -> np.ndarray:
        """All joint rotations as a (T, 24, 6) view."""
        return self.frames[:, : NUM_JOINTS * 6].reshape(self.num_frames, NUM_JOINTS, 6)

    def root_disp(self) -> np.ndarray:
        """Root displacements as a (T, 3) view."""
        return self.frames[:, NUM_JOINTS * 6 :]

    def recentered(self) -> "MotionSequence":
        """Copy with the frame-0 root translated to the origin."""
        frames = self.frames.copy()
        frames[:, NUM_JOINTS * 6 :] -= frames[0, NUM_JOINTS * 6 :]
        return MotionSequence(frames, self.label, self.fps)

    def __eq__(self, other):
        return (
            isinstance(other, MotionSequence)
            and self.label == other.label
            and self.fps == other.fps
            and np.array_equal(self.frames, other.frames)
        )


@dataclass(frozen=True)
class Dataset:
    """A labeled collection of motion sequences sharing one skeleton."""

    sequences: tuple[MotionSequence, ...]
    class_names: tuple[str, ...]
    skeleton: Skeleton
    fps: int = 20

    def __post_init__(self):
        object.__setattr__(self, "sequences", tuple(self.sequences))
        object.__setattr__(self, "class_names", tuple(self.class_names))
        object.__setattr__(self, "fps", int(self.fps))
        if not self.class_names:
            raise ValidationError("class_names must be nonempty")
        if len(set(self.class_names)) != len(self.class_names):
            raise ValidationError("class_names must be unique")
        for i, seq in enumerate(self.sequences):
            if seq.label >= len(self.class_names):
                raise ValidationError(
                    f"sequence {i} has label {seq.label}, but only "
                    f"{len(self.class_names)} classes are declared"
                )

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def by_class(self, label: int) -> list[MotionSequence]:
        return [s for s in self.sequences if s.label == label]

    def class_counts(self) -> list[int]:
        counts = [0] * self.num_classes
        for s in self.sequences:
            counts[s.label] += 1
        return counts

    def __eq__(self, other):
        return (
            isinstance(other, Dataset)
            and self.class_names == other.class_names
            and self.fps == other.fps
            and self.skeleton == other.skeleton
            and len(self.sequences) == len(other.sequences)
            and all(a == b for a, b in zip(self.sequences, other.sequences))
        )


@dataclass(frozen=True)
class TaskSchedule:
    """Ordered class groups for class-incremental training."""

    tasks: tuple[tuple[int, ...], ...]
    classes_per_task: int

    def __post_init__(self):
        tasks = tuple(tuple(int(c) for c in group) for group in self.tasks)
        object.__setattr__(self, "tasks", tasks)
        if self.classes_per_task < 1:
            raise ValidationError("classes_per_task must be >= 1")
        flat = [c for group in tasks for c in group]
        if len(set(flat)) != len(flat):
            raise ValidationError("task groups must be disjoint")
        for group in tasks[:-1]:
            if len(group) != self.classes_per_task:
                raise ValidationError("only the final task may have fewer classes")
        if tasks and not 1 <= len(tasks[-1]) <= self.classes_per_task:
            raise ValidationError("final task size must be in [1, classes_per_task]")

    @property
    def num_tasks(self) -> int:
        return len(self.tasks)

    def seen_classes(self, task_index: int) -> list[int]:
        """All class ids covered by tasks 0..task_index inclusive."""
        return [c for group in self.tasks[: task_index + 1] for c in group]


def split_tasks(dataset: Dataset, classes_per_task: int, class_order: list[int] | None = None) -> TaskSchedule:
    """Chunk the dataset's classes into consecutive groups of `classes_per_task`.

    The default order is the dataset's class order; a permutation may be
    supplied. A remainder forms a smaller final task.
    """
    n = dataset.num_classes
    if classes_per_task < 1:
        raise ValidationError("classes_per_task must be >= 1")
    if classes_per_task > n:
        raise ValidationError(f"classes_per_task={classes_per_task} exceeds {n} classes")
    order = list(range(n)) if class_order is None else [int(c) for c in class_order]
    if sorted(order) != list(range(n)):
        raise ValidationError("class_order must be a permutation of all class ids")
    groups = [tuple(order[i : i + classes_per_task]) for i in range(0, n, classes_per_task)]
    return TaskSchedule(tuple(groups), classes_per_task)


FILE_VERSION = 1


def dataset_to_dict(dataset: Dataset) -> dict:
    return {
        "version": FILE_VERSION,
        "fps": dataset.fps,
        "class_names": list(dataset.class_names),
        "skeleton": {
            "parents": list(dataset.skeleton.parents),
            "offsets": dataset.skeleton.offsets.tolist(),
        },
        "sequences": [
            {"label": seq.label, "frames": seq.frames.tolist()} for seq in dataset.sequences
        ],
    }


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    """Write the canonical JSON motion file (full float round-trip precision)."""
    with open(path, "w", encoding="utf-8") as f:
        json.dump(dataset_to_dict(dataset), f, sort_keys=True, separators=(",", ":"))


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise ValidationError(f"{context}: missing field '{key}'")
    return mapping[key]


def load_dataset(path: str | Path) -> Dataset:
    """Load and validate a canonical motion file; ordering follows the file."""
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    if not isinstance(doc, dict):
        raise ValidationError("dataset file: top level must be an object")
    version = _require(doc, "version", "dataset file")
    if version != FILE_VERSION:
        raise ValidationError(f"dataset file: unsupported version {version}")
    fps = _require(doc, "fps", "dataset file")
    class_names = _require(doc, "class_names", "dataset file")
    skel_doc = _require(doc, "skeleton", "dataset file")
    skeleton = Skeleton(
        parents=tuple(_require(skel_doc, "parents", "skeleton")),
        offsets=np.asarray(_require(skel_doc, "offsets", "skeleton"), dtype=np.float64),
    )
    sequences = []
    for i, rec in enumerate(_require(doc, "sequences", "dataset file")):
        label = _require(rec, "label", f"sequence {i}")
        frames = np.asarray(_require(rec, "frames", f"sequence {i}"), dtype=np.float64)
        if frames.ndim != 2 or frames.shape[1] != FRAME_DIM:
            raise ValidationError(
                f"sequence {i}: field 'frames' must be (T, {FRAME_DIM}), got {frames.shape}"
            )
        if not isinstance(label, int) or not 0 <= label < len(class_names):
            raise ValidationError(
                f"sequence {i}: field 'label' is {label}, valid range is [0, {len(class_names)})"
            )
        sequences.append(MotionSequence(frames, label, fps))
    return Dataset(tuple(sequences), tuple(class_names), skeleton, fps)

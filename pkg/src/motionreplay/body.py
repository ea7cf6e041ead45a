"""Skeleton body model: differentiable forward kinematics.

Stands in for a full mesh body model; the "vertices" are the 24 joint
positions produced by walking the bone hierarchy. All positions are
root-centered, so the root displacement of a pose never appears here.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
import torch
from torch import Tensor

from .errors import ValidationError
from .rotations import sixd_to_rotmats_torch

if TYPE_CHECKING:
    from .data import MotionSequence, PoseFrame

NUM_JOINTS = 24


@dataclass(frozen=True)
class Skeleton:
    """Bone hierarchy: parent indices (root = -1) and parent->child offsets in meters."""

    parents: tuple[int, ...]
    offsets: np.ndarray = field(repr=False)  # (24, 3) float64

    def __post_init__(self):
        if len(self.parents) != NUM_JOINTS:
            raise ValidationError(f"skeleton needs {NUM_JOINTS} parents, got {len(self.parents)}")
        offsets = np.asarray(self.offsets, dtype=np.float64)
        if offsets.shape != (NUM_JOINTS, 3) or not np.all(np.isfinite(offsets)):
            raise ValidationError("skeleton offsets must be a finite (24, 3) array")
        object.__setattr__(self, "parents", tuple(int(p) for p in self.parents))
        object.__setattr__(self, "offsets", offsets)
        roots = [j for j, p in enumerate(self.parents) if p < 0]
        if roots != [0]:
            raise ValidationError(f"skeleton must have exactly joint 0 as root, roots={roots}")
        for j, p in enumerate(self.parents[1:], start=1):
            if not 0 <= p < j:
                raise ValidationError(f"joint {j} has parent {p}; parents must precede children")

    def __eq__(self, other):
        return (
            isinstance(other, Skeleton)
            and self.parents == other.parents
            and np.array_equal(self.offsets, other.offsets)
        )


@dataclass(frozen=True)
class VertexSet:
    """Root-centered 3D positions, one row per vertex (here: per joint)."""

    positions: np.ndarray  # (V, 3)

    def __post_init__(self):
        positions = np.asarray(self.positions, dtype=np.float64)
        if positions.ndim != 2 or positions.shape[1] != 3:
            raise ValidationError(f"positions must be (V, 3), got {positions.shape}")
        if np.linalg.norm(positions[0]) > 1e-9:
            raise ValidationError("vertex set is not root-centered")
        object.__setattr__(self, "positions", positions)

    def __eq__(self, other):
        return isinstance(other, VertexSet) and np.array_equal(self.positions, other.positions)


def fk_positions(joint_rot6d: Tensor, skeleton: Skeleton) -> Tensor:
    """Root-centered joint positions from 6D rotations, differentiably.

    joint_rot6d: (..., 24, 6). Returns (..., 24, 3). Row 0 is the global
    rotation; child positions accumulate parent-chain rotations applied to
    the bone offsets, with the root pinned at the origin.
    """
    if joint_rot6d.shape[-2:] != (NUM_JOINTS, 6):
        raise ValidationError(f"expected (..., 24, 6) rotations, got {tuple(joint_rot6d.shape)}")
    rotmats = sixd_to_rotmats_torch(joint_rot6d)  # (..., 24, 3, 3)
    offsets = torch.as_tensor(skeleton.offsets, dtype=joint_rot6d.dtype, device=joint_rot6d.device)
    batch = joint_rot6d.shape[:-2]
    globals_: list[Tensor] = [rotmats[..., 0, :, :]]
    positions: list[Tensor] = [torch.zeros(batch + (3,), dtype=joint_rot6d.dtype, device=joint_rot6d.device)]
    for j in range(1, NUM_JOINTS):
        p = skeleton.parents[j]
        positions.append(positions[p] + (globals_[p] @ offsets[j]))
        globals_.append(globals_[p] @ rotmats[..., j, :, :])
    return torch.stack(positions, dim=-2)


def fk_vertices(frame: "PoseFrame", skeleton: Skeleton) -> VertexSet:
    """Forward kinematics for a single pose frame."""
    rot6d = torch.as_tensor(frame.joint_rot6d, dtype=torch.float64)
    return VertexSet(fk_positions(rot6d, skeleton).numpy())


def body_vertices(seq: "MotionSequence", skeleton: Skeleton) -> list[VertexSet]:
    """Framewise forward kinematics over a whole motion sequence."""
    rot6d = torch.as_tensor(seq.joint_rot6d(), dtype=torch.float64)  # (T, 24, 6)
    positions = fk_positions(rot6d, skeleton).numpy()
    return [VertexSet(positions[t]) for t in range(positions.shape[0])]


def skeleton_to_dict(skeleton: Skeleton) -> dict:
    return {"parents": list(skeleton.parents), "offsets": skeleton.offsets.tolist()}


def skeleton_from_dict(doc: dict) -> Skeleton:
    return Skeleton(parents=tuple(doc["parents"]),
                    offsets=np.asarray(doc["offsets"], dtype=np.float64))

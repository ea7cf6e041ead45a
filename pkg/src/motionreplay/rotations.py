"""Continuous 6D rotation representation.

A rotation matrix R is encoded as its first two columns, concatenated
column-major into a 6-vector; it is recovered by Gram-Schmidt
orthonormalization plus a cross product for the third column.
"""
from __future__ import annotations

import numpy as np
import torch
from torch import Tensor

from .errors import DegenerateRotationError, ValidationError

ORTHO_TOL = 1e-6
DEGENERATE_TOL = 1e-9


def rotmat_to_sixd(matrix: np.ndarray) -> np.ndarray:
    """Encode a single 3x3 rotation matrix as a 6-vector (first two columns)."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape != (3, 3):
        raise ValidationError(f"expected a 3x3 matrix, got shape {matrix.shape}")
    gram = matrix.T @ matrix
    err = gram - np.eye(3)
    idx = np.unravel_index(np.argmax(np.abs(err)), err.shape)
    if abs(err[idx]) > ORTHO_TOL:
        i, j = idx
        kind = f"|column {i}|^2" if i == j else f"column {i} . column {j}"
        raise ValidationError(
            f"matrix is not orthonormal: {kind} deviates by {err[idx]:.3e}"
        )
    det = np.linalg.det(matrix)
    if abs(det - 1.0) > ORTHO_TOL:
        raise ValidationError(f"matrix determinant is {det:.8f}, expected 1")
    return np.concatenate([matrix[:, 0], matrix[:, 1]])


def sixd_to_rotmat(sixd: np.ndarray) -> np.ndarray:
    """Recover the rotation matrix from a 6-vector via Gram-Schmidt."""
    sixd = np.asarray(sixd, dtype=np.float64)
    if sixd.shape != (6,):
        raise ValidationError(f"expected a 6-vector, got shape {sixd.shape}")
    if not np.all(np.isfinite(sixd)):
        raise ValidationError("6D rotation input contains non-finite entries")
    a, b = sixd[:3], sixd[3:]
    norm_a = np.linalg.norm(a)
    if norm_a <= DEGENERATE_TOL:
        raise DegenerateRotationError(f"first 6D triple has norm {norm_a:.3e}")
    b1 = a / norm_a
    residual = b - (b1 @ b) * b1
    norm_r = np.linalg.norm(residual)
    if norm_r <= DEGENERATE_TOL:
        raise DegenerateRotationError(
            f"second 6D triple is parallel to the first (residual norm {norm_r:.3e})"
        )
    b2 = residual / norm_r
    # Re-project once: a single Gram-Schmidt pass loses ~eps/norm_r digits of
    # orthogonality when the triples are nearly parallel.
    b2 = b2 - (b1 @ b2) * b1
    b2 = b2 / np.linalg.norm(b2)
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=1)


def rotmats_to_sixd(matrices: np.ndarray) -> np.ndarray:
    """Vectorized encoder: (..., 3, 3) rotation matrices -> (..., 6)."""
    matrices = np.asarray(matrices, dtype=np.float64)
    return np.concatenate([matrices[..., :, 0], matrices[..., :, 1]], axis=-1)


def sixd_to_rotmats_torch(sixd: Tensor) -> Tensor:
    """Differentiable batched Gram-Schmidt: (..., 6) -> (..., 3, 3).

    Raises on degenerate rows instead of letting NaNs propagate into the
    training graph.
    """
    a, b = sixd[..., :3], sixd[..., 3:]
    norm_a = a.norm(dim=-1, keepdim=True)
    if bool((norm_a <= DEGENERATE_TOL).any()):
        raise DegenerateRotationError("degenerate 6D rotation: zero first triple")
    b1 = a / norm_a
    residual = b - (b1 * b).sum(dim=-1, keepdim=True) * b1
    norm_r = residual.norm(dim=-1, keepdim=True)
    if bool((norm_r <= DEGENERATE_TOL).any()):
        raise DegenerateRotationError("degenerate 6D rotation: parallel triples")
    b2 = residual / norm_r
    b2 = b2 - (b1 * b2).sum(dim=-1, keepdim=True) * b1
    b2 = b2 / b2.norm(dim=-1, keepdim=True)
    b3 = torch.cross(b1, b2, dim=-1)
    return torch.stack([b1, b2, b3], dim=-1)

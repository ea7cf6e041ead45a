"""Loss terms for the conditional sequence VAE.

Four parts: vertex error after forward kinematics, pose-vector error,
a latent pull toward the per-class Gaussian mode, and a frozen-classifier
cross entropy. Frame dimensions are summed; batches are averaged.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import Tensor
from torch.nn import functional as F

from .body import NUM_JOINTS, Skeleton, fk_positions
from .data import MotionSequence
from .errors import ValidationError

DEFAULT_LAMBDA_LATENT = 1e-5
DEFAULT_LAMBDA_AUX = 1e-4


@dataclass(frozen=True)
class LossBreakdown:
    vertex: object
    reconstruction: object
    latent: object
    aux: object
    total: object
    lambda_latent: float
    lambda_aux: float

    def detached(self) -> "LossBreakdown":
        """Plain-float copy for logging."""
        def to_float(v):
            return float(v.detach()) if isinstance(v, Tensor) else float(v)
        return LossBreakdown(
            vertex=to_float(self.vertex), reconstruction=to_float(self.reconstruction),
            latent=to_float(self.latent), aux=to_float(self.aux), total=to_float(self.total),
            lambda_latent=self.lambda_latent, lambda_aux=self.lambda_aux,
        )


def latent_loss(mean_post: Tensor, log_std_post: Tensor,
                mean_mode: Tensor, log_std_mode: Tensor) -> Tensor:
    """KL(posterior || class mode) for diagonal Gaussians, summed over dims.

    Written so that identical parameter pairs give exactly 0.0: the variance
    ratio enters as exp(2(lq - lp)), which is exp(0) = 1 bit-for-bit.
    Accepts (..., D); reduces the last axis.
    """
    dl = log_std_mode - log_std_post
    ratio = torch.exp(-2.0 * dl)  # sigma_q^2 / sigma_p^2
    shift = (mean_post - mean_mode) ** 2 * torch.exp(-2.0 * log_std_mode)
    return 0.5 * (2.0 * dl - 1.0 + ratio + shift).sum(dim=-1)


def reconstruction_loss_frames(pred: Tensor, target: Tensor) -> Tensor:
    """Sum of squared frame-vector error over time and features, batch-averaged.

    pred, target: (B, T, F) or (T, F).
    """
    if pred.shape != target.shape:
        raise ValidationError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    diff2 = (pred - target) ** 2
    if diff2.ndim == 2:
        return diff2.sum()
    return diff2.sum(dim=(1, 2)).mean()


def reconstruction_loss(seq: MotionSequence, recon: MotionSequence) -> float:
    if seq.num_frames != recon.num_frames:
        raise ValidationError(f"length mismatch: {seq.num_frames} vs {recon.num_frames}")
    a = torch.from_numpy(seq.frames)
    b = torch.from_numpy(recon.frames)
    return float(reconstruction_loss_frames(b, a))


def frames_to_positions(frames: Tensor, skeleton: Skeleton) -> Tensor:
    """Root-centered joint positions from frame vectors; (..., T, F) -> (..., T, 24, 3)."""
    rot6d = frames[..., : NUM_JOINTS * 6].reshape(*frames.shape[:-1], NUM_JOINTS, 6)
    return fk_positions(rot6d, skeleton)


def vertex_loss_positions(pred_positions: Tensor, target_positions: Tensor) -> Tensor:
    """Squared position error summed over time, joints, xyz; batch-averaged."""
    if pred_positions.shape != target_positions.shape:
        raise ValidationError(
            f"shape mismatch: {tuple(pred_positions.shape)} vs {tuple(target_positions.shape)}")
    diff2 = (pred_positions - target_positions) ** 2
    if diff2.ndim == 3:
        return diff2.sum()
    return diff2.sum(dim=(1, 2, 3)).mean()


def vertex_loss(seq: MotionSequence, recon: MotionSequence, skeleton: Skeleton) -> float:
    if seq.num_frames != recon.num_frames:
        raise ValidationError(f"length mismatch: {seq.num_frames} vs {recon.num_frames}")
    a = frames_to_positions(torch.from_numpy(seq.frames), skeleton)
    b = frames_to_positions(torch.from_numpy(recon.frames), skeleton)
    return float(vertex_loss_positions(b, a))


def aux_loss_logits(logits: Tensor, labels: Tensor) -> Tensor:
    """Cross entropy -log softmax(logits)[label], batch-averaged."""
    if labels.min() < 0 or labels.max() >= logits.shape[-1]:
        raise ValidationError(
            f"label out of range for {logits.shape[-1]}-way classifier")
    return F.cross_entropy(logits, labels)

def aux_loss(classifier, recon: MotionSequence, label: int) -> float:
    """Frozen-classifier cross entropy on one sequence.

    `classifier` is any callable mapping (B, T, F) frames to (B, C) logits;
    its parameters get no gradient, the sequence does when a tensor path is
    used instead of this convenience wrapper.
    """
    frames = torch.from_numpy(recon.frames)[None].to(torch.float32)
    logits = classifier(frames)
    if not 0 <= label < logits.shape[-1]:
        raise ValidationError(f"label {label} out of range for {logits.shape[-1]} classes")
    return float(aux_loss_logits(logits, torch.tensor([label])))


def total_loss(vertex, reconstruction, latent, aux,
               lambda_latent: float = DEFAULT_LAMBDA_LATENT,
               lambda_aux: float = DEFAULT_LAMBDA_AUX) -> LossBreakdown:
    """Weighted combination; `total` is formed from exactly these parts."""
    total = vertex + reconstruction + lambda_latent * latent + lambda_aux * aux
    return LossBreakdown(vertex=vertex, reconstruction=reconstruction, latent=latent,
                         aux=aux, total=total, lambda_latent=lambda_latent, lambda_aux=lambda_aux)

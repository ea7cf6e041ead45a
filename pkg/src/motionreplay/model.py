"""Conditional sequence VAE over pose-frame vectors.

GRU encoder to a per-sequence Gaussian latent, GRU decoder back to frames,
plus a bank of trainable per-class latent Gaussians. Sampling a class mode
and decoding it is the generative path; the bank is what lets a frozen copy
of the model replay earlier classes without keeping their data.
"""
from __future__ import annotations

import base64
import copy
import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .body import Skeleton, skeleton_from_dict, skeleton_to_dict
from .data import FRAME_DIM
from .errors import ValidationError

LOGSTD_MIN = -10.0
LOGSTD_MAX = 10.0
MODE_INIT_VAR = 0.1  # variance of the per-class mean initializer


@dataclass(frozen=True)
class ModelConfig:
    num_classes: int
    frame_dim: int = FRAME_DIM
    latent_dim: int = 16
    hidden_size: int = 32
    encoder_layers: int = 2
    decoder_layers: int = 2

    def __post_init__(self):
        for name in ("num_classes", "frame_dim", "latent_dim", "hidden_size", "encoder_layers", "decoder_layers"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")

    @classmethod
    def desk(cls, num_classes: int) -> "ModelConfig":
        """Small profile for CI and laptop runs."""
        return cls(num_classes=num_classes, latent_dim=16, hidden_size=32,
                   encoder_layers=2, decoder_layers=2)

    @classmethod
    def full(cls, num_classes: int) -> "ModelConfig":
        """Full-scale profile; slow on CPU, intended for long runs."""
        return cls(num_classes=num_classes, latent_dim=256, hidden_size=256,
                   encoder_layers=8, decoder_layers=8)


def gru_cell_step(x: torch.Tensor, h: torch.Tensor, weight_ih: torch.Tensor,
                  weight_hh: torch.Tensor, bias_ih: torch.Tensor, bias_hh: torch.Tensor) -> torch.Tensor:
    """One GRU step from explicit weights, gate order (reset, update, candidate).

    Matches torch's stacked-GRU layer arithmetic exactly; kept as an
    independent route for testing the recurrent backbone.
    """
    gi = x @ weight_ih.T + bias_ih
    gh = h @ weight_hh.T + bias_hh
    i_r, i_z, i_n = gi.chunk(3, dim=-1)
    h_r, h_z, h_n = gh.chunk(3, dim=-1)
    reset = torch.sigmoid(i_r + h_r)
    update = torch.sigmoid(i_z + h_z)
    candidate = torch.tanh(i_n + reset * h_n)
    return (1.0 - update) * candidate + update * h


class GmmBank(nn.Module):
    """Trainable per-class latent Gaussians (diagonal, parameterized by log-std)."""

    def __init__(self, num_classes: int, latent_dim: int):
        super().__init__()
        self.num_classes = num_classes
        self.latent_dim = latent_dim
        self.means = nn.Parameter(torch.randn(num_classes, latent_dim) * MODE_INIT_VAR ** 0.5)
        self.log_stds = nn.Parameter(torch.zeros(num_classes, latent_dim))

    def class_mode(self, labels: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """(mean, log_std) rows for a batch of integer labels."""
        if labels.min() < 0 or labels.max() >= self.num_classes:
            raise ValidationError(f"labels out of range [0, {self.num_classes})")
        return self.means[labels], self.log_stds[labels]

    def sample(self, labels: torch.Tensor, generator: torch.Generator | None = None) -> torch.Tensor:
        mean, log_std = self.class_mode(labels)
        eps = torch.randn(mean.shape, generator=generator, dtype=mean.dtype)
        return mean + torch.exp(log_std) * eps


def _conditioning(labels: torch.Tensor, num_classes: int, length: int, dtype: torch.dtype) -> torch.Tensor:
    """Per-frame (B, T, C+1) block: one-hot label and normalized time in (0, 1]."""
    onehot = nn.functional.one_hot(labels, num_classes).to(dtype)
    onehot = onehot[:, None, :].expand(-1, length, -1)
    time = torch.arange(1, length + 1, dtype=dtype) / length
    time = time[None, :, None].expand(labels.shape[0], -1, -1)
    return torch.cat([onehot, time], dim=-1)


class SeqVae(nn.Module):
    """Class-conditional temporal VAE over (B, T, frame_dim) batches."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        cond = config.num_classes + 1
        self.encoder = nn.GRU(config.frame_dim + cond, config.hidden_size,
                              num_layers=config.encoder_layers, batch_first=True)
        self.mean_head = nn.Linear(config.hidden_size, config.latent_dim)
        self.logstd_head = nn.Linear(config.hidden_size, config.latent_dim)
        self.decoder = nn.GRU(config.latent_dim + cond, config.hidden_size,
                              num_layers=config.decoder_layers, batch_first=True)
        self.frame_head = nn.Linear(config.hidden_size, config.frame_dim)
        self.modes = GmmBank(config.num_classes, config.latent_dim)

    def encode(self, frames: torch.Tensor, labels: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Posterior (mean, log_std) from a batch of equal-length sequences."""
        b, t, f = frames.shape
        if f != self.config.frame_dim:
            raise ValidationError(f"expected frame dim {self.config.frame_dim}, got {f}")
        cond = _conditioning(labels, self.config.num_classes, t, frames.dtype)
        _, h_n = self.encoder(torch.cat([frames, cond], dim=-1))
        top = h_n[-1]
        mean = self.mean_head(top)
        log_std = torch.clamp(self.logstd_head(top), LOGSTD_MIN, LOGSTD_MAX)
        return mean, log_std

    def reparameterize(self, mean: torch.Tensor, log_std: torch.Tensor,
                       generator: torch.Generator | None = None) -> torch.Tensor:
        eps = torch.randn(mean.shape, generator=generator, dtype=mean.dtype)
        return mean + torch.exp(log_std) * eps

    def decode(self, latent: torch.Tensor, labels: torch.Tensor, length: int) -> torch.Tensor:
        """Frames (B, length, frame_dim) from one latent per sequence."""
        b = latent.shape[0]
        cond = _conditioning(labels, self.config.num_classes, length, latent.dtype)
        z = latent[:, None, :].expand(-1, length, -1)
        outputs, _ = self.decoder(torch.cat([z, cond], dim=-1))
        return self.frame_head(outputs)

    def forward(self, frames: torch.Tensor, labels: torch.Tensor,
                generator: torch.Generator | None = None):
        mean, log_std = self.encode(frames, labels)
        latent = self.reparameterize(mean, log_std, generator)
        recon = self.decode(latent, labels, frames.shape[1])
        return recon, mean, log_std, latent

    @torch.no_grad()
    def generate_batch(self, labels: torch.Tensor, length: int,
                       generator: torch.Generator | None = None) -> torch.Tensor:
        """Sample class-mode latents and decode them; (B, length, frame_dim)."""
        latent = self.modes.sample(labels, generator)
        return self.decode(latent, labels, length)

    @torch.no_grad()
    def generate(self, label: int, length: int,
                 generator: torch.Generator | None = None) -> torch.Tensor:
        return self.generate_batch(torch.tensor([label]), length, generator)[0]

    def snapshot(self) -> "SeqVae":
        """Frozen deep copy used as the replay generator; never trains again."""
        frozen = copy.deepcopy(self)
        frozen.eval()
        for p in frozen.parameters():
            p.requires_grad_(False)
        return frozen

    def param_hash(self) -> str:
        return params_hash(dict(self.state_dict()))


def params_hash(state: dict[str, torch.Tensor]) -> str:
    """sha256 over parameter names and raw little-endian bytes, name-sorted."""
    h = hashlib.sha256()
    for name in sorted(state):
        arr = state[name].detach().cpu().numpy()
        h.update(name.encode())
        h.update(str(arr.dtype).encode())
        h.update(str(arr.shape).encode())
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


CHECKPOINT_VERSION = 1


def _encode_array(arr: np.ndarray) -> dict:
    return {
        "dtype": str(arr.dtype),
        "shape": list(arr.shape),
        "data": base64.b64encode(np.ascontiguousarray(arr).tobytes()).decode("ascii"),
    }


def _decode_array(doc: dict) -> np.ndarray:
    raw = base64.b64decode(doc["data"])
    return np.frombuffer(raw, dtype=np.dtype(doc["dtype"])).reshape(doc["shape"]).copy()


def save_checkpoint(path: str | Path, model: SeqVae, class_names: tuple[str, ...],
                    skeleton: Skeleton, fps: int, rng_state: bytes | None = None,
                    extra: dict | None = None) -> None:
    """Write a self-contained, bit-stable JSON checkpoint."""
    doc = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "class_names": list(class_names),
        "skeleton": skeleton_to_dict(skeleton),
        "fps": int(fps),
        "params": {name: _encode_array(t.detach().cpu().numpy())
                   for name, t in model.state_dict().items()},
        "param_hash": model.param_hash(),
        "rng_state": base64.b64encode(rng_state).decode("ascii") if rng_state is not None else None,
        "extra": extra or {},
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, sort_keys=True, separators=(",", ":"))


@dataclass
class LoadedCheckpoint:
    model: SeqVae
    class_names: tuple[str, ...]
    skeleton: Skeleton
    fps: int
    rng_state: bytes | None
    extra: dict
    param_hash: str


def load_checkpoint(path: str | Path) -> LoadedCheckpoint:
    """Rebuild the model bit-exactly from a checkpoint file."""
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValidationError(f"unsupported checkpoint version {doc.get('version')}")
    model = SeqVae(ModelConfig(**doc["config"]))
    state = {name: torch.from_numpy(_decode_array(rec)) for name, rec in doc["params"].items()}
    model.load_state_dict(state)
    if model.param_hash() != doc["param_hash"]:
        raise ValidationError("checkpoint parameter hash mismatch")
    rng = doc.get("rng_state")
    return LoadedCheckpoint(
        model=model,
        class_names=tuple(doc["class_names"]),
        skeleton=skeleton_from_dict(doc["skeleton"]),
        fps=int(doc["fps"]),
        rng_state=base64.b64decode(rng) if rng is not None else None,
        extra=doc.get("extra", {}),
        param_hash=doc["param_hash"],
    )

"""Mixture generative replay.

Before each new task, a frozen snapshot of the model regenerates samples of
every class seen so far; those are mixed with the new task's real data.
Replay sets live only in memory and are rebuilt from scratch every task.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import torch

from .data import MotionSequence
from .errors import FrozenModelError, ValidationError
from .model import SeqVae


def as_ratio(value) -> Fraction:
    """Exact rational from '1/5', '0.2', 0.2, or a Fraction.

    Floats go through their decimal string so 0.1 means 1/10, not the nearest
    binary float; count arithmetic must floor exactly.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(str(value))
    return Fraction(value)


@dataclass(frozen=True)
class ReplayConfig:
    ratio: Fraction = Fraction(1, 5)
    replay_length: int = 60
    source: str = "generated"  # or "real": held-back real data, the cheating baseline

    def __post_init__(self):
        object.__setattr__(self, "ratio", as_ratio(self.ratio))
        if not 0 < self.ratio <= 1:
            raise ValidationError(f"replay ratio must be in (0, 1], got {self.ratio}")
        if self.replay_length < 1:
            raise ValidationError("replay_length must be >= 1")
        if self.source not in ("generated", "real"):
            raise ValidationError(f"replay source must be 'generated' or 'real', got {self.source!r}")


@dataclass(frozen=True)
class MixedTrainingSet:
    """New-task real data plus replay of earlier classes, with provenance."""

    real: tuple[MotionSequence, ...]
    replay: tuple[MotionSequence, ...]
    provenance_task: int

    def __post_init__(self):
        object.__setattr__(self, "real", tuple(self.real))
        object.__setattr__(self, "replay", tuple(self.replay))
        lengths = {seq.num_frames for seq in self.replay}
        if len(lengths) > 1:
            raise ValidationError(f"replay lengths must all match, got {sorted(lengths)}")

    @property
    def replay_length(self) -> int | None:
        return self.replay[0].num_frames if self.replay else None

    def entries(self) -> list[tuple[MotionSequence, bool]]:
        """All sequences with their is_replay flag, real first."""
        return [(s, False) for s in self.real] + [(s, True) for s in self.replay]

    def __len__(self) -> int:
        return len(self.real) + len(self.replay)


def replay_counts(seen_classes: list[int], new_task_count: int, ratio) -> dict[int, int]:
    """Samples to regenerate per seen class: max(1, floor(ratio * new_task_count))."""
    if not seen_classes:
        raise ValidationError("no classes seen yet; replay starts at the second task")
    if new_task_count < 1:
        raise ValidationError("new_task_count must be >= 1")
    count = max(1, math.floor(as_ratio(ratio) * new_task_count))
    return {int(c): count for c in seen_classes}


def build_replay_set(model: SeqVae, seen_classes: list[int], counts: dict[int, int],
                     length: int, generator: torch.Generator, fps: int = 20) -> list[MotionSequence]:
    """Generate counts[c] sequences per seen class from a frozen snapshot.

    Output order is class-sorted, then sample index, so a fixed generator
    state yields an identical set.
    """
    if any(p.requires_grad for p in model.parameters()):
        raise FrozenModelError("replay must be generated from a frozen snapshot")
    unseen = sorted(set(counts) - set(int(c) for c in seen_classes))
    if unseen:
        raise ValidationError(f"replay requested for classes never seen: {unseen}")
    sequences = []
    for label in sorted(int(c) for c in counts):
        batch = model.generate_batch(torch.full((counts[label],), label, dtype=torch.long),
                                     length, generator)
        for row in batch:
            sequences.append(MotionSequence(row.double().numpy(), label, fps))
    return sequences


def build_real_replay_set(earlier_sequences: list[MotionSequence], counts: dict[int, int],
                          generator: torch.Generator) -> list[MotionSequence]:
    """Cheating baseline: draw stored real samples of earlier classes instead.

    Uniform without replacement per class; errors if a class cannot cover its
    count.
    """
    by_class: dict[int, list[MotionSequence]] = {}
    for seq in earlier_sequences:
        by_class.setdefault(seq.label, []).append(seq)
    out = []
    for label in sorted(counts):
        pool = by_class.get(label, [])
        if len(pool) < counts[label]:
            raise ValidationError(
                f"class {label} has {len(pool)} stored samples, {counts[label]} requested")
        perm = torch.randperm(len(pool), generator=generator)[: counts[label]]
        out.extend(pool[i] for i in perm.tolist())
    return out


def mix(real_task_data: list[MotionSequence], replay_set: list[MotionSequence],
        provenance_task: int, earlier_classes: list[int] | None = None) -> MixedTrainingSet:
    """Concatenate with provenance flags; shuffling happens per epoch in the trainer."""
    if earlier_classes is not None:
        allowed = set(int(c) for c in earlier_classes)
        bad = sorted({s.label for s in replay_set} - allowed)
        if bad:
            raise ValidationError(f"replay labels {bad} are not from earlier tasks {sorted(allowed)}")
    return MixedTrainingSet(tuple(real_task_data), tuple(replay_set), provenance_task)

"""Optimization and the class-incremental training loop.

Holds the decoupled-weight-decay optimizer, the frozen classifier used for
the auxiliary loss and for evaluation, single-task training, and the full
task-by-task runner with generative replay.
"""
from __future__ import annotations

import copy
import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .body import Skeleton
from .data import FRAME_DIM, Dataset, MotionSequence, TaskSchedule
from .errors import (FrozenModelError, NonFiniteGradientError, TrainingDivergedError,
                     ValidationError)
from .losses import (LossBreakdown, aux_loss_logits, frames_to_positions, latent_loss,
                     reconstruction_loss_frames, total_loss, vertex_loss_positions)
from .metrics import EvalProtocol, EvalReport, evaluate, generative_class_accuracy
from .model import (ModelConfig, SeqVae, _decode_array, _encode_array, params_hash,
                    save_checkpoint)
from .replay import (MixedTrainingSet, ReplayConfig, build_real_replay_set,
                     build_replay_set, mix, replay_counts)
from .seeding import derive_seed, numpy_rng, torch_generator


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-2

    def __post_init__(self):
        if self.lr <= 0:
            raise ValidationError("lr must be > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValidationError("betas must lie in [0, 1)")


def init_optimizer_state(params: list[torch.Tensor]) -> dict:
    return {
        "step": 0,
        "m": [torch.zeros_like(p) for p in params],
        "v": [torch.zeros_like(p) for p in params],
    }


def optimizer_step(params: list[torch.Tensor], grads: list[torch.Tensor | None],
                   state: dict, config: OptimizerConfig) -> dict:
    """One AdamW update, in place on the params.

    Decay is decoupled: p <- p - lr*wd*p happens independently of the
    bias-corrected Adam step. Params whose grad is None are untouched,
    decay included.
    """
    if len(params) != len(grads):
        raise ValidationError(f"{len(params)} params but {len(grads)} grads")
    for i, g in enumerate(grads):
        if g is not None and not torch.isfinite(g).all():
            raise NonFiniteGradientError(f"non-finite gradient at parameter index {i}")
    state["step"] += 1
    t = state["step"]
    bc1 = 1.0 - config.beta1 ** t
    bc2 = 1.0 - config.beta2 ** t
    with torch.no_grad():
        for p, g, m, v in zip(params, grads, state["m"], state["v"]):
            if g is None:
                continue
            p.mul_(1.0 - config.lr * config.weight_decay)
            m.mul_(config.beta1).add_(g, alpha=1.0 - config.beta1)
            v.mul_(config.beta2).addcmul_(g, g, value=1.0 - config.beta2)
            denom = (v / bc2).sqrt_().add_(config.eps)
            p.addcdiv_(m / bc1, denom, value=-config.lr)
    return state


class AdamW:
    """Thin stateful wrapper over `optimizer_step` with parameter groups."""

    def __init__(self, groups: list[tuple[list[torch.nn.Parameter], OptimizerConfig]]):
        self.groups = [(list(params), cfg, init_optimizer_state(list(params)))
                       for params, cfg in groups]

    def zero_grad(self):
        for params, _, _ in self.groups:
            for p in params:
                p.grad = None

    def step(self):
        for params, cfg, state in self.groups:
            optimizer_step(params, [p.grad for p in params], state, cfg)


@dataclass(frozen=True)
class ClassifierConfig:
    num_classes: int
    frame_dim: int = FRAME_DIM
    hidden_size: int = 32
    layers: int = 2
    lr: float = 1e-3
    epochs: int = 40
    batch_size: int = 32
    holdout_fraction: float = 0.2
    weight_decay: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValidationError("classifier needs at least 2 classes")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ValidationError("holdout_fraction must be in (0, 1)")


class Classifier(nn.Module):
    """GRU feature extractor with a linear class head.

    Once frozen it serves two roles on immutable parameters: auxiliary loss
    during generator training and the feature source for every metric.
    """

    def __init__(self, config: ClassifierConfig):
        super().__init__()
        self.config = config
        self.gru = nn.GRU(config.frame_dim, config.hidden_size,
                          num_layers=config.layers, batch_first=True)
        self.head = nn.Linear(config.hidden_size, config.num_classes)
        self.frozen = False
        self.feature_dim = config.hidden_size
        self.num_classes = config.num_classes
        self.holdout_accuracy: float | None = None

    def features(self, frames: torch.Tensor) -> torch.Tensor:
        """Penultimate activations: final top-layer hidden state, (B, hidden)."""
        _, h_n = self.gru(frames)
        return h_n[-1]

    def forward(self, frames: torch.Tensor) -> torch.Tensor:
        return self.head(self.features(frames))

    def freeze(self):
        self.eval()
        for p in self.parameters():
            p.requires_grad_(False)
        self.frozen = True

    def param_hash(self) -> str:
        return params_hash(dict(self.state_dict()))


def _length_buckets(sequences: list[MotionSequence]) -> dict[int, list[int]]:
    buckets: dict[int, list[int]] = {}
    for i, seq in enumerate(sequences):
        buckets.setdefault(seq.num_frames, []).append(i)
    return buckets


def _bucket_tensors(sequences: list[MotionSequence]) -> dict[int, tuple[torch.Tensor, torch.Tensor]]:
    """Equal-length groups as (frames (N,T,F) float32, labels (N,)) tensors."""
    out = {}
    for length, idx in sorted(_length_buckets(sequences).items()):
        frames = torch.from_numpy(np.stack([sequences[i].frames for i in idx])).to(torch.float32)
        labels = torch.tensor([sequences[i].label for i in idx], dtype=torch.long)
        out[length] = (frames, labels)
    return out


def _batches(buckets: dict, batch_size: int, rng: np.random.Generator):
    """Seeded shuffle inside each bucket, buckets visited in length order."""
    for length in sorted(buckets):
        frames, labels = buckets[length][:2]
        extras = buckets[length][2:]
        order = rng.permutation(frames.shape[0])
        for start in range(0, len(order), batch_size):
            sel = torch.from_numpy(order[start : start + batch_size].copy())
            yield (frames[sel], labels[sel], *(x[sel] for x in extras))


def pretrain_classifier(dataset: Dataset, config: ClassifierConfig) -> Classifier:
    """Train on all classes with a held-out split, measure accuracy, freeze.

    The returned classifier is frozen; its `holdout_accuracy` field records
    the measured held-out accuracy.
    """
    if dataset.num_classes < 2:
        raise ValidationError("classifier pretraining needs at least 2 classes")
    if config.num_classes != dataset.num_classes:
        raise ValidationError(
            f"config says {config.num_classes} classes, dataset has {dataset.num_classes}")

    train_seqs, holdout_seqs = [], []
    for label in range(dataset.num_classes):
        pool = dataset.by_class(label)
        if not pool:
            raise ValidationError(f"class {label} has no sequences")
        k = max(1, int(round(config.holdout_fraction * len(pool))))
        order = numpy_rng(config.seed, 7, label).permutation(len(pool))
        holdout_seqs.extend(pool[i] for i in order[:k])
        train_seqs.extend(pool[i] for i in order[k:])
    if not train_seqs:
        raise ValidationError("holdout split left no training sequences")

    torch.manual_seed(derive_seed(config.seed, 8))
    classifier = Classifier(config)
    _fit_classifier(classifier, train_seqs, config)

    correct = total = 0
    with torch.no_grad():
        for length, (frames, labels) in _bucket_tensors(holdout_seqs).items():
            preds = classifier(frames).argmax(dim=-1)
            correct += int((preds == labels).sum())
            total += labels.shape[0]
    classifier.holdout_accuracy = correct / total
    classifier.freeze()
    return classifier


def _fit_classifier(classifier: Classifier, sequences: list[MotionSequence],
                    config: ClassifierConfig):
    if classifier.frozen:
        raise FrozenModelError("classifier is frozen; training is not allowed")
    opt = AdamW([(list(classifier.parameters()),
                  OptimizerConfig(lr=config.lr, weight_decay=config.weight_decay))])
    buckets = _bucket_tensors(sequences)
    rng = numpy_rng(config.seed, 9)
    classifier.train()
    for _ in range(config.epochs):
        for frames, labels in _batches(buckets, config.batch_size, rng):
            logits = classifier(frames)
            loss = nn.functional.cross_entropy(logits, labels)
            opt.zero_grad()
            loss.backward()
            opt.step()
    classifier.eval()


@dataclass(frozen=True)
class TrainConfig:
    model: ModelConfig
    lr: float = 1e-4
    epochs_per_task: int = 5000
    batch_size: int = 32
    lambda_latent: float = 1e-5
    lambda_aux: float = 1e-4
    weight_decay: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    replay: ReplayConfig | None = None

    def __post_init__(self):
        if self.lr <= 0:
            raise ValidationError("lr must be > 0")
        if self.epochs_per_task < 1 or self.batch_size < 1:
            raise ValidationError("epochs_per_task and batch_size must be >= 1")

    @classmethod
    def desk(cls, num_classes: int, **overrides) -> "TrainConfig":
        """Laptop-scale profile: small model, few epochs, faster lr.

        The loss weights are rescaled for the small latent space; the
        full-scale defaults barely couple a 16-dim posterior to its mode.
        """
        args = dict(model=ModelConfig.desk(num_classes), lr=2e-3, epochs_per_task=300,
                    lambda_latent=0.1, lambda_aux=0.01)
        args.update(overrides)
        return cls(**args)


def _optimizer_for(model: SeqVae, config: TrainConfig) -> AdamW:
    # Class modes are exempt from weight decay: decay would silently drag
    # the modes of classes whose losses never fire.
    opt_cfg = OptimizerConfig(lr=config.lr, beta1=config.beta1, beta2=config.beta2,
                              eps=config.eps, weight_decay=config.weight_decay)
    mode_cfg = OptimizerConfig(lr=config.lr, beta1=config.beta1, beta2=config.beta2,
                               eps=config.eps, weight_decay=0.0)
    mode_params = list(model.modes.parameters())
    mode_ids = {id(p) for p in mode_params}
    backbone = [p for p in model.parameters() if id(p) not in mode_ids]
    return AdamW([(backbone, opt_cfg), (mode_params, mode_cfg)])


def train_task(model: SeqVae, mixed: MixedTrainingSet, config: TrainConfig,
               classifier: Classifier | None, skeleton: Skeleton,
               task_index: int = 0) -> list[LossBreakdown]:
    """Train on one task's mixed data; returns the per-epoch loss curve.

    Each epoch is one seeded-shuffle pass over the full mixed set, batched by
    equal lengths. A non-finite loss aborts with the previous epoch's
    parameters attached.
    """
    sequences = [seq for seq, _ in mixed.entries()]
    if not sequences:
        raise ValidationError("mixed training set is empty")
    use_aux = config.lambda_aux != 0.0
    if use_aux:
        if classifier is None:
            raise ValidationError("lambda_aux != 0 requires a classifier")
        if not classifier.frozen:
            raise FrozenModelError("auxiliary loss requires a frozen classifier")

    buckets = {}
    for length, (frames, labels) in _bucket_tensors(sequences).items():
        with torch.no_grad():
            target_pos = frames_to_positions(frames, skeleton)
        buckets[length] = (frames, labels, target_pos)

    opt = _optimizer_for(model, config)
    shuffle_rng = numpy_rng(config.seed, 11, task_index)
    reparam_gen = torch_generator(config.seed, 12, task_index)
    last_good = copy.deepcopy(model.state_dict())
    curve: list[LossBreakdown] = []
    model.train()
    for epoch in range(config.epochs_per_task):
        sums = np.zeros(5)
        count = 0
        for frames, labels, target_pos in _batches(buckets, config.batch_size, shuffle_rng):
            recon, mean, log_std, _ = model(frames, labels, reparam_gen)
            recon_term = reconstruction_loss_frames(recon, frames)
            vertex_term = vertex_loss_positions(frames_to_positions(recon, skeleton), target_pos)
            mode_mean, mode_log_std = model.modes.class_mode(labels)
            latent_term = latent_loss(mean, log_std, mode_mean, mode_log_std).mean()
            if use_aux:
                aux_term = aux_loss_logits(classifier(recon), labels)
            else:
                aux_term = torch.zeros((), dtype=recon.dtype)
            parts = total_loss(vertex_term, recon_term, latent_term, aux_term,
                               config.lambda_latent, config.lambda_aux)
            if not torch.isfinite(parts.total):
                raise TrainingDivergedError(
                    f"non-finite loss at task {task_index}, epoch {epoch}",
                    last_good_checkpoint=last_good)
            opt.zero_grad()
            parts.total.backward()
            opt.step()
            b = frames.shape[0]
            logged = parts.detached()
            sums += b * np.array([logged.vertex, logged.reconstruction, logged.latent,
                                  logged.aux, logged.total])
            count += b
        mean_parts = sums / count
        curve.append(LossBreakdown(vertex=mean_parts[0], reconstruction=mean_parts[1],
                                   latent=mean_parts[2], aux=mean_parts[3], total=mean_parts[4],
                                   lambda_latent=config.lambda_latent, lambda_aux=config.lambda_aux))
        last_good = copy.deepcopy(model.state_dict())
    model.eval()
    return curve


@dataclass
class TaskRecord:
    task_index: int
    classes: list[int]
    eval_report: EvalReport
    checkpoint_hash: str
    loss_curve: list[LossBreakdown]
    replay_audit: dict | None = None

    def to_dict(self) -> dict:
        return {
            "task_index": self.task_index,
            "classes": self.classes,
            "eval_report": self.eval_report.to_dict(),
            "checkpoint_hash": self.checkpoint_hash,
            "loss_curve": [[c.vertex, c.reconstruction, c.latent, c.aux, c.total]
                           for c in self.loss_curve],
            "replay_audit": self.replay_audit,
        }


@dataclass
class RunLog:
    """Everything a run produced, minus the weights: reports, the per-(task,
    class) generative accuracy matrix, loss curves, and replay audit trails."""

    class_names: list[str]
    schedule: list[list[int]]
    accuracy_matrix: list[list[float]]  # rows: tasks completed; cols: all classes
    tasks: list[TaskRecord]
    config: dict

    def to_dict(self) -> dict:
        return {
            "class_names": self.class_names,
            "schedule": self.schedule,
            "accuracy_matrix": self.accuracy_matrix,
            "tasks": [t.to_dict() for t in self.tasks],
            "config": self.config,
        }

    def save(self, path: str | Path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, sort_keys=True, separators=(",", ":"))


def train_config_to_dict(config: TrainConfig) -> dict:
    doc = asdict(config)
    if config.replay is not None:
        doc["replay"]["ratio"] = str(config.replay.ratio)
    return doc


def write_loss_csv(path: str | Path, curve: list[LossBreakdown]):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "vertex", "recon", "latent", "aux", "total"])
        for epoch, c in enumerate(curve):
            writer.writerow([epoch, repr(c.vertex), repr(c.reconstruction), repr(c.latent),
                             repr(c.aux), repr(c.total)])


def run_cl2gen(dataset: Dataset, schedule: TaskSchedule, config: TrainConfig,
               protocol: EvalProtocol | None = None, classifier: Classifier | None = None,
               out_dir: str | Path | None = None) -> RunLog:
    """Class-incremental training across the schedule with generative replay.

    Per task k: (k > 0, replay on) rebuild the replay set from the frozen
    snapshot taken after task k-1, hash-checked against the checkpoint saved
    then; mix with task-k real data; train; snapshot; evaluate every class
    seen so far. The model never receives task identity, only class labels.
    """
    protocol = protocol or EvalProtocol()
    scheduled = sorted(c for group in schedule.tasks for c in group)
    if scheduled != list(range(dataset.num_classes)):
        raise ValidationError("schedule must cover exactly the dataset's classes")
    if config.model.num_classes != dataset.num_classes:
        raise ValidationError("model num_classes must match the dataset")

    if classifier is None:
        classifier = pretrain_classifier(
            dataset, ClassifierConfig(num_classes=dataset.num_classes,
                                      seed=derive_seed(config.seed, 2)))
    if not classifier.frozen:
        raise FrozenModelError("run_cl2gen needs a frozen classifier")

    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    torch.manual_seed(derive_seed(config.seed, 1))
    model = SeqVae(config.model)

    prev_snapshot: SeqVae | None = None
    saved_hashes: list[str] = []
    records: list[TaskRecord] = []
    matrix: list[list[float]] = []
    all_classes = list(range(dataset.num_classes))

    for k, task_classes in enumerate(schedule.tasks):
        real = [s for s in dataset.sequences if s.label in set(task_classes)]
        if not real:
            raise ValidationError(f"task {k} has no real sequences")
        audit = None
        if k > 0 and config.replay is not None:
            earlier = schedule.seen_classes(k - 1)
            counts_by_class = {c: sum(1 for s in real if s.label == c) for c in task_classes}
            per_class_count = math.floor(sum(counts_by_class.values()) / len(counts_by_class))
            counts = replay_counts(earlier, per_class_count, config.replay.ratio)
            used_hash = prev_snapshot.param_hash()
            if used_hash != saved_hashes[k - 1]:
                raise ValidationError(
                    f"replay snapshot for task {k} drifted from the task {k - 1} checkpoint")
            gen = torch_generator(config.seed, 21, k)
            if config.replay.source == "generated":
                replay_set = build_replay_set(prev_snapshot, earlier, counts,
                                              config.replay.replay_length, gen, dataset.fps)
            else:
                stored = [s for s in dataset.sequences if s.label in set(earlier)]
                replay_set = build_real_replay_set(stored, counts, gen)
            mixed = mix(real, replay_set, provenance_task=k, earlier_classes=earlier)
            audit = {
                "snapshot_hash_used": used_hash,
                "snapshot_hash_saved": saved_hashes[k - 1],
                "counts": {str(c): n for c, n in sorted(counts.items())},
                "replay_labels": sorted({s.label for s in replay_set}),
                "replay_size": len(replay_set),
                "source": config.replay.source,
            }
        else:
            mixed = mix(real, [], provenance_task=k)

        curve = train_task(model, mixed, config, classifier, dataset.skeleton, task_index=k)
        snapshot = model.snapshot()
        checkpoint_hash = snapshot.param_hash()
        if out_path is not None:
            save_checkpoint(out_path / f"checkpoint_task_{k}.json", snapshot,
                            dataset.class_names, dataset.skeleton, dataset.fps,
                            extra={"task_index": k, "seen_classes": schedule.seen_classes(k)})
            write_loss_csv(out_path / f"loss_task_{k}.csv", curve)

        report = evaluate(snapshot, classifier, protocol, schedule.seen_classes(k), dataset)
        row_acc = generative_class_accuracy(snapshot, classifier, all_classes,
                                            protocol.samples_per_class, protocol.eval_length,
                                            torch_generator(config.seed, 22, k), dataset.fps)
        matrix.append([row_acc[c] for c in all_classes])
        records.append(TaskRecord(task_index=k, classes=list(task_classes),
                                  eval_report=report, checkpoint_hash=checkpoint_hash,
                                  loss_curve=curve, replay_audit=audit))
        prev_snapshot = snapshot
        saved_hashes.append(checkpoint_hash)

    runlog = RunLog(class_names=list(dataset.class_names),
                    schedule=[list(g) for g in schedule.tasks],
                    accuracy_matrix=matrix, tasks=records,
                    config=train_config_to_dict(config))
    if out_path is not None:
        runlog.save(out_path / "runlog.json")
    return runlog


def save_classifier(path: str | Path, classifier: Classifier):
    doc = {
        "version": 1,
        "kind": "classifier",
        "config": asdict(classifier.config),
        "holdout_accuracy": classifier.holdout_accuracy,
        "params": {name: _encode_array(t.detach().cpu().numpy())
                   for name, t in classifier.state_dict().items()},
        "param_hash": classifier.param_hash(),
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, sort_keys=True, separators=(",", ":"))


def load_classifier(path: str | Path) -> Classifier:
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    if doc.get("kind") != "classifier" or doc.get("version") != 1:
        raise ValidationError("not a classifier checkpoint")
    classifier = Classifier(ClassifierConfig(**doc["config"]))
    state = {name: torch.from_numpy(_decode_array(rec)) for name, rec in doc["params"].items()}
    classifier.load_state_dict(state)
    if classifier.param_hash() != doc["param_hash"]:
        raise ValidationError("classifier parameter hash mismatch")
    classifier.holdout_accuracy = doc.get("holdout_accuracy")
    classifier.freeze()
    return classifier

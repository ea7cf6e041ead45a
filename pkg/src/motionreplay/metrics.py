"""Generative evaluation: accuracy, FID, diversity, multimodality with 95% CIs.

All metrics run on features of a pretrained frozen classifier. Generated
samples are compared against real sequences of the classes seen so far.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .data import Dataset, MotionSequence
from .errors import MetricError, ValidationError
from .seeding import numpy_rng, torch_generator

FID_NEGATIVE_FLOOR = -1e-6


@dataclass(frozen=True)
class EvalProtocol:
    samples_per_class: int = 100
    eval_length: int = 60
    repetitions: int = 20
    diversity_pairs: int = 200
    multimodality_pairs_per_class: int = 20
    fid_shrinkage: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        for name in ("samples_per_class", "eval_length", "repetitions",
                     "diversity_pairs", "multimodality_pairs_per_class"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")


@dataclass(frozen=True)
class Metric:
    mean: float
    ci95: float

    def to_list(self) -> list[float]:
        return [self.mean, self.ci95]


@dataclass(frozen=True)
class EvalReport:
    accuracy: Metric
    fid: Metric
    diversity: Metric
    multimodality: Metric
    per_class_accuracy: dict[int, float]
    repetitions: int
    single_repetition: bool

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy.to_list(),
            "fid": self.fid.to_list(),
            "diversity": self.diversity.to_list(),
            "multimodality": self.multimodality.to_list(),
            "per_class_accuracy": {str(k): v for k, v in sorted(self.per_class_accuracy.items())},
            "repetitions": self.repetitions,
            "single_repetition": self.single_repetition,
        }


def extract_features(classifier, motions: list[MotionSequence]) -> tuple[np.ndarray, np.ndarray]:
    """Predicted labels and penultimate-layer features, one row per motion.

    Motions may have mixed lengths; same-length groups are batched. Row order
    follows the input.
    """
    if not motions:
        raise ValidationError("no motions to featurize")
    if not getattr(classifier, "frozen", False):
        raise ValidationError("feature extraction requires a frozen classifier")
    num_classes = classifier.num_classes
    bad = [s.label for s in motions if s.label >= num_classes]
    if bad:
        raise ValidationError(f"labels {sorted(set(bad))} exceed classifier's {num_classes} classes")
    preds = np.empty(len(motions), dtype=np.int64)
    feats = np.empty((len(motions), classifier.feature_dim), dtype=np.float64)
    groups: dict[int, list[int]] = {}
    for i, seq in enumerate(motions):
        groups.setdefault(seq.num_frames, []).append(i)
    with torch.no_grad():
        for _, idx in sorted(groups.items()):
            batch = torch.from_numpy(np.stack([motions[i].frames for i in idx])).to(torch.float32)
            features = classifier.features(batch)
            logits = classifier.head(features)
            preds[idx] = logits.argmax(dim=-1).numpy()
            feats[idx] = features.double().numpy()
    return preds, feats


def accuracy(predicted, ground_truth) -> float:
    """Exact fraction of matching labels."""
    predicted = np.asarray(predicted)
    ground_truth = np.asarray(ground_truth)
    if predicted.shape != ground_truth.shape:
        raise ValidationError(f"length mismatch: {predicted.shape} vs {ground_truth.shape}")
    return int((predicted == ground_truth).sum()) / predicted.size


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    try:
        eigvals, eigvecs = np.linalg.eigh(matrix)
    except np.linalg.LinAlgError as exc:
        raise MetricError(f"eigendecomposition failed: {exc}") from exc
    eigvals = np.clip(eigvals, 0.0, None)
    return (eigvecs * np.sqrt(eigvals)) @ eigvecs.T


def fid(features_real: np.ndarray, features_gen: np.ndarray, shrinkage: float = 1e-6) -> float:
    """Frechet distance between Gaussians fitted to the two feature sets.

    ||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2)), with the matrix square
    root taken by eigendecomposition of the symmetrized product. Covariances
    get shrinkage S + eps*I; with eps = 0 each set must have > dim rows.
    """
    a = np.asarray(features_real, dtype=np.float64)
    b = np.asarray(features_gen, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValidationError(f"feature matrices must be 2-D with equal width: {a.shape}, {b.shape}")
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise ValidationError("need at least 2 rows per feature set")
    dim = a.shape[1]
    if shrinkage == 0.0 and (a.shape[0] < dim + 1 or b.shape[0] < dim + 1):
        raise ValidationError(f"without shrinkage each set needs >= {dim + 1} rows")
    mu1, mu2 = a.mean(axis=0), b.mean(axis=0)
    sigma1 = np.cov(a, rowvar=False).reshape(dim, dim) + shrinkage * np.eye(dim)
    sigma2 = np.cov(b, rowvar=False).reshape(dim, dim) + shrinkage * np.eye(dim)

    root1 = _psd_sqrt(sigma1)
    residual = np.linalg.norm(root1 @ root1 - sigma1)
    if residual > 1e-6 * max(1.0, np.linalg.norm(sigma1)):
        raise MetricError(f"matrix square root did not converge, residual {residual:.3e}")
    product = root1 @ sigma2 @ root1
    cross = _psd_sqrt(0.5 * (product + product.T))

    value = float(np.sum((mu1 - mu2) ** 2) + np.trace(sigma1) + np.trace(sigma2) - 2.0 * np.trace(cross))
    if value < FID_NEGATIVE_FLOOR:
        raise MetricError(f"fid came out {value:.3e}, below the numerical-noise floor")
    return max(value, 0.0)


def _row_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Plain sqrt-of-sum-of-squares so results are reproducible bit-for-bit
    # across BLAS builds.
    return np.sqrt(((a - b) ** 2).sum(axis=1))


def _pair_distances(features: np.ndarray, num_pairs: int | None, rng: np.random.Generator | None) -> float:
    n = features.shape[0]
    if num_pairs is None:
        iu, ju = np.triu_indices(n, k=1)
        return float(np.mean(_row_distances(features[iu], features[ju])))
    if rng is None:
        raise ValidationError("random pair sampling needs an rng")
    i = rng.integers(0, n, size=num_pairs)
    j = rng.integers(0, n, size=num_pairs)
    clash = i == j
    while clash.any():
        j[clash] = rng.integers(0, n, size=int(clash.sum()))
        clash = i == j
    return float(np.mean(_row_distances(features[i], features[j])))


def diversity(features: np.ndarray, num_pairs: int | None, rng: np.random.Generator | None = None) -> float:
    """Mean distance over random feature pairs; num_pairs=None means all pairs."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] < 2:
        raise ValidationError("diversity needs at least 2 feature rows")
    return _pair_distances(features, num_pairs, rng)


def multimodality(features_by_class: dict[int, np.ndarray], pairs_per_class: int | None,
                  rng: np.random.Generator | None = None) -> float:
    """Within-class mean pair distance, averaged over classes."""
    if not features_by_class:
        raise ValidationError("multimodality needs at least one class")
    per_class = []
    for label in sorted(features_by_class):
        rows = np.asarray(features_by_class[label], dtype=np.float64)
        if rows.shape[0] < 2:
            raise ValidationError(f"class {label} has {rows.shape[0]} rows; need >= 2")
        per_class.append(_pair_distances(rows, pairs_per_class, rng))
    return float(np.mean(per_class))


def _metric_from_samples(values: list[float]) -> Metric:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 1:
        return Metric(float(arr[0]), 0.0)
    return Metric(float(arr.mean()), float(1.96 * arr.std(ddof=1) / np.sqrt(arr.size)))


def generative_class_accuracy(model, classifier, classes: list[int], samples_per_class: int,
                              length: int, generator: torch.Generator, fps: int = 20) -> dict[int, float]:
    """Per-class accuracy of the classifier on freshly generated samples."""
    out = {}
    for label in classes:
        batch = model.generate_batch(torch.full((samples_per_class,), int(label), dtype=torch.long),
                                     length, generator)
        motions = [MotionSequence(row.double().numpy(), int(label), fps) for row in batch]
        preds, _ = extract_features(classifier, motions)
        out[int(label)] = accuracy(preds, np.full(samples_per_class, label))
    return out


def evaluate(model, classifier, protocol: EvalProtocol, seen_classes: list[int],
             reference: Dataset) -> EvalReport:
    """Full generative evaluation of a frozen model snapshot.

    Per repetition: generate samples_per_class sequences for every seen class
    at eval_length, featurize, and score against the real sequences of those
    classes. Means and normal-approximation 95% CIs are taken across
    repetitions.
    """
    if any(p.requires_grad for p in model.parameters()):
        raise ValidationError("evaluation requires a frozen model snapshot")
    seen = [int(c) for c in seen_classes]
    if not seen:
        raise ValidationError("no classes to evaluate")
    real = [s for s in reference.sequences if s.label in set(seen)]
    if not real:
        raise ValidationError("reference dataset has no sequences for the seen classes")
    _, real_feats = extract_features(classifier, real)

    acc_runs, fid_runs, div_runs, multi_runs = [], [], [], []
    per_class_sums = {c: 0.0 for c in seen}
    for rep in range(protocol.repetitions):
        gen = torch_generator(protocol.seed, 101, rep)
        motions, labels = [], []
        for label in seen:
            batch = model.generate_batch(
                torch.full((protocol.samples_per_class,), label, dtype=torch.long),
                protocol.eval_length, gen)
            motions.extend(MotionSequence(row.double().numpy(), label, reference.fps) for row in batch)
            labels.extend([label] * protocol.samples_per_class)
        preds, feats = extract_features(classifier, motions)
        labels_arr = np.asarray(labels)
        acc_runs.append(accuracy(preds, labels_arr))
        for label in seen:
            mask = labels_arr == label
            per_class_sums[label] += accuracy(preds[mask], labels_arr[mask])
        fid_runs.append(fid(real_feats, feats, protocol.fid_shrinkage))
        rng = numpy_rng(protocol.seed, 202, rep)
        div_runs.append(diversity(feats, protocol.diversity_pairs, rng))
        by_class = {label: feats[labels_arr == label] for label in seen}
        multi_runs.append(multimodality(by_class, protocol.multimodality_pairs_per_class, rng))

    reps = protocol.repetitions
    return EvalReport(
        accuracy=_metric_from_samples(acc_runs),
        fid=_metric_from_samples(fid_runs),
        diversity=_metric_from_samples(div_runs),
        multimodality=_metric_from_samples(multi_runs),
        per_class_accuracy={c: per_class_sums[c] / reps for c in seen},
        repetitions=reps,
        single_repetition=reps == 1,
    )

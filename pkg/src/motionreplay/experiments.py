"""Canned desk-scale experiments: forgetting vs. replay, and per-task curves.

These are the runnable counterparts of the headline continual-learning
claims: without replay a class-incremental generator forgets earlier
classes; mixture generative replay with the auxiliary loss retains them,
and more replay retains more.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from .data import Dataset, TaskSchedule, split_tasks
from .metrics import EvalProtocol
from .model import ModelConfig
from .replay import ReplayConfig
from .seeding import derive_seed
from .synth import SynthSpec, synth_generate
from .training import (Classifier, ClassifierConfig, RunLog, TrainConfig,
                       pretrain_classifier, run_cl2gen)


@dataclass(frozen=True)
class DeskSetup:
    """Everything the desk-scale comparison needs, in one place."""

    num_classes: int = 4
    per_class: int = 50
    classes_per_task: int = 2
    data_seed: int = 7
    length_range: tuple[int, int] = (60, 64)
    fps: int = 20
    epochs_per_task: int = 300
    lr: float = 2e-3
    # Desk-scale models need a much stronger pull toward the class modes than
    # the full-scale defaults; these were picked by sweep on held-out
    # generative accuracy.
    lambda_latent: float = 0.1
    lambda_aux: float = 0.01
    batch_size: int = 32
    seeds: tuple[int, ...] = (0, 1, 2)
    samples_per_class: int = 50
    repetitions: int = 5
    eval_seed: int = 100
    classifier_seed: int = 1000


def desk_dataset(setup: DeskSetup) -> Dataset:
    return synth_generate(SynthSpec(num_classes=setup.num_classes,
                                    sequences_per_class=setup.per_class,
                                    length_range=setup.length_range,
                                    fps=setup.fps, seed=setup.data_seed))


def desk_classifier(dataset: Dataset, setup: DeskSetup) -> Classifier:
    return pretrain_classifier(dataset, ClassifierConfig(num_classes=dataset.num_classes,
                                                         seed=setup.classifier_seed))


def desk_protocol(setup: DeskSetup) -> EvalProtocol:
    return EvalProtocol(samples_per_class=setup.samples_per_class,
                        repetitions=setup.repetitions, seed=setup.eval_seed)


def arm_config(setup: DeskSetup, num_classes: int, seed: int,
               replay_ratio: Fraction | None, aux: bool) -> TrainConfig:
    replay = ReplayConfig(ratio=replay_ratio) if replay_ratio is not None else None
    return TrainConfig(model=ModelConfig.desk(num_classes), lr=setup.lr,
                       epochs_per_task=setup.epochs_per_task, batch_size=setup.batch_size,
                       lambda_latent=setup.lambda_latent,
                       lambda_aux=setup.lambda_aux if aux else 0.0, seed=seed, replay=replay)


@dataclass
class ArmSummary:
    """One configuration across seeds."""

    name: str
    runlogs: list[RunLog]
    final_overall: list[float]  # final-task accuracy over all seen classes, per seed
    final_first_task: list[float]  # final-task accuracy over task-1 classes, per seed

    @staticmethod
    def _ci(values: list[float]) -> float:
        arr = np.asarray(values, dtype=np.float64)
        if arr.size < 2:
            return 0.0
        return float(1.96 * arr.std(ddof=1) / np.sqrt(arr.size))

    @property
    def mean_overall(self) -> float:
        return float(np.mean(self.final_overall))

    @property
    def ci_overall(self) -> float:
        return self._ci(self.final_overall)

    @property
    def mean_first_task(self) -> float:
        return float(np.mean(self.final_first_task))


# The three Table-style arms: plain no-replay, and generated replay with the
# auxiliary loss at two ratios.
FORGETTING_ARMS: dict[str, tuple[Fraction | None, bool]] = {
    "no_replay": (None, False),
    "replay_1_16_aux": (Fraction(1, 16), True),
    "replay_1_5_aux": (Fraction(1, 5), True),
}


@dataclass
class ForgettingComparison:
    setup: DeskSetup
    schedule: TaskSchedule
    arms: dict[str, ArmSummary]
    classifier_holdout_accuracy: float


def forgetting_comparison(setup: DeskSetup = DeskSetup(), dataset: Dataset | None = None,
                          classifier: Classifier | None = None,
                          verbose: bool = False) -> ForgettingComparison:
    """Run all arms over all seeds on one shared dataset and classifier."""
    dataset = dataset or desk_dataset(setup)
    schedule = split_tasks(dataset, setup.classes_per_task)
    classifier = classifier or desk_classifier(dataset, setup)
    protocol = desk_protocol(setup)
    first_task = list(schedule.tasks[0])

    arms: dict[str, ArmSummary] = {}
    for name, (ratio, aux) in FORGETTING_ARMS.items():
        summary = ArmSummary(name=name, runlogs=[], final_overall=[], final_first_task=[])
        for seed in setup.seeds:
            config = arm_config(setup, dataset.num_classes, seed, ratio, aux)
            log = run_cl2gen(dataset, schedule, config, protocol, classifier)
            final = log.tasks[-1].eval_report
            overall = final.accuracy.mean
            first = float(np.mean([final.per_class_accuracy[c] for c in first_task]))
            summary.runlogs.append(log)
            summary.final_overall.append(overall)
            summary.final_first_task.append(first)
            if verbose:
                print(f"[{name} seed={seed}] overall={overall:.3f} task1={first:.3f}",
                      flush=True)
        arms[name] = summary
    return ForgettingComparison(setup=setup, schedule=schedule, arms=arms,
                                classifier_holdout_accuracy=classifier.holdout_accuracy)


@dataclass
class TaskCurveResult:
    """Per-task generative accuracy of one tracked class, replay vs. none."""

    setup: DeskSetup
    schedule: TaskSchedule
    tracked_class: int
    replay_log: RunLog
    no_replay_log: RunLog

    def curve(self, log: RunLog) -> list[float]:
        col = self.tracked_class
        return [row[col] for row in log.accuracy_matrix]


def task_curve_experiment(setup: DeskSetup | None = None, verbose: bool = False) -> TaskCurveResult:
    """Three-task schedule; tracks a class introduced in task 2 across tasks."""
    setup = setup or replace(DeskSetup(), num_classes=6, data_seed=11)
    if setup.num_classes < 3 * setup.classes_per_task:
        raise ValueError("task-curve experiment needs at least 3 tasks")
    dataset = desk_dataset(setup)
    schedule = split_tasks(dataset, setup.classes_per_task)
    classifier = desk_classifier(dataset, setup)
    protocol = desk_protocol(setup)
    tracked = schedule.tasks[1][0]
    seed = setup.seeds[0]

    logs = {}
    for name, (ratio, aux) in (("replay", FORGETTING_ARMS["replay_1_5_aux"]),
                               ("no_replay", FORGETTING_ARMS["no_replay"])):
        config = arm_config(setup, dataset.num_classes, derive_seed(seed, 31), ratio, aux)
        logs[name] = run_cl2gen(dataset, schedule, config, protocol, classifier)
        if verbose:
            col = [row[tracked] for row in logs[name].accuracy_matrix]
            print(f"[{name}] class {tracked} accuracy per task: "
                  + " ".join(f"{v:.3f}" for v in col), flush=True)
    return TaskCurveResult(setup=setup, schedule=schedule, tracked_class=tracked,
                           replay_log=logs["replay"], no_replay_log=logs["no_replay"])

"""Command-line pipeline: prepare data, train, generate, evaluate, report.

Exit codes: 0 success, 1 validation/input error, 2 runtime or numeric error.
Config files are flat `key = value` lines mirroring the config dataclasses;
`--set key=value` overrides file values.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .data import Dataset, MotionSequence, load_dataset, save_dataset, split_tasks
from .errors import ValidationError
from .metrics import EvalProtocol, evaluate
from .model import ModelConfig, load_checkpoint
from .replay import ReplayConfig
from .seeding import torch_generator
from .synth import SynthSpec, synth_generate
from .training import (ClassifierConfig, TrainConfig, load_classifier,
                       pretrain_classifier, run_cl2gen, save_classifier,
                       train_config_to_dict)

DETERMINISTIC_TIMESTAMP = "fixed-by-deterministic-mode"


class _ArgumentError(ValidationError):
    """Raised instead of argparse's SystemExit so main() can map it to exit 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _ArgumentError(message)


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValidationError(f"expected a boolean, got {text!r}")


# Every key a train/evaluate config file may contain, with its converter.
CONFIG_KEYS = {
    "lr": float, "epochs_per_task": int, "batch_size": int,
    "lambda_latent": float, "lambda_aux": float, "weight_decay": float,
    "beta1": float, "beta2": float, "eps": float, "seed": int,
    "classes_per_task": int,
    "model.profile": str, "model.latent_dim": int, "model.hidden_size": int,
    "model.encoder_layers": int, "model.decoder_layers": int,
    "replay.enabled": _parse_bool, "replay.ratio": str,
    "replay.length": int, "replay.source": str,
    "eval.samples_per_class": int, "eval.eval_length": int, "eval.repetitions": int,
    "eval.diversity_pairs": int, "eval.multimodality_pairs_per_class": int,
    "eval.fid_shrinkage": float, "eval.seed": int,
    "classifier.hidden_size": int, "classifier.layers": int, "classifier.lr": float,
    "classifier.epochs": int, "classifier.batch_size": int,
    "classifier.holdout_fraction": float, "classifier.seed": int,
}


def parse_config_text(text: str) -> dict[str, str]:
    """Flat `key = value` lines; '#' starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"config line {lineno}: expected key = value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


def resolve_config(file_path: str | None, overrides: list[str]) -> dict[str, object]:
    raw: dict[str, str] = {}
    if file_path:
        raw.update(parse_config_text(Path(file_path).read_text(encoding="utf-8")))
    for item in overrides or []:
        if "=" not in item:
            raise ValidationError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        raw[key.strip()] = value.strip()
    resolved = {}
    for key, value in raw.items():
        if key not in CONFIG_KEYS:
            raise ValidationError(f"unknown config key {key!r}")
        resolved[key] = CONFIG_KEYS[key](value)
    return resolved


def _subset(kv: dict, prefix: str) -> dict:
    plen = len(prefix)
    return {key[plen:]: value for key, value in kv.items() if key.startswith(prefix)}


def build_model_config(kv: dict, num_classes: int) -> ModelConfig:
    profile = kv.get("model.profile", "desk")
    if profile == "desk":
        config = ModelConfig.desk(num_classes)
    elif profile == "full":
        config = ModelConfig.full(num_classes)
    else:
        raise ValidationError(f"model.profile must be 'desk' or 'full', got {profile!r}")
    overrides = {k: v for k, v in _subset(kv, "model.").items() if k != "profile"}
    return dataclasses.replace(config, **overrides)


def build_train_config(kv: dict, num_classes: int) -> TrainConfig:
    replay = None
    if kv.get("replay.enabled", False):
        replay = ReplayConfig(ratio=Fraction(kv.get("replay.ratio", "1/5")),
                              replay_length=kv.get("replay.length", 60),
                              source=kv.get("replay.source", "generated"))
    fields = {k: v for k, v in kv.items() if "." not in k and k != "classes_per_task"}
    return TrainConfig(model=build_model_config(kv, num_classes), replay=replay, **fields)


def build_protocol(kv: dict) -> EvalProtocol:
    return EvalProtocol(**_subset(kv, "eval."))


def build_classifier_config(kv: dict, num_classes: int) -> ClassifierConfig:
    return ClassifierConfig(num_classes=num_classes, **_subset(kv, "classifier."))


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _timestamp(deterministic: bool) -> str:
    if deterministic:
        return DETERMINISTIC_TIMESTAMP
    return datetime.now(timezone.utc).isoformat()


def write_manifest(path: Path, config_doc: dict, data_path: Path, seeds: dict,
                   artifacts: dict[str, Path], started: str, deterministic: bool):
    doc = {
        "version": 1,
        "code_version": __version__,
        "deterministic": deterministic,
        "config": config_doc,
        "dataset": {"path": str(data_path), "sha256": _sha256(data_path)},
        "seeds": seeds,
        "artifacts": {name: {"path": str(p), "sha256": _sha256(p)}
                      for name, p in sorted(artifacts.items())},
        "timestamps": {"started": started, "finished": _timestamp(deterministic)},
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, sort_keys=True, separators=(",", ":"))


def verify_manifest(path: str | Path) -> bool:
    """Re-hash every artifact listed in a manifest; True if all match."""
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    entries = [doc["dataset"]] + list(doc["artifacts"].values())
    return all(_sha256(Path(e["path"])) == e["sha256"] for e in entries)


def parse_synth_spec(text: str) -> SynthSpec:
    """'classes=4,per_class=50,seed=7[,length_min=60,length_max=64,fps=20,noise=0.01]'."""
    fields = {}
    for part in text.split(","):
        if not part.strip():
            continue
        if "=" not in part:
            raise ValidationError(f"synth spec expects key=value items, got {part!r}")
        key, value = (s.strip() for s in part.split("=", 1))
        fields[key] = value
    known = {"classes", "per_class", "seed", "length_min", "length_max", "fps", "noise"}
    unknown = set(fields) - known
    if unknown:
        raise ValidationError(f"unknown synth keys {sorted(unknown)}; known: {sorted(known)}")
    length_range = (int(fields.get("length_min", 60)), int(fields.get("length_max", 64)))
    return SynthSpec(num_classes=int(fields.get("classes", 4)),
                     sequences_per_class=int(fields.get("per_class", 50)),
                     length_range=length_range, fps=int(fields.get("fps", 20)),
                     angle_noise=float(fields.get("noise", 0.01)),
                     seed=int(fields.get("seed", 0)))


def cmd_prepare_data(args) -> int:
    if (args.synth is None) == (args.input is None):
        raise ValidationError("exactly one of --synth or --input is required")
    if args.synth is not None:
        dataset = synth_generate(parse_synth_spec(args.synth))
    else:
        dataset = load_dataset(args.input)
    out = Path(args.out)
    save_dataset(dataset, out)
    counts = dataset.class_counts()
    print(f"wrote {out} sha256={_sha256(out)}")
    print(f"classes={dataset.num_classes} sequences={len(dataset.sequences)} "
          f"per_class={counts} fps={dataset.fps}")
    return 0


def cmd_train(args) -> int:
    if args.deterministic:
        torch.set_num_threads(1)
    started = _timestamp(args.deterministic)
    kv = resolve_config(args.config, args.set)
    dataset = load_dataset(args.data)
    train_config = build_train_config(kv, dataset.num_classes)
    protocol = build_protocol(kv)
    classifier_config = build_classifier_config(kv, dataset.num_classes)

    if args.mode == "offline":
        schedule = split_tasks(dataset, dataset.num_classes)
    else:
        schedule = split_tasks(dataset, kv.get("classes_per_task", 2))

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    classifier = pretrain_classifier(dataset, classifier_config)
    save_classifier(out_dir / "classifier.json", classifier)
    print(f"classifier held-out accuracy: {classifier.holdout_accuracy:.3f}")

    runlog = run_cl2gen(dataset, schedule, train_config, protocol, classifier, out_dir)

    artifacts = {"classifier": out_dir / "classifier.json", "runlog": out_dir / "runlog.json"}
    for k in range(schedule.num_tasks):
        artifacts[f"checkpoint_task_{k}"] = out_dir / f"checkpoint_task_{k}.json"
        artifacts[f"loss_task_{k}"] = out_dir / f"loss_task_{k}.csv"
    config_doc = {"mode": args.mode, "train": train_config_to_dict(train_config),
                  "protocol": dataclasses.asdict(protocol),
                  "classifier": dataclasses.asdict(classifier_config),
                  "classes_per_task": schedule.classes_per_task}
    write_manifest(out_dir / "manifest.json", config_doc, Path(args.data),
                   {"train": train_config.seed, "eval": protocol.seed,
                    "classifier": classifier_config.seed},
                   artifacts, started, args.deterministic)

    for record in runlog.tasks:
        acc = record.eval_report.accuracy
        print(f"task {record.task_index} classes={record.classes} "
              f"accuracy={acc.mean:.3f}±{acc.ci95:.3f}")
    print(f"wrote {out_dir / 'runlog.json'}")
    return 0


def _resolve_class(spec: str, class_names: tuple[str, ...]) -> int:
    if spec.isdigit() or (spec.startswith("-") and spec[1:].isdigit()):
        label = int(spec)
        if not 0 <= label < len(class_names):
            raise ValidationError(f"class id {label} out of range; known: {list(class_names)}")
        return label
    if spec in class_names:
        return class_names.index(spec)
    raise ValidationError(f"unknown class {spec!r}; known classes: {list(class_names)}")


def cmd_generate(args) -> int:
    loaded = load_checkpoint(args.checkpoint)
    label = _resolve_class(args.cls, loaded.class_names)
    model = loaded.model.snapshot()
    gen = torch_generator(args.seed, 51)
    batch = model.generate_batch(torch.full((args.count,), label, dtype=torch.long),
                                 args.frames, gen)
    sequences = tuple(MotionSequence(row.double().numpy(), label, loaded.fps) for row in batch)
    out = Path(args.out)
    save_dataset(Dataset(sequences, loaded.class_names, loaded.skeleton, loaded.fps), out)
    print(f"wrote {out}: {args.count} x {args.frames} frames of class "
          f"{loaded.class_names[label]!r} (id {label})")
    return 0


def cmd_evaluate(args) -> int:
    kv = resolve_config(args.protocol, args.set)
    protocol = build_protocol(kv)
    loaded = load_checkpoint(args.checkpoint)
    classifier = load_classifier(args.classifier)
    dataset = load_dataset(args.data)
    if args.classes:
        seen = [int(c) for c in args.classes.split(",")]
    else:
        seen = loaded.extra.get("seen_classes", list(range(dataset.num_classes)))
    report = evaluate(loaded.model.snapshot(), classifier, protocol, seen, dataset)
    out = Path(args.out)
    with open(out, "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, sort_keys=True, separators=(",", ":"))
    print(f"accuracy={report.accuracy.mean:.3f}±{report.accuracy.ci95:.3f} "
          f"fid={report.fid.mean:.3f}±{report.fid.ci95:.3f} "
          f"diversity={report.diversity.mean:.3f} multimodality={report.multimodality.mean:.3f}")
    print(f"wrote {out}")
    return 0


def cmd_report(args) -> int:
    with open(args.runlog, "r", encoding="utf-8") as f:
        log = json.load(f)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    class_names = log["class_names"]
    matrix = log["accuracy_matrix"]

    lines = [f"{'task':>4}  {'classes':<12} {'accuracy':>16} {'fid':>16} "
             f"{'diversity':>16} {'multimodality':>16}"]
    for rec in log["tasks"]:
        rep = rec["eval_report"]
        cell = lambda m: f"{m[0]:.3f} ± {m[1]:.3f}"
        lines.append(f"{rec['task_index']:>4}  {str(rec['classes']):<12}"
                     f" {cell(rep['accuracy']):>16} {cell(rep['fid']):>16}"
                     f" {cell(rep['diversity']):>16} {cell(rep['multimodality']):>16}")
    summary = "\n".join(lines) + "\n"
    (out_dir / "summary.txt").write_text(summary, encoding="utf-8")

    with open(out_dir / "accuracy_curves.csv", "w", encoding="utf-8") as f:
        f.write("task," + ",".join(class_names) + "\n")
        for k, row in enumerate(matrix):
            f.write(str(k) + "," + ",".join(repr(v) for v in row) + "\n")

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(7, 4))
    tasks = np.arange(1, len(matrix) + 1)
    for col, name in enumerate(class_names):
        ax.plot(tasks, [row[col] for row in matrix], marker="o", label=name)
    ax.set_xlabel("tasks trained")
    ax.set_ylabel("generative accuracy")
    ax.set_xticks(tasks)
    ax.set_ylim(0.0, 1.05)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_dir / "accuracy_curves.png", dpi=120)
    plt.close(fig)

    print(summary, end="")
    print(f"wrote {out_dir / 'summary.txt'}, accuracy_curves.csv, accuracy_curves.png")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="motionreplay",
                     description="Class-incremental motion generation with generative replay.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare-data", help="write a canonical dataset file")
    p.add_argument("--synth", help="synthetic spec, e.g. 'classes=4,per_class=50,seed=7'")
    p.add_argument("--input", help="existing dataset file to validate and canonicalize")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prepare_data)

    p = sub.add_parser("train", help="offline or class-incremental training")
    p.add_argument("--mode", choices=["offline", "cl2gen"], default="cl2gen")
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (repeatable)")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--deterministic", action="store_true",
                   help="single-threaded, fixed timestamps: bit-identical reruns")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="sample sequences from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--class", dest="cls", required=True, help="class name or integer id")
    p.add_argument("--frames", type=int, default=60)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score a checkpoint against real data")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--classifier", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--protocol", help="flat key=value protocol file (eval.* keys)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--classes", help="comma-separated class ids (default: checkpoint's)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="summary table, accuracy curves CSV, and plot")
    p.add_argument("--runlog", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    from .errors import (MetricError, NonFiniteGradientError, TrainingDivergedError)
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except _ArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValidationError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (MetricError, TrainingDivergedError, NonFiniteGradientError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

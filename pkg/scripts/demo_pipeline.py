"""End-to-end demo of the CLI surface on a small synthetic dataset.

Prepares data, trains class-incrementally with replay, generates samples
from the final checkpoint, evaluates it, and renders the report. Finishes
in about a minute on a laptop CPU; pass --full-profile to see the large
configuration instead (hours, not minutes).
"""
import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from motionreplay.cli import main as cli


def run(argv: list[str]) -> None:
    print(f"$ motionreplay {' '.join(argv)}")
    code = cli(argv)
    if code != 0:
        raise SystemExit(code)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", type=Path, default=Path("demo_run"))
    parser.add_argument("--full-profile", action="store_true",
                        help="use the full-size model instead of the desk one")
    args = parser.parse_args()
    work = args.workdir
    work.mkdir(parents=True, exist_ok=True)
    data = work / "dataset.json"
    out = work / "run"

    run(["prepare-data", "--synth",
         "classes=4,per_class=12,length_min=24,length_max=28,seed=5",
         "--out", str(data)])

    overrides = ["replay.enabled=true", "replay.ratio=1/5",
                 "classes_per_task=2", "seed=0",
                 "eval.samples_per_class=16", "eval.repetitions=3",
                 "eval.eval_length=24",
                 "classifier.epochs=20"]
    if args.full_profile:
        overrides += ["model.profile=full", "epochs_per_task=5000"]
    else:
        overrides += ["model.profile=desk", "epochs_per_task=120"]
    argv = ["train", "--deterministic", "--data", str(data), "--out", str(out)]
    for item in overrides:
        argv += ["--set", item]
    run(argv)

    final = out / "checkpoint_task_1.json"
    run(["generate", "--checkpoint", str(final), "--class", "motion_02",
         "--count", "4", "--frames", "24", "--seed", "1",
         "--out", str(work / "samples.json")])
    run(["evaluate", "--checkpoint", str(final), "--data", str(data),
         "--classifier", str(out / "classifier.json"),
         "--set", "eval.samples_per_class=16", "--set", "eval.repetitions=3",
         "--set", "eval.eval_length=24",
         "--out", str(work / "eval.json")])
    run(["report", "--runlog", str(out / "runlog.json"),
         "--out", str(work / "report")])
    print(f"artifacts under {work}/")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

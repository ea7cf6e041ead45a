"""Run the desk-scale forgetting comparison and dump a JSON summary.

Trains the same class-incremental schedule under three arms (no replay,
replay 1/16 + aux, replay 1/5 + aux), each averaged over seeds, and reports
final overall and first-task generative accuracy per arm.
"""
import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from motionreplay.experiments import DeskSetup, forgetting_comparison


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--epochs", type=int, default=None,
                        help="epochs per task (default: desk profile value)")
    parser.add_argument("--seeds", type=str, default=None,
                        help="comma-separated training seeds, e.g. 0,1,2")
    parser.add_argument("--out", type=Path, default=Path("forgetting_summary.json"))
    parser.add_argument("--quiet", action="store_true")
    args = parser.parse_args()

    setup = DeskSetup()
    if args.epochs is not None:
        setup = dataclasses.replace(setup, epochs_per_task=args.epochs)
    if args.seeds is not None:
        seeds = tuple(int(s) for s in args.seeds.split(","))
        setup = dataclasses.replace(setup, seeds=seeds)

    start = time.perf_counter()
    result = forgetting_comparison(setup, verbose=not args.quiet)
    elapsed = time.perf_counter() - start

    summary = {
        "classifier_holdout_accuracy": result.classifier_holdout_accuracy,
        "wall_seconds": round(elapsed, 1),
        "arms": {
            name: {
                "mean_overall": arm.mean_overall,
                "ci_overall": arm.ci_overall,
                "mean_first_task": arm.mean_first_task,
                "final_overall_per_seed": list(arm.final_overall),
                "final_first_task_per_seed": list(arm.final_first_task),
            }
            for name, arm in result.arms.items()
        },
    }
    args.out.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")

    print(f"wall time: {elapsed / 60:.1f} min")
    for name, arm in result.arms.items():
        print(f"{name:>16}: overall {arm.mean_overall:.3f} +- {arm.ci_overall:.3f}  "
              f"first-task {arm.mean_first_task:.3f}")
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

"""Track one class's generative accuracy across a three-task schedule.

Runs the same incremental schedule with and without replay and follows the
first class of the second task: near-chance before its task, a jump when it
is trained, then either retention (replay) or collapse (no replay).
"""
import argparse
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from motionreplay.experiments import task_curve_experiment


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("task_curve.json"))
    parser.add_argument("--plot", type=Path, default=None,
                        help="optional PNG path for the accuracy curves")
    parser.add_argument("--quiet", action="store_true")
    args = parser.parse_args()

    result = task_curve_experiment(verbose=not args.quiet)
    replay = result.curve(result.replay_log)
    none = result.curve(result.no_replay_log)

    payload = {
        "tracked_class": result.tracked_class,
        "replay_curve": replay,
        "no_replay_curve": none,
        "schedule": result.replay_log.schedule,
    }
    args.out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(f"tracked class {result.tracked_class}")
    print(f"   replay 1/5 + aux: {' -> '.join(f'{v:.3f}' for v in replay)}")
    print(f"          no replay: {' -> '.join(f'{v:.3f}' for v in none)}")
    print(f"wrote {args.out}")

    if args.plot is not None:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        tasks = list(range(1, len(replay) + 1))
        fig, ax = plt.subplots(figsize=(5, 3.2))
        ax.plot(tasks, replay, marker="o", label="replay 1/5 + aux")
        ax.plot(tasks, none, marker="s", label="no replay")
        ax.set_xticks(tasks)
        ax.set_xlabel("tasks trained")
        ax.set_ylabel(f"class {result.tracked_class} accuracy")
        ax.set_ylim(0.0, 1.05)
        ax.legend()
        fig.tight_layout()
        fig.savefig(args.plot, dpi=150)
        print(f"wrote {args.plot}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

"""Command-line interface.

    mvaslam simulate --config S --hyper H --runs N --seed S --mode M --out DIR
    mvaslam summarize --in DIR

Config arguments accept either a filesystem path or the name of a bundled
config (e.g. "paper_desk", "hyper_desk").
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

from .errors import MvaSlamError
from .harness import run_experiment, summarize


def resolve_config(value: str) -> Path:
    """A real path wins; otherwise look among the bundled configs."""
    p = Path(value)
    if p.exists():
        return p
    name = value if value.endswith(".json") else value + ".json"
    bundled = resources.files("mvaslam").joinpath("configs", name)
    if bundled.is_file():
        return Path(str(bundled))
    raise FileNotFoundError(f"config not found: {value}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvaslam",
                                     description="Multipath MVA-SLAM simulator "
                                                 "and Monte Carlo harness")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a Monte Carlo experiment")
    sim.add_argument("--config", required=True,
                     help="scenario config (path or bundled name)")
    sim.add_argument("--hyper", required=True,
                     help="hyperparameter config (path or bundled name)")
    sim.add_argument("--runs", type=int, required=True)
    sim.add_argument("--seed", type=int, required=True)
    sim.add_argument("--mode", choices=("bootstrap", "robust"), required=True)
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--particles", type=int, default=None,
                     help="override hyperparameter n_particles")
    sim.add_argument("--workers", type=int, default=1)
    sim.add_argument("--quiet", action="store_true")

    summ = sub.add_parser("summarize", help="rebuild summary.json from run files")
    summ.add_argument("--in", dest="run_dir", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            progress = None
            if not args.quiet:
                def progress(res):
                    status = "converged" if res.converged else "DIVERGED"
                    print(f"run {res.run_id:4d} [{res.mode}] {status} "
                          f"({res.wall_time_s:.1f}s)", file=sys.stderr)
            summary = run_experiment(resolve_config(args.config),
                                     resolve_config(args.hyper),
                                     n_runs=args.runs, base_seed=args.seed,
                                     mode=args.mode, out_dir=args.out,
                                     particles=args.particles,
                                     workers=args.workers, progress=progress)
            print(json.dumps({k: summary[k] for k in
                              ("mode", "n_runs", "n_steps", "diverged_fraction")}))
        else:
            summary = summarize(args.run_dir)
            print(json.dumps({k: summary[k] for k in
                              ("mode", "n_runs", "n_steps", "diverged_fraction")}))
    except (MvaSlamError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

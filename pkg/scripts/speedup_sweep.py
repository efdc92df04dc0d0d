#!/usr/bin/env python3
"""Benchmark the pipeline over a task sweep and print a speedup table.

Uses synthetic 320x240 frames unless ``--input`` is given. The CSV carries
the same columns as ``dsgm-masker bench``.
"""

import argparse
from pathlib import Path

from dsgm_masker.engine import Engine, hardware_threads
from dsgm_masker.pipeline import FilterParams, RunConfig, run_bench
from dsgm_masker.synthetic import noisy_background_sequence

DEFAULT_SWEEP = (1, 2, 4, 8, 16, 32, 64, 128, 256, 512)


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--input", type=Path, help="directory of PGM/PPM frames")
    p.add_argument("--frames", type=int, default=100)
    p.add_argument("--filter-impl", choices=("naive2d", "separable", "none"), default="separable")
    p.add_argument("--sweep", default=",".join(map(str, DEFAULT_SWEEP)))
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--workers", type=int)
    p.add_argument("--csv", type=Path, default=Path("speedup.csv"))
    args = p.parse_args()

    sweep = tuple(int(t) for t in args.sweep.split(","))
    cfg = RunConfig(input_dir=args.input, frame_limit=args.frames, filters=FilterParams(impl=args.filter_impl),
                    engine=Engine(workers=args.workers), sweep=sweep, csv_path=args.csv,
                    bench_repeats=args.repeats)
    frames = None if args.input else noisy_background_sequence(args.frames)
    rows = run_bench(cfg, frames)

    print(f"hardware threads: {hardware_threads()}")
    print(f"{'tasks':>8} {'blur':>9} {'dsgm':>9} {'serial':>9} {'total':>9} {'speedup':>8}")
    for r in rows:
        print(f"{r['num_tasks']!s:>8} {r['t_blur']:9.4f} {r['t_dsgm']:9.4f} {r['t_serl']:9.4f} "
              f"{r['t_total']:9.4f} {r['speedup']:8.3f}")
    print(f"csv: {args.csv}")


if __name__ == "__main__":
    main()

"""Command line entry point: ``dsgm-masker run`` and ``dsgm-masker bench``.

Exit codes: 0 success, 1 usage error, 2 I/O error, 3 degenerate input.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from dsgm_masker.dsgm import DsgmParams
from dsgm_masker.engine import Engine, PartitionSpec
from dsgm_masker.imageio import ImageFormatError
from dsgm_masker.motioncomp import MotionParams
from dsgm_masker.pipeline import DegenerateInputError, FilterParams, RunConfig, run_bench, run_pipeline
from dsgm_masker.synthetic import noisy_background_sequence

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DEGENERATE = 0, 1, 2, 3

log = logging.getLogger("dsgm_masker")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values or any(v < 1 for v in values):
        raise argparse.ArgumentTypeError("sweep must list positive task counts")
    return values


def _add_common(p: argparse.ArgumentParser) -> None:
    io = p.add_argument_group("input/output")
    io.add_argument("--input", type=Path, help="directory holding the frame sequence")
    io.add_argument("--glob", default="*.pgm", help="filename pattern inside --input (default: %(default)s)")
    io.add_argument("--out", type=Path, help="directory for mask%%06d.pgm outputs")
    io.add_argument("--limit", type=int, help="process at most this many frames")

    f = p.add_argument_group("preprocessing")
    f.add_argument("--filter-impl", choices=("naive2d", "separable", "none"), default="separable")
    f.add_argument("--gauss-size", type=int, default=5)
    f.add_argument("--gauss-sigma", type=float, default=1.0)
    f.add_argument("--median-radius", type=int, default=1)
    f.add_argument("--filter-order", choices=("gauss-median", "median-gauss"), default="gauss-median")

    d = p.add_argument_group("background model")
    d.add_argument("--theta-s", type=float, default=4.0)
    d.add_argument("--theta-d", type=float, default=4.0)
    d.add_argument("--var-init", type=float, default=255.0)
    d.add_argument("--age-cap", type=int, default=30)
    d.add_argument("--update-rule", choices=("paper", "code"), default="paper")
    d.add_argument("--classify-intensity-scaled", action="store_true")

    m = p.add_argument_group("motion compensation")
    m.add_argument("--motion-comp", action="store_true")
    m.add_argument("--mc-target", choices=("frame", "models"), default="frame")
    m.add_argument("--mc-max-corners", type=int, default=200)
    m.add_argument("--mc-quality", type=float, default=0.01)
    m.add_argument("--mc-min-dist", type=float, default=8.0)
    m.add_argument("--mc-window", type=int, default=21)
    m.add_argument("--mc-levels", type=int, default=5)
    m.add_argument("--mc-ransac-iters", type=int, default=500)
    m.add_argument("--mc-inlier-thresh", type=float, default=3.0)
    m.add_argument("--mc-seed", type=int, default=42)

    e = p.add_argument_group("execution")
    e.add_argument("--tasks", type=int, help="row-band partition count (omit for serial)")
    e.add_argument("--strategy", choices=("rows", "tiles"), default="rows")
    e.add_argument("--tile-side", type=int, default=16)
    e.add_argument("--workers", type=int, help="worker threads (default: hardware threads)")
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dsgm-masker", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="write a motion mask for every input frame")
    _add_common(run)

    bench = sub.add_parser("bench", help="time a serial baseline and a task sweep, emit CSV")
    _add_common(bench)
    bench.add_argument("--sweep", type=_int_list, required=True, help="e.g. 1,2,4,8,16")
    bench.add_argument("--csv", type=Path, required=True)
    bench.add_argument("--repeats", type=int, default=1, help="runs per setting; the median is kept")
    bench.add_argument("--synthetic", type=int, metavar="N",
                       help="benchmark N synthetic 320x240 frames instead of --input")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    try:
        filters = FilterParams(args.filter_impl, args.gauss_size, args.gauss_sigma,
                               args.median_radius, args.filter_order)
        dsgm = DsgmParams(
            theta_s=args.theta_s, theta_d=args.theta_d, var_init=args.var_init, age_cap=args.age_cap,
            update_rule="paper_eq" if args.update_rule == "paper" else "appendix_code",
            classify_intensity_scaled=args.classify_intensity_scaled,
        )
        motion = None
        if args.motion_comp:
            motion = MotionParams(args.mc_max_corners, args.mc_quality, args.mc_min_dist, args.mc_window,
                                  args.mc_levels, args.mc_ransac_iters, args.mc_inlier_thresh,
                                  args.mc_seed, args.mc_target)
        partition = None
        if args.strategy == "tiles":
            partition = PartitionSpec("tiles", tile_side=args.tile_side)
        elif args.tasks is not None:
            partition = PartitionSpec("row_bands", tasks=args.tasks)
        if args.workers is not None and args.workers < 1:
            raise ValueError("--workers must be >= 1")
        if args.gauss_size < 1 or args.gauss_size % 2 == 0 or args.gauss_sigma <= 0:
            raise ValueError("--gauss-size must be odd and positive, --gauss-sigma positive")
        if args.median_radius < 1:
            raise ValueError("--median-radius must be >= 1")
        return RunConfig(
            input_dir=args.input, glob=args.glob, out_dir=args.out, filters=filters, dsgm=dsgm,
            motion=motion, engine=Engine(partition, args.workers), frame_limit=args.limit,
            sweep=getattr(args, "sweep", ()) or (), csv_path=getattr(args, "csv", None),
            bench_repeats=getattr(args, "repeats", 1),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = config_from_args(args)
        if args.command == "run":
            if args.input is None or args.out is None:
                raise UsageError("run needs --input and --out")
            rec = run_pipeline(config)
            print(f"frames={rec.frames} t_blur={rec.t_blur:.6g} t_mtnc={rec.t_mtnc:.6g} "
                  f"t_dsgm={rec.t_dsgm:.6g} t_serl={rec.t_serl:.6g} t_total={rec.t_total:.6g}")
        else:
            frames = None
            if args.synthetic is not None:
                if args.synthetic < 1:
                    raise UsageError("--synthetic needs a positive frame count")
                frames = noisy_background_sequence(args.synthetic)
            elif args.input is None:
                raise UsageError("bench needs --input or --synthetic")
            for row in run_bench(config, frames):
                print(",".join(str(row[k]) for k in row))
    except UsageError as exc:
        print(f"dsgm-masker: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DegenerateInputError as exc:
        print(f"dsgm-masker: degenerate input: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (OSError, ImageFormatError) as exc:
        print(f"dsgm-masker: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
"""Write a synthetic PGM frame sequence for trying out ``dsgm-masker run``."""

import argparse
from pathlib import Path

from dsgm_masker.imageio import write_frame
from dsgm_masker.synthetic import moving_square_sequence, noisy_background_sequence


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("out", type=Path, help="output directory")
    p.add_argument("--kind", choices=("square", "noisy"), default="square")
    p.add_argument("--frames", type=int, default=10)
    p.add_argument("--size", type=int, default=96, help="side of the square sequence")
    p.add_argument("--step", type=int, default=8, help="square displacement per frame")
    p.add_argument("--noise", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    if args.kind == "square":
        frames, _ = moving_square_sequence(args.frames, size=args.size, step=args.step,
                                           noise=args.noise, seed=args.seed)
    else:
        frames = noisy_background_sequence(args.frames, seed=args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    for i, f in enumerate(frames):
        write_frame(f, args.out / f"in{i:06d}.pgm")
    print(f"wrote {len(frames)} frames to {args.out}")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Print parameter counts for all three variants at desk and full scale.

The interesting property: with identical shared dimensions the parallel
variant 3 is much lighter than the serial variant 2, because its encoder
runs at d_model instead of at the recurrent width.
"""

import argparse

from crossing_profiler.models import ModelSpec, build_model, param_count


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--scale", choices=("desk", "full", "both"), default="both")
    args = parser.parse_args()

    scales = {"desk": ModelSpec.desk_scale, "full": ModelSpec.full_scale}
    wanted = scales if args.scale == "both" else {args.scale: scales[args.scale]}
    for name, make in wanted.items():
        print("%s scale:" % name)
        for variant in (1, 2, 3):
            spec = make(variant)
            count = param_count(build_model(spec, seed=0))
            print("  variant %d  d_model %4d  lstm %4d  d_ff %4d  -> %10s params"
                  % (variant, spec.d_model, spec.lstm_hidden, spec.d_ff,
                     format(count, ",")))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

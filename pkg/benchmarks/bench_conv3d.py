#!/usr/bin/env python3
"""Benchmark the compiled convolution kernels against the numpy fallback.

Times forward and backward over the layer geometries the network actually
runs (spectral stem, grouped expansion, 3x3x3 depthwise, pointwise mix, the
spectral-collapsing head) and prints a per-layer comparison table.

  python benchmarks/bench_conv3d.py [--batch 4] [--repeats 3]
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from litedepthwise import kernels
from litedepthwise.ops import Conv3dSpec

CASES = [
    ("stem 1x1x7 s2", Conv3dSpec((1, 1, 7), 1, 24, stride=(1, 1, 2)), (9, 9, 200)),
    ("group 1x1x1 g3", Conv3dSpec((1, 1, 1), 24, 48, groups=3, has_bias=False), (9, 9, 97)),
    ("depthwise 3x3x3", Conv3dSpec((3, 3, 3), 48, 48, groups=48, padding=(1, 1, 1)), (9, 9, 97)),
    ("pointwise 48->12", Conv3dSpec((1, 1, 1), 48, 12), (9, 9, 97)),
    ("head dw 3x3x97", Conv3dSpec((3, 3, 97), 48, 48, groups=48, padding=(1, 1, 0)), (9, 9, 97)),
]


def time_call(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def run(batch, repeats):
    rng = np.random.default_rng(0)
    names = kernels.available_backends()
    if len(names) < 2:
        print("note: compiled extension not built, timing the numpy fallback only")
    header = f"{'layer':<20}{'pass':<10}" + "".join(f"{n:>12}" for n in names)
    if len(names) == 2:
        header += f"{'speedup':>10}"
    print(f"batch={batch}, float32 inputs, best of {repeats}")
    print(header)
    print("-" * len(header))

    for label, spec, extents in CASES:
        x = rng.normal(size=(batch, spec.in_channels) + extents).astype(np.float32)
        xp = np.pad(x, ((0, 0), (0, 0)) + tuple((p, p) for p in spec.padding))
        w = rng.normal(size=spec.weight_shape).astype(np.float32)
        b = np.zeros(spec.out_channels, dtype=np.float32) if spec.has_bias else None

        times = {}
        for name in names:
            impl = kernels.get_backend(name)
            times[name] = time_call(
                lambda: impl.conv3d_forward(xp, w, b, spec.stride, spec.groups), repeats
            )
        row = f"{label:<20}{'forward':<10}" + "".join(f"{times[n] * 1e3:>10.2f}ms" for n in names)
        if len(names) == 2:
            row += f"{times[names[1]] / times[names[0]]:>9.1f}x"
        print(row)

        gout = rng.normal(
            size=kernels.get_backend(names[0]).conv3d_forward(
                xp, w, b, spec.stride, spec.groups
            ).shape
        ).astype(np.float32)
        for name in names:
            impl = kernels.get_backend(name)
            times[name] = time_call(
                lambda: impl.conv3d_backward(xp, w, gout, spec.stride, spec.groups, spec.has_bias),
                repeats,
            )
        row = f"{'':<20}{'backward':<10}" + "".join(f"{times[n] * 1e3:>10.2f}ms" for n in names)
        if len(names) == 2:
            row += f"{times[names[1]] / times[names[0]]:>9.1f}x"
        print(row)


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--batch", type=int, default=4)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()
    run(args.batch, args.repeats)

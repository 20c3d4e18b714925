"""Time the numba kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 50]

The numba path is warmed up once before timing so compilation is excluded.
"""
import argparse
import timeit

import numpy as np

from arnet import _kernels as k

SHAPES = {
    "train batch (32, 20, 12)": (32, 20, 12),
    "large batch (256, 20, 66)": (256, 20, 66),
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=50)
    args = ap.parse_args()
    if not k.HAVE_NUMBA:
        print("numba not installed; only the numpy path is available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<14}{'input':<28}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    for label, shape in SHAPES.items():
        diff = rng.normal(size=shape)
        flat = diff.reshape(-1, shape[-1])
        cases = {
            "joint_norm": (lambda: k.joint_norm_loss_np(diff, 3, False),
                           lambda: k.joint_norm_loss_nb(diff, 3, False)),
            "frame_norms": (lambda: k.frame_norms_np(flat), lambda: k.frame_norms_nb(flat)),
        }
        for name, (f_np, f_nb) in cases.items():
            t_np = min(timeit.repeat(f_np, number=args.repeat, repeat=3)) / args.repeat * 1e3
            if k.HAVE_NUMBA:
                f_nb()
                t_nb = min(timeit.repeat(f_nb, number=args.repeat, repeat=3)) / args.repeat * 1e3
                print(f"{name:<14}{label:<28}{t_np:10.3f}{t_nb:10.3f}{t_np / t_nb:8.1f}x")
            else:
                print(f"{name:<14}{label:<28}{t_np:10.3f}{'-':>10}{'-':>9}")


if __name__ == "__main__":
    main()

"""Compare the compiled and pure-numpy kernel backends on training-sized tensors.

    python benchmarks/bench_kernels.py [--batch 128] [--time 100] [--channels 32]
"""
import argparse
import timeit

import numpy as np

from lobcast.tcn import kernels


def bench(fn, repeat: int, number: int) -> float:
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number * 1e3


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--batch", type=int, default=128)
    ap.add_argument("--time", type=int, default=100)
    ap.add_argument("--channels", type=int, default=32)
    ap.add_argument("--dilation", type=int, default=4)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=10)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    B, T, C, d = args.batch, args.time, args.channels, args.dilation
    x = rng.normal(size=(B, T, C))
    w = rng.normal(size=(2, C, C))
    b = rng.normal(size=C)
    dy = rng.normal(size=(B, T, C))
    keep = rng.random((B, T, C)) >= 0.1

    backends = kernels.available_backends()
    print(f"shape (B={B}, T={T}, C={C}), dilation {d}; backends: {', '.join(backends)}")
    rows = []
    for name in backends:
        k = kernels.get_backend(name)
        cases = {
            "conv forward": lambda: k.causal_conv1d_forward(x, w, b, d),
            "conv backward": lambda: k.causal_conv1d_backward(x, w, dy, d),
            "relu+dropout forward": lambda: k.relu_dropout_forward(x, keep, 1 / 0.9),
            "relu+dropout backward": lambda: k.relu_dropout_backward(dy, x, keep, 1 / 0.9),
        }
        for case, fn in cases.items():
            rows.append((case, name, bench(fn, args.repeat, args.number)))
    width = max(len(r[0]) for r in rows)
    times = {(c, n): t for c, n, t in rows}
    print(f"{'kernel'.ljust(width)}  " + "  ".join(f"{n:>10}" for n in backends)
          + ("     speedup" if len(backends) > 1 else ""))
    for case in dict.fromkeys(r[0] for r in rows):
        line = f"{case.ljust(width)}  " + "  ".join(f"{times[case, n]:>8.3f}ms" for n in backends)
        if len(backends) > 1:
            line += f"  {times[case, backends[-1]] / times[case, backends[0]]:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()

"""Time the compiled LSTM kernels against the pure-numpy fallback.

Run from the repository root:

    python benchmarks/bench_kernels.py --hidden 64 --batch 32 --steps 54
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from melodylstm.kernels import available_backends, reference

try:
    from melodylstm.kernels import _fused
except ImportError:
    _fused = None


def time_call(fn, args, repeats: int, inner: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn(*args)
        best = min(best, (time.perf_counter() - t0) / inner)
    return best


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=54)
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--hidden", type=int, default=64)
    ap.add_argument("--repeats", type=int, default=7)
    ap.add_argument("--inner", type=int, default=20)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    xp = rng.standard_normal((args.steps, args.batch, 4 * args.hidden))
    w_h = rng.standard_normal((4 * args.hidden, args.hidden)) * 0.1
    dh = rng.standard_normal((args.steps, args.batch, args.hidden))

    print(f"shapes: T={args.steps} B={args.batch} H={args.hidden}; "
          f"backends available: {available_backends()}")
    backends = [("reference", reference)]
    if _fused is not None:
        backends.append(("fused", _fused))

    results = {}
    for name, mod in backends:
        acts = mod.lstm_forward(xp, w_h)
        fwd = time_call(mod.lstm_forward, (xp, w_h), args.repeats, args.inner)
        bwd = time_call(mod.lstm_backward, (dh, *acts, w_h),
                        args.repeats, args.inner)
        results[name] = (fwd, bwd)
        print(f"{name:>10}: forward {fwd * 1e3:8.3f} ms   "
              f"backward {bwd * 1e3:8.3f} ms")

    if "fused" in results:
        ref_f, ref_b = results["reference"]
        fus_f, fus_b = results["fused"]
        print(f"{'speedup':>10}: forward {ref_f / fus_f:7.2f}x    "
              f"backward {ref_b / fus_b:7.2f}x")

        ref_acts = reference.lstm_forward(xp, w_h)
        fus_acts = _fused.lstm_forward(xp, w_h)
        worst = max(float(np.max(np.abs(r - f)))
                    for r, f in zip(ref_acts, fus_acts))
        print(f"max |reference - fused| over forward activations: {worst:.3e}")


if __name__ == "__main__":
    main()

"""Time the numba and numpy correlation backends on the workloads training
and restoration actually run.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from nsdil import _accel, lcnn, objective, gallery

WORKLOADS = {
    "single 256x256 * 11x11": lambda r: (_accel.correlate_valid, r.random((266, 266)), r.random((11, 11))),
    "multi 32->32 on 13x13": lambda r: (_accel.mc_correlate_valid, r.random((32, 13, 13)), r.random((32, 32, 3, 3))),
    "multi 32->32 on 130x130": lambda r: (_accel.mc_correlate_valid, r.random((32, 130, 130)), r.random((32, 32, 3, 3))),
    "weight grad 32x32 on 11x11": lambda r: (
        lambda x, g: _accel.mc_weight_grad(x, g, 3, 3), r.random((32, 13, 13)), r.random((32, 11, 11))),
}


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = ["numpy"] + (["numba"] if _accel.HAVE_NUMBA else [])
    rng = np.random.default_rng(0)
    model = lcnn.init_model(rng)
    batch = gallery.generate_rkg(count=32, seed=0).grids()
    cfg = objective.TrainConfig()
    rows = []
    for name, make in WORKLOADS.items():
        fn, *ops = make(rng)
        rows.append((name, {b: None for b in backends}, lambda fn=fn, ops=ops: fn(*ops)))
    rows.append(("training step (batch 32)", {b: None for b in backends},
                 lambda: objective.gradients(model, batch, cfg)))
    img = rng.random((256, 256))
    rows.append(("network forward 256x256", {b: None for b in backends}, lambda: lcnn.forward(model, img)))

    before = _accel.backend()
    for b in backends:
        _accel.set_backend(b)
        for _, res, call in rows:
            call()  # warm-up, includes numba compilation
            res[b] = best_of(call, args.repeat)
    _accel.set_backend(before)

    print(f"{'workload':32s}" + "".join(f"{b:>12s}" for b in backends) + ("   speedup" if len(backends) == 2 else ""))
    for name, res, _ in rows:
        line = f"{name:32s}" + "".join(f"{res[b] * 1e3:10.2f}ms" for b in backends)
        if len(backends) == 2:
            line += f"   {res['numpy'] / res['numba']:6.2f}x"
        print(line)


if __name__ == "__main__":
    main()

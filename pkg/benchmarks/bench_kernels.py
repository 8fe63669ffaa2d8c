"""Time the compiled and pure-Python kernel backends side by side.

    python benchmarks/bench_kernels.py [--repeat 5] [--frames 200]
"""

import argparse
import timeit

import numpy as np

from notematrix import kernels


def workloads(frames, rng):
    batch = rng.uniform(-1, 1, size=(frames, 2048))
    times = (np.arange(20000) * 512 + 1024) / 44100
    k = 2000
    notes = rng.integers(0, 128, k)
    on = rng.uniform(0, times[-1], k)
    off = on + rng.uniform(0.05, 2.0, k)
    out = np.zeros((len(times), 128), np.float32)
    vlqs = b"".join(bytes([0x81, 0x80, 0x80, 0x00]) for _ in range(2000))

    def vlq_scan(mod):
        pos = 0
        while pos < len(vlqs):
            _, n = mod.decode_vlq(vlqs, pos)
            pos += n

    return {
        f"fft_magnitudes {frames}x2048": lambda mod: mod.fft_magnitudes(batch),
        f"fill_mnpm {len(times)} frames x {k} notes": lambda mod: mod.fill_mnpm(times, notes, on, off, out),
        "decode_vlq 2000 x 4-byte": vlq_scan,
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--frames", type=int, default=200)
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    jobs = workloads(args.frames, np.random.default_rng(0))
    names = sorted(backends)
    print(f"{'kernel':<36}" + "".join(f"{n + ' (ms)':>16}" for n in names) + f"{'speedup':>10}")
    for label, fn in jobs.items():
        best = {}
        for name in names:
            mod = backends[name]
            best[name] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat)) * 1e3
        speed = best["python"] / best["cython"] if "cython" in best else float("nan")
        print(f"{label:<36}" + "".join(f"{best[n]:>16.2f}" for n in names) + f"{speed:>9.1f}x")
    if "cython" not in backends:
        print("compiled extension not built; only the pure-Python backend was timed")


if __name__ == "__main__":
    main()

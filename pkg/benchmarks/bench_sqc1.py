"""Time the numba and numpy SQC1 bit-packing backends on the same code grids.

    python benchmarks/bench_sqc1.py [--frames 50000] [--repeats 5]

Also times one codec forward pass at the default config, for scale: the
packing kernels are a small fraction of an encode call.
"""
import argparse
import timeit

import numpy as np

from sqtts import _kernels


def best_of(fn, repeats):
    return min(timeit.repeat(fn, number=1, repeat=repeats))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--frames", type=int, default=50_000)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--skip-codec", action="store_true")
    args = ap.parse_args()

    print(f"{'S':>3} {'d':>3} {'bits':>4} | {'numpy pack':>11} {'numba pack':>11} | "
          f"{'numpy unpack':>12} {'numba unpack':>12}")
    for S, d in [(1, 32), (2, 18), (9, 32)]:
        width = (2 * S).bit_length()
        codes = np.random.default_rng(0).integers(0, 2 * S + 1, size=(args.frames, d))
        packed = _kernels.pack_bits_numpy(codes, width)
        assert np.array_equal(packed, _kernels.pack_bits_numba(codes, width))  # also warms the JIT
        _kernels.unpack_bits_numba(packed, d, width)
        t = [
            best_of(lambda: _kernels.pack_bits_numpy(codes, width), args.repeats),
            best_of(lambda: _kernels.pack_bits_numba(codes, width), args.repeats),
            best_of(lambda: _kernels.unpack_bits_numpy(packed, d, width), args.repeats),
            best_of(lambda: _kernels.unpack_bits_numba(packed, d, width), args.repeats),
        ]
        print(f"{S:>3} {d:>3} {width:>4} | {t[0] * 1e3:>9.2f}ms {t[1] * 1e3:>9.2f}ms | "
              f"{t[2] * 1e3:>10.2f}ms {t[3] * 1e3:>10.2f}ms")
    print(f"({args.frames} frames = {args.frames / 50 / 60:.1f} min of audio at 50 Hz)")

    if not args.skip_codec:
        import torch

        from sqtts.codec import ScalarCodec

        codec = ScalarCodec().eval()
        wav = torch.randn(16000 * 10) * 0.1
        with torch.no_grad():
            t = best_of(lambda: codec.encode(wav), 2)
        print(f"codec encode, 10 s of audio, default config: {t * 1e3:.0f}ms")


if __name__ == "__main__":
    main()

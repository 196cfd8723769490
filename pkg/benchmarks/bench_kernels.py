"""Time the compiled kernels against the numpy fallback on identical inputs.

    python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from tailforge import kernels


def cases(rng):
    feats = rng.normal(size=(750, 128))
    scores = rng.random((256, 64))
    bases = rng.random((64, 32, 32, 3))
    sources = rng.random((64, 3, 32, 32, 3))
    rects = np.stack([
        np.stack([rng.integers(0, 16, 3), rng.integers(0, 16, 3), rng.integers(1, 17, 3), rng.integers(1, 17, 3)], 1)
        for _ in range(64)
    ]).astype(np.int64)
    return {
        "herding 750x128 -> 114": lambda b: b.herding_order(feats, 114),
        "cosine 1 x 750x128": lambda b: b.cosine_scores(feats[0], feats),
        "topk 256x64, k=3": lambda b: b.batch_topk(scores, 3),
        "render 64 x 32x32x3, k=3": lambda b: b.render_batch(bases, sources, rects),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = {"python": kernels.python_backend}
    if kernels.compiled_backend is not None:
        backends["cython"] = kernels.compiled_backend
    else:
        print("compiled extension not built; timing the fallback only")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<28}" + "".join(f"{name:>12}" for name in backends) + f"{'speedup':>10}")
    for label, fn in cases(rng).items():
        ref = fn(kernels.python_backend)
        times = {}
        for name, b in backends.items():
            out = fn(b)
            for x, y in zip(out if isinstance(out, tuple) else (out,), ref if isinstance(ref, tuple) else (ref,)):
                np.testing.assert_allclose(x, y, rtol=1e-12)
            times[name] = min(timeit.repeat(lambda: fn(b), number=1, repeat=args.repeat))
        speed = f"{times['python'] / times['cython']:>9.1f}x" if "cython" in times else ""
        print(f"{label:<28}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times.values()) + speed)


if __name__ == "__main__":
    main()

"""Compare the compiled and numpy kernels on a default-sized base network.

    python benchmarks/bench_kernels.py [--records 3000] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from scoutstack import _backend
from scoutstack.netcore import MlpSpec, decay_mask, init_params


def bench(name, records, repeat):
    k = _backend.load(name)
    spec = MlpSpec((31, 32, 16, 1), seed=0)
    params = init_params(spec)
    sizes = params.sizes
    rng = np.random.default_rng(0)
    X = rng.random((records, 31))
    y = rng.choice([0.0, 0.33, 0.66, 1.0], records)
    sw = np.ones(records)
    order = rng.permutation(records)
    mask = decay_mask(spec)
    grad = np.zeros(spec.n_params)

    def epoch():
        flat = params.flat.copy()
        m, v = np.zeros_like(flat), np.zeros_like(flat)
        k.train_epoch(flat, sizes, X, y, sw, order, 32, 1.0, m, v, mask, 0,
                      1e-3, 0.9, 0.999, 1e-8, 0.01)

    cases = {
        "train_epoch": epoch,
        "forward_batch": lambda: k.forward_batch(params.flat, sizes, X),
        "loss_grad(32)": lambda: k.loss_grad(params.flat, sizes, X[:32], y[:32], sw[:32], 1.0, grad),
    }
    out = {}
    for label, fn in cases.items():
        number = 3 if label == "train_epoch" else 50
        out[label] = min(timeit.repeat(fn, number=number, repeat=repeat)) / number
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--records", type=int, default=3000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    names = _backend.available()
    results = {n: bench(n, args.records, args.repeat) for n in names}
    print(f"{'kernel':<16}" + "".join(f"{n:>14}" for n in names) + ("   speedup" if len(names) > 1 else ""))
    for case in results[names[0]]:
        row = f"{case:<16}" + "".join(f"{results[n][case] * 1e3:>12.3f}ms" for n in names)
        if len(names) > 1:
            row += f"{results['python'][case] / results['cython'][case]:>9.2f}x"
        print(row)


if __name__ == "__main__":
    main()

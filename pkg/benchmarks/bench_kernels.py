"""Compare the compiled and pure-Python kernel backends.

    python benchmarks/bench_kernels.py [--repeat 5] [--n 2000]

Each kernel runs on identical inputs under both backends; outputs are
checked for agreement before timings are reported.
"""
import argparse
import statistics
import time

import numpy as np

from barcodebias.features import build_matrix
from barcodebias.io import Barcode, BarcodeLibrary
from barcodebias.kernels import available_backends
from barcodebias.lasso import LassoProblem, lambda_path


def _library(n, length, seed):
    rng = np.random.default_rng(seed)
    seqs = ["".join(rng.choice(list("ACGT"), size=length)) for _ in range(n)]
    counts = rng.gamma(2.0, 200.0, size=n)
    return BarcodeLibrary(tuple(Barcode(f"b{i}", s, float(c)) for i, (s, c) in enumerate(zip(seqs, counts))))


def _time(fn, repeat):
    runs = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        runs.append(time.perf_counter() - t0)
    return statistics.median(runs), out


def cases(n):
    lib = _library(n, 20, 0)
    enc = lib.encoded()
    rng = np.random.default_rng(1)
    sizes = np.full(5, n // 5, dtype=np.int64)
    present = rng.integers(0, n // 5 + 1, size=(65536, 5)).astype(np.int64)
    fm = build_matrix(lib)
    prob = LassoProblem.from_data(fm.values, np.log2(1 + lib.counts))
    lam = float(lambda_path(prob, 100, 1e-2)[30])
    yy = float(prob.y @ prob.y) / prob.n

    def cd(mod):
        beta = np.zeros(prob.p)
        mod.cd_lasso(prob.gram, np.ascontiguousarray(prob.xty), beta, lam, 1e-7, 10_000, yy)
        return beta

    return {
        "kmer_incidence k=8": (lambda mod: mod.kmer_incidence(enc, 8)[1],
                               lambda a, b: np.array_equal(a, b)),
        "kmer_incidence k=3": (lambda mod: mod.kmer_incidence(enc, 3)[1],
                               lambda a, b: np.array_equal(a, b)),
        "mi_bits 65536 tables": (lambda mod: mod.mi_bits(present, sizes, int(sizes.sum())),
                                 lambda a, b: np.allclose(a, b, atol=1e-13)),
        f"cd_lasso p={prob.p}": (cd, lambda a, b: np.allclose(a, b, atol=1e-12)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--n", type=int, default=2000, help="library size")
    args = ap.parse_args(argv)
    backends = available_backends()
    if "cython" not in backends:
        print("compiled backend not built; only the python backend is available")
    names = sorted(backends)
    print(f"{'kernel':<24}" + "".join(f"{b:>12}" for b in names) + f"{'speedup':>10}  agree")
    for label, (run, same) in cases(args.n).items():
        times, outs = {}, {}
        for b in names:
            times[b], outs[b] = _time(lambda: run(backends[b]), args.repeat)
        speedup = times["python"] / times["cython"] if "cython" in times else float("nan")
        agree = all(same(outs[names[0]], outs[b]) for b in names[1:])
        row = "".join(f"{times[b] * 1e3:>10.2f}ms" for b in names)
        print(f"{label:<24}{row}{speedup:>9.1f}x  {agree}")


if __name__ == "__main__":
    main()

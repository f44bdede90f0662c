"""Time the compiled and numpy kernel backends on training-sized inputs.

    python benchmarks/bench_kernels.py [--repeat 20]
"""
import argparse
import timeit

import numpy as np

from nslab.kernels import MODE_CLOSEST, MODE_MAX, available_backends


def _ragged(gen, n, lo, hi, d):
    lengths = gen.integers(lo, hi + 1, size=n)
    offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
    return gen.normal(size=(int(offsets[-1]), d)), offsets


def cases(gen):
    a_rows, a_off = _ragged(gen, 32, 5, 15, 32)
    t_rows, t_off = _ragged(gen, 32, 8, 20, 32)
    frames, f_off = _ragged(gen, 32, 5, 15, 16)
    proj = gen.normal(size=(16, 32))
    s = gen.normal(size=(32, 32))
    ev = gen.normal(size=(175, 35))
    rel = gen.integers(0, 35, size=(175, 1))
    table = np.zeros((200, 32))
    tokens = gen.integers(0, 200, size=int(t_off[-1]))
    return {
        "ordered_matmul (frames x proj)": lambda k: k.ordered_matmul(frames, proj),
        "segment_mean": lambda k: k.segment_mean(t_rows, t_off),
        "scatter_add_rows": lambda k: k.scatter_add_rows(table.copy(), tokens, t_rows),
        "row_select max": lambda k: k.row_select(s, MODE_MAX),
        "row_select closest": lambda k: k.row_select(s, MODE_CLOSEST),
        "mean_max_scores": lambda k: k.mean_max_scores(a_rows, a_off, t_rows, t_off),
        "relevant_ranks (t2a eval)": lambda k: k.relevant_ranks(ev, np.arange(35, dtype=np.int64), rel),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args(argv)
    backends = available_backends()
    gen = np.random.default_rng(0)
    names = list(backends)
    print(f"{'kernel':32s}" + "".join(f"{n:>12s}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    for label, fn in cases(gen).items():
        times = []
        for name in names:
            k = backends[name]
            number = 5
            t = min(timeit.repeat(lambda: fn(k), number=number, repeat=args.repeat)) / number
            times.append(t)
        row = f"{label:32s}" + "".join(f"{t * 1e6:10.1f}us" for t in times)
        if len(times) > 1:
            row += f"{times[0] / times[1]:11.1f}x"
        print(row)


if __name__ == "__main__":
    main()

"""Brute-force reference implementations written without the package's kernels."""
from __future__ import annotations

import numpy as np


def _argbest(values: dict[int, float], better) -> int:
    best = None
    for idx in sorted(values):
        if best is None or better(values[idx], values[best]):
            best = idx
    return best


def select_oracle(strategy: str, s, w_text=None, w_audio=None):
    """(j list, k list) by enumeration; strict comparisons keep the lowest index on ties."""
    n = len(s)
    js, ks = [], []
    for i in range(n):
        others = [c for c in range(n) if c != i]
        row = {c: s[i][c] for c in others}
        col = {c: s[c][i] for c in others}
        if strategy == "cross_hard":
            js.append(_argbest(row, lambda a, b: a > b))
            ks.append(_argbest(col, lambda a, b: a > b))
        elif strategy == "cross_semi_hard":
            dr = {c: abs(v - s[i][i]) for c, v in row.items()}
            dc = {c: abs(v - s[i][i]) for c, v in col.items()}
            js.append(_argbest(dr, lambda a, b: a < b))
            ks.append(_argbest(dc, lambda a, b: a < b))
        else:
            w = w_text if strategy.startswith("text") else w_audio
            cand = {c: w[i][c] for c in others}
            better = (lambda a, b: a > b) if strategy.endswith("hard") else (lambda a, b: a < b)
            pick = _argbest(cand, better)
            js.append(pick)
            ks.append(pick)
    return js, ks


def ranking_oracle(scores, ids):
    """Candidate positions sorted by descending score, then ascending id."""
    return sorted(range(len(ids)), key=lambda c: (-scores[c], ids[c]))


def ap_oracle(ranked, relevant):
    hits, total = 0, 0.0
    for pos, item in enumerate(ranked, start=1):
        if item in relevant:
            hits += 1
            total += hits / pos
    return total / len(relevant)


def metrics_oracle(score_rows, ids, relevant_sets, ks=(5, 10)):
    """(mAP, item R@k dict, query R@k dict) by sorting and applying the definitions."""
    aps, items, query = [], {k: [] for k in ks}, {k: [] for k in ks}
    for scores, rel in zip(score_rows, relevant_sets):
        ranked = ranking_oracle(scores, ids)
        aps.append(ap_oracle(ranked, set(rel)))
        for k in ks:
            top = set(ranked[:k])
            found = len(top & set(rel))
            items[k].append(found / len(rel))
            query[k].append(1.0 if found else 0.0)
    return float(np.mean(aps)), {k: float(np.mean(v)) for k, v in items.items()}, {k: float(np.mean(v)) for k, v in query.items()}


def random_oracle(n: int, rng) -> tuple[list[int], list[int]]:
    """Two draws per anchor from its own stream, mapped onto the sorted candidate list."""
    js, ks = [], []
    for i in range(n):
        stream = rng.child("anchor", i)
        cands = [c for c in range(n) if c != i]
        js.append(cands[(stream.next_u64() * (n - 1)) >> 64])
        ks.append(cands[(stream.next_u64() * (n - 1)) >> 64])
    return js, ks


def random_score_matrix(gen: np.random.Generator, n: int) -> np.ndarray:
    """Half the draws use a coarse grid so ties are frequent."""
    if gen.random() < 0.5:
        return gen.integers(-3, 4, size=(n, n)).astype(np.float64)
    return gen.normal(size=(n, n))


def loss_oracle(s, js, ks, margin=1.0):
    """Triplet loss by direct evaluation of both hinges per anchor."""
    n = len(s)
    return sum(max(0.0, s[i][js[i]] - s[i][i] + margin) + max(0.0, s[ks[i]][i] - s[i][i] + margin) for i in range(n)) / n


def full_batch_oracle(s, margin=1.0):
    n = len(s)
    total = 0.0
    for i in range(n):
        mt = sum(s[i][c] for c in range(n) if c != i) / (n - 1)
        ma = sum(s[c][i] for c in range(n) if c != i) / (n - 1)
        total += max(0.0, mt - s[i][i] + margin) + max(0.0, ma - s[i][i] + margin)
    return total / n


def fd_grad(f, s, h):
    g = np.zeros_like(s)
    for idx in np.ndindex(s.shape):
        p, m = s.copy(), s.copy()
        p[idx] += h
        m[idx] -= h
        g[idx] = (f(p) - f(m)) / (2 * h)
    return g


def kink_free_instance(gen: np.random.Generator, n: int, margin=1.0, gap=1e-3):
    """Random S and singleton negatives with every hinge argument at least ``gap`` from zero."""
    while True:
        s = gen.normal(scale=1.5, size=(n, n))
        js = [int(gen.choice([c for c in range(n) if c != i])) for i in range(n)]
        ks = [int(gen.choice([c for c in range(n) if c != i])) for i in range(n)]
        args = [s[i][js[i]] - s[i][i] + margin for i in range(n)] + [s[ks[i]][i] - s[i][i] + margin for i in range(n)]
        off = ~np.eye(n, dtype=bool)
        args += list(s[off].reshape(n, n - 1).mean(axis=1) - np.diag(s) + margin)
        args += list(s.T[off].reshape(n, n - 1).mean(axis=1) - np.diag(s) + margin)
        if min(abs(a) for a in args) > gap:
            return s, js, ks

"""Independent reference implementations used only by the tests."""

import itertools
import math

import numpy as np


def permutation_shapley(ids, tensor):
    """Average marginal contribution over every join order.

    The coalition value is recomputed from the utility tensor directly:
    members pick the joint action maximising the mean over non-members.
    """
    ids = list(ids)

    def value(coalition):
        axes = [ids.index(c) for c in coalition]
        best = -math.inf
        ranges = [range(tensor.shape[a]) for a in axes]
        for choice in itertools.product(*ranges):
            idx = [slice(None)] * tensor.ndim
            for a, k in zip(axes, choice):
                idx[a] = k
            best = max(best, float(np.mean(tensor[tuple(idx)])))
        return best

    cache = {}
    phi = dict.fromkeys(ids, 0.0)
    perms = list(itertools.permutations(ids))
    for perm in perms:
        before = frozenset()
        for c in perm:
            after = before | {c}
            for s in (before, after):
                if s not in cache:
                    cache[s] = value(sorted(s))
            phi[c] += cache[after] - cache[before]
            before = after
    return {c: v / len(perms) for c, v in phi.items()}


def bimatrix_pure_equilibria(row_pay, col_pay):
    """Pure Nash equilibria of a two-player normal-form game by best-response checks."""
    out = set()
    n, m = len(row_pay), len(row_pay[0])
    for i in range(n):
        for j in range(m):
            row_ok = all(row_pay[i][j] >= row_pay[k][j] for k in range(n))
            col_ok = all(col_pay[i][j] >= col_pay[i][k] for k in range(m))
            if row_ok and col_ok:
                out.add((i, j))
    return out

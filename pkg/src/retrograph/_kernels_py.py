"""Pure-Python/numpy reference versions of the compiled kernels.

Signatures and results match ``_kernels.pyx`` exactly; the test-suite
checks both against each other when the extension is built.
"""

import numpy as np


def scatter_add_rows(src, index, n_out):
    out = np.zeros((n_out, src.shape[1]), dtype=src.dtype)
    np.add.at(out, index, src)
    return out


def _dense(keys):
    order = sorted(range(len(keys)), key=keys.__getitem__)
    ranks = [0] * len(keys)
    r = -1
    prev = None
    for i in order:
        if keys[i] != prev:
            r += 1
            prev = keys[i]
        ranks[i] = r
    return ranks, r + 1


def refine_ranks(init, indptr, indices, codes):
    """Iterated neighbourhood refinement of integer atom classes.

    ``indptr``/``indices``/``codes`` form a CSR adjacency with a small
    integer bond code per entry.  Each round replaces an atom's class by
    (class, sorted multiset of (neighbour class, bond code)) until the
    number of classes stops growing.  Returns dense ranks.
    """
    n = len(init)
    ranks, n_cls = _dense([int(x) for x in init])
    while True:
        keys = []
        for i in range(n):
            nb = sorted(ranks[indices[k]] * 8 + codes[k] for k in range(indptr[i], indptr[i + 1]))
            keys.append((ranks[i], tuple(nb)))
        new, new_cls = _dense(keys)
        if new_cls == n_cls:
            return np.asarray(new, dtype=np.int64)
        ranks, n_cls = new, new_cls

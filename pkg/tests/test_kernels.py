import os
import subprocess
import sys

import numpy as np
import pytest

from retrograph import _kernels_py, kernels
from retrograph.chem.smiles import _csr, _dense, atom_invariants, parse_smiles

compiled = pytest.importorskip("retrograph._kernels", reason="compiled kernels not built")


def test_backend_selected():
    assert kernels.BACKEND in ("cython", "python")
    if os.environ.get("RETROGRAPH_PURE") != "1":
        assert kernels.BACKEND == "cython"


def test_pure_switch():
    env = dict(os.environ, RETROGRAPH_PURE="1")
    out = subprocess.run([sys.executable, "-c", "from retrograph import kernels; print(kernels.BACKEND)"],
                         capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == "python"


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_scatter_equivalence(rng, dtype):
    for n_in, n_out, width in [(0, 3, 4), (1, 1, 1), (50, 7, 16), (400, 60, 33)]:
        src = rng.normal(size=(n_in, width)).astype(dtype)
        index = rng.integers(0, n_out, size=n_in)
        a = compiled.scatter_add_rows(src, index, n_out)
        b = _kernels_py.scatter_add_rows(src, index, n_out)
        assert a.dtype == b.dtype == dtype and a.shape == b.shape
        assert np.array_equal(a, b)


def test_refine_ranks_equivalence(rng):
    for s in ["C", "CCO", "c1ccccc1", "CC(C)(C)C", "OC(=O)c1ccc(N)cc1", "C1CC2CCC1CC2", "CCOC(=O)c1csc(-c2ccc(F)cc2)c1"]:
        g = parse_smiles(s)
        args = (_dense(atom_invariants(g)),) + _csr(g)
        assert np.array_equal(compiled.refine_ranks(*args), _kernels_py.refine_ranks(*args))
    # random graphs with random initial classes
    for _ in range(30):
        n = int(rng.integers(1, 30))
        edges = {tuple(sorted(rng.choice(n, 2, replace=False))) for _ in range(n)} if n > 1 else set()
        adj = [[] for _ in range(n)]
        for i, j in edges:
            c = int(rng.integers(1, 5))
            adj[i].append((j, c))
            adj[j].append((i, c))
        indptr = np.cumsum([0] + [len(a) for a in adj]).astype(np.int64)
        indices = np.array([j for a in adj for j, _ in a], dtype=np.int64)
        codes = np.array([c for a in adj for _, c in a], dtype=np.int64)
        init = rng.integers(0, 3, size=n).astype(np.int64)
        assert np.array_equal(compiled.refine_ranks(init, indptr, indices, codes),
                              _kernels_py.refine_ranks(init, indptr, indices, codes))

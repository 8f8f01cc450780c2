"""Compiled versus pure-Python kernels.

Times the two kernels on synthetic inputs and on the workloads that use
them (canonical SMILES of the bundled corpus, one training step of the
center model).  Each workload runs in a fresh interpreter per backend so
the selection made at import time applies.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, timeit
import numpy as np
from retrograph import data_path, kernels
from retrograph.chem.smiles import canonical_smiles, read_smiles_file, _csr, _dense, atom_invariants, parse_smiles

repeat = int(sys.argv[1])
rng = np.random.default_rng(0)
out = {"backend": kernels.BACKEND}

src = rng.normal(size=(4000, 64))
index = rng.integers(0, 500, size=4000)
out["scatter_add_rows 4000x64"] = min(timeit.repeat(lambda: kernels.scatter_add_rows(src, index, 500), number=50, repeat=repeat)) / 50

g = parse_smiles("CCOC(=O)c1csc(-c2ccc(F)cc2)c1CC(=O)Nc1ccc(OCC(=O)OC)cc1")
args = (_dense(atom_invariants(g)),) + _csr(g)
out["refine_ranks 36 atoms"] = min(timeit.repeat(lambda: kernels.refine_ranks(*args), number=200, repeat=repeat)) / 200

corpus = read_smiles_file(data_path("corpus_500.smi"))
out["canonical SMILES x500"] = min(timeit.repeat(lambda: [canonical_smiles(s) for s in corpus], number=1, repeat=repeat))

from retrograph.autodiff import backward
from retrograph.center_id import CenterItem, center_loss, CenterModel
from retrograph.encoder import EncoderConfig
from retrograph.reactions import prepare, read_reactions
recs, _ = read_reactions(data_path("toy_64.txt"))
cfg = EncoderConfig(hidden_dim=64, t_a=3, t_e=2, use_brics=True)
items = [CenterItem.from_example(e, cfg) for e in prepare(recs).examples]
m = CenterModel.create(cfg)
def step():
    m.store.zero_grad()
    backward(center_loss(items, m.store, cfg))
out["center loss+backward, 64 products"] = min(timeit.repeat(step, number=1, repeat=repeat))
print(json.dumps(out))
"""


def run(pure: bool, repeat: int) -> dict:
    env = dict(os.environ)
    env.pop("RETROGRAPH_PURE", None)
    if pure:
        env["RETROGRAPH_PURE"] = "1"
    res = subprocess.run([sys.executable, "-c", WORKER, str(repeat)], capture_output=True, text=True, env=env, check=True)
    return json.loads(res.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    fast, slow = run(False, args.repeat), run(True, args.repeat)
    if fast["backend"] != "cython":
        print("compiled extension not built; both columns use the fallback", file=sys.stderr)
    print(f"{'workload':40s} {fast['backend']:>12s} {slow['backend']:>12s} {'speed-up':>9s}")
    for k in fast:
        if k == "backend":
            continue
        print(f"{k:40s} {fast[k] * 1e3:10.3f}ms {slow[k] * 1e3:10.3f}ms {slow[k] / fast[k]:8.1f}x")


if __name__ == "__main__":
    main()

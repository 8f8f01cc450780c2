"""Named parameter stores and the checkpoint format."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .tensor import Tensor

CHECKPOINT_VERSION = 1


class ParamStore:
    """Ordered map name -> trainable :class:`Tensor`.

    ``add`` draws uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) from the store's
    own generator, so creation order plus seed fixes every value.
    """

    def __init__(self, seed: int = 0, dtype=np.float64, meta: dict | None = None):
        self.params: dict[str, Tensor] = {}
        self.seed = seed
        self.dtype = np.dtype(dtype)
        self.rng = np.random.default_rng(seed)
        self.meta = dict(meta or {})

    def add(self, name: str, shape: tuple[int, ...], init: str = "uniform") -> Tensor:
        if name in self.params:
            raise KeyError(f"duplicate parameter {name}")
        if init == "zeros":
            data = np.zeros(shape, dtype=self.dtype)
        else:
            bound = 1.0 / np.sqrt(max(shape[0], 1))
            data = self.rng.uniform(-bound, bound, size=shape).astype(self.dtype)
        t = Tensor(data, requires_grad=True, name=name)
        self.params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __len__(self) -> int:
        return len(self.params)

    def items(self):
        return self.params.items()

    def names(self) -> list[str]:
        return list(self.params)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def prefixed(self, prefix: str) -> dict[str, Tensor]:
        return {k: v for k, v in self.params.items() if k.startswith(prefix)}

    def n_values(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def fill(self, value: float) -> None:
        for p in self.params.values():
            p.data[...] = value

    def copy_from(self, other: "ParamStore") -> None:
        for k, v in other.params.items():
            self.params[k].data[...] = v.data

    # checkpoints ------------------------------------------------------
    def save(self, directory, hyperparams: dict | None = None) -> Path:
        """JSON manifest plus one little-endian binary blob per tensor."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        code = "<f8" if self.dtype == np.float64 else "<f4"
        files = {}
        for name, p in self.params.items():
            fname = name.replace("/", "__") + ".bin"
            p.data.astype(code).tofile(d / fname)
            files[name] = fname
        manifest = {
            "version": CHECKPOINT_VERSION,
            "names": list(self.params),
            "shapes": {k: list(v.shape) for k, v in self.params.items()},
            "dtype": code,
            "seed": self.seed,
            "hyperparams": hyperparams or self.meta,
            "files": files,
        }
        (d / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
        return d

    @classmethod
    def load(cls, directory) -> "ParamStore":
        d = Path(directory)
        manifest = json.loads((d / "manifest.json").read_text())
        if manifest.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {manifest.get('version')}")
        code = manifest["dtype"]
        store = cls(seed=manifest["seed"], dtype=np.dtype(code).newbyteorder("="), meta=manifest["hyperparams"])
        for name in manifest["names"]:
            shape = tuple(manifest["shapes"][name])
            data = np.fromfile(d / manifest["files"][name], dtype=code).reshape(shape)
            store.params[name] = Tensor(data.astype(store.dtype), requires_grad=True, name=name)
        return store

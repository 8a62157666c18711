"""Named parameter storage with freeze flags and a JSON checkpoint format."""

from __future__ import annotations

import hashlib
import json
from typing import Iterable, Mapping

import numpy as np

from .tensor import Tensor

FORMAT = "deepyc-params"
VERSION = 1


class ParamStore:
    def __init__(self):
        self._values: dict[str, np.ndarray] = {}
        self._trainable: dict[str, bool] = {}

    def add(self, name: str, value, trainable: bool = True) -> None:
        if name in self._values:
            raise KeyError(f"parameter {name!r} already exists")
        arr = np.array(value, dtype=np.float64)
        if not np.isfinite(arr).all():
            raise ValueError(f"parameter {name!r} has non-finite values")
        self._values[name] = arr
        self._trainable[name] = bool(trainable)

    def __contains__(self, name: str) -> bool:
        return name in self._values

    def __getitem__(self, name: str) -> np.ndarray:
        return self._values[name]

    def __len__(self) -> int:
        return len(self._values)

    def names(self) -> list[str]:
        return list(self._values)

    def trainable(self, name: str) -> bool:
        return self._trainable[name]

    def trainable_names(self) -> list[str]:
        return [n for n in self._values if self._trainable[n]]

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {n: v.shape for n, v in self._values.items()}

    def set(self, name: str, value) -> None:
        arr = np.asarray(value, dtype=np.float64)
        if arr.shape != self._values[name].shape:
            raise ValueError(f"{name}: shape {arr.shape} != {self._values[name].shape}")
        self._values[name] = arr.copy()

    def freeze(self, names: Iterable[str]) -> None:
        for n in names:
            if n not in self._values:
                raise KeyError(f"unknown parameter {n!r}")
            self._trainable[n] = False

    def leaves(self) -> dict[str, Tensor]:
        """Fresh leaf tensors; only trainable entries require gradients."""
        return {n: Tensor(v, requires_grad=self._trainable[n], name=n) for n, v in self._values.items()}

    def copy(self) -> "ParamStore":
        out = ParamStore()
        for n, v in self._values.items():
            out.add(n, v, self._trainable[n])
        return out

    def n_values(self, trainable_only: bool = False) -> int:
        return sum(v.size for n, v in self._values.items() if self._trainable[n] or not trainable_only)

    def fingerprint(self, names: Iterable[str] | None = None) -> str:
        """sha256 over names, shapes and raw float64 bytes."""
        h = hashlib.sha256()
        for n in sorted(self._values if names is None else names):
            v = self._values[n]
            h.update(n.encode())
            h.update(repr(v.shape).encode())
            h.update(np.ascontiguousarray(v, dtype="<f8").tobytes())
        return h.hexdigest()

    def to_dict(self) -> dict:
        # repr of a Python float round-trips exactly
        return {
            "format": FORMAT,
            "version": VERSION,
            "params": [
                {
                    "name": n,
                    "shape": list(v.shape),
                    "trainable": self._trainable[n],
                    "values": [float(x) for x in v.ravel()],
                }
                for n, v in self._values.items()
            ],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ParamStore":
        if d.get("format") != FORMAT:
            raise ValueError(f"not a parameter checkpoint (format={d.get('format')!r})")
        if d.get("version") != VERSION:
            raise ValueError(f"unsupported checkpoint version {d.get('version')!r}")
        out = cls()
        for p in d["params"]:
            shape = tuple(int(s) for s in p["shape"])
            vals = np.asarray(p["values"], dtype=np.float64)
            if vals.size != int(np.prod(shape)):
                raise ValueError(f"{p['name']}: {vals.size} values for shape {shape}")
            out.add(p["name"], vals.reshape(shape), bool(p["trainable"]))
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "ParamStore":
        return cls.from_dict(json.loads(text))

    def __repr__(self) -> str:
        return f"ParamStore({len(self)} tensors, {self.n_values()} values, {self.n_values(True)} trainable)"

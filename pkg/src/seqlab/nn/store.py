"""Named parameter container with bit-exact serialization."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, ValidationError
from .tensor import Tensor

FORMAT_VERSION = 1
_VERSION_KEY = "__format_version__"


class ParamStore:
    """Ordered map from parameter path to tensor."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, tensor: Tensor) -> Tensor:
        if name in self._params:
            raise ValidationError(f"duplicate parameter name {name!r}")
        if name == _VERSION_KEY:
            raise ValidationError(f"{name!r} is reserved")
        self._params[name] = tensor
        return tensor

    def update(self, named: dict[str, Tensor]) -> None:
        for name, tensor in named.items():
            self.add(name, tensor)

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    def items(self):
        return self._params.items()

    def zero_grads(self) -> None:
        for p in self._params.values():
            p.zero_grad()

    def n_values(self) -> int:
        return sum(p.data.size for p in self._params.values())

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self._params.items()}

    def load_snapshot(self, snap: dict[str, np.ndarray]) -> None:
        if set(snap) != set(self._params):
            raise ConfigError("snapshot parameter names do not match store")
        for name, arr in snap.items():
            p = self._params[name]
            if arr.shape != p.data.shape:
                raise ConfigError(f"snapshot shape mismatch for {name!r}")
            p.data = arr.copy()

    def save(self, path) -> None:
        arrays = {name: p.data for name, p in self._params.items()}
        np.savez(path, **{_VERSION_KEY: np.array([FORMAT_VERSION])}, **arrays)

    @classmethod
    def load(cls, path, requires_grad: bool = True) -> "ParamStore":
        with np.load(path) as blob:
            version = int(blob[_VERSION_KEY][0])
            if version != FORMAT_VERSION:
                raise ConfigError(f"unsupported parameter format version {version}")
            store = cls()
            for name in blob.files:
                if name == _VERSION_KEY:
                    continue
                store.add(name, Tensor(blob[name], requires_grad=requires_grad))
        return store

"""Named parameter store with freeze flags."""

from typing import Dict, Iterable, Iterator, List, Optional, Tuple

import numpy as np

from tools.errors import ConfigError
from tools.tensor import Tensor, parameter


class ModelParams:
    """
    Ordered collection of learnable tensors keyed by dotted names
    (e.g. ``vision.blocks.0.attn.q.weight``) plus the set of frozen names.

    Frozen parameters do not require gradients and are skipped by the
    optimizer.
    """

    def __init__(self):
        self._tensors: Dict[str, Tensor] = {}
        self._frozen: set = set()

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._tensors:
            raise ConfigError(f"Parameter {name} already exists")
        tensor = parameter(data, name=name)
        self._tensors[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._tensors[name]
        except KeyError:
            raise ConfigError(f"Unknown parameter: {name}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def named(self) -> List[Tuple[str, Tensor]]:
        return list(self._tensors.items())

    def names(self, prefix: str = "") -> List[str]:
        return [name for name in self._tensors if name.startswith(prefix)]

    def count(self) -> int:
        """Total number of scalar parameters."""
        return sum(t.size for t in self._tensors.values())

    # Freeze flags

    def freeze(self, prefixes: Iterable[str]):
        prefixes = tuple(prefixes)
        for name, tensor in self._tensors.items():
            if name.startswith(prefixes):
                self._frozen.add(name)
                tensor.requires_grad = False

    def unfreeze_all(self):
        for name in self._frozen:
            self._tensors[name].requires_grad = True
        self._frozen.clear()

    def is_frozen(self, name: str) -> bool:
        return name in self._frozen

    def frozen_names(self) -> List[str]:
        return [name for name in self._tensors if name in self._frozen]

    def zero_grad(self):
        for tensor in self._tensors.values():
            tensor.grad = None

    def snapshot(self, prefix: str = "") -> Dict[str, np.ndarray]:
        """Copies of parameter arrays, for comparison or rollback."""
        return {name: t.data.copy() for name, t in self._tensors.items() if name.startswith(prefix)}

    def load_arrays(self, arrays: Dict[str, np.ndarray], strict: bool = True):
        """
        Overwrite parameter values from a name -> array mapping.

        Args:
            arrays: Arrays keyed by parameter name
            strict: Require exactly the same set of names and shapes
        """
        if strict:
            missing = sorted(set(self._tensors) - set(arrays))
            extra = sorted(set(arrays) - set(self._tensors))
            if missing or extra:
                raise ConfigError(f"Parameter mismatch: missing={missing[:5]} unexpected={extra[:5]}")
        for name, values in arrays.items():
            if name not in self._tensors:
                continue
            tensor = self._tensors[name]
            if tensor.shape != tuple(values.shape):
                raise ConfigError(
                    f"Shape mismatch for {name}: expected {tensor.shape}, got {tuple(values.shape)}"
                )
            tensor.data = np.array(values, dtype=np.float64)

    def get(self, name: str) -> Optional[Tensor]:
        return self._tensors.get(name)

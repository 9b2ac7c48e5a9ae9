"""Relation catalog and {0,1} label vectors.

The catalog fixes the order of relation labels once at construction; that
order is the canonical index order for every vector, parameter row, and file
in the package. The NA label ("no known relation") is an ordinary catalog
entry addressed by ``na_index``.
"""

import hashlib
import json
from dataclasses import dataclass

import numpy as np


class CatalogError(ValueError):
    """Invalid catalog definition or unknown relation name."""


@dataclass(frozen=True)
class RelationCatalog:
    names: tuple[str, ...]
    na_index: int

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if len(names) < 2:
            raise CatalogError("catalog needs NA plus at least one real relation")
        if len(set(names)) != len(names):
            raise CatalogError("relation names must be unique")
        if any(not isinstance(n, str) or not n for n in names):
            raise CatalogError("relation names must be non-empty strings")
        if not 0 <= self.na_index < len(names):
            raise CatalogError(f"na_index {self.na_index} out of range")

    def __len__(self) -> int:
        return len(self.names)

    @property
    def na_name(self) -> str:
        return self.names[self.na_index]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise CatalogError(f"unknown relation name: {name!r}") from None

    def real_indices(self) -> list[int]:
        """Indices of all non-NA relations, in catalog order."""
        return [i for i in range(len(self.names)) if i != self.na_index]

    def to_json(self) -> dict:
        return {"names": list(self.names), "na": self.na_index}

    @classmethod
    def from_json(cls, obj: dict) -> "RelationCatalog":
        try:
            return cls(tuple(obj["names"]), int(obj["na"]))
        except (KeyError, TypeError) as exc:
            raise CatalogError(f"malformed catalog record: {exc}") from exc

    def digest(self) -> str:
        """Stable hash used to pair datasets with checkpoints."""
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def make_label_vector(catalog: RelationCatalog, present) -> np.ndarray:
    """Encode a set of relation names as a {0,1} vector in catalog order."""
    bits = np.zeros(len(catalog), dtype=np.uint8)
    for name in present:
        bits[catalog.index(name)] = 1
    return bits


def decode_label_vector(catalog: RelationCatalog, bits: np.ndarray) -> set[str]:
    """Inverse of :func:`make_label_vector`."""
    bits = np.asarray(bits)
    if bits.shape != (len(catalog),):
        raise CatalogError(f"label vector length {bits.shape} != |catalog| {len(catalog)}")
    return {catalog.names[i] for i in np.flatnonzero(bits)}


def hamming(a: np.ndarray, b: np.ndarray) -> int:
    """Number of positions where two label vectors differ."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return int(np.count_nonzero(a != b))

"""Core data containers: sentences, bags, datasets."""

from dataclasses import dataclass, field

import numpy as np

from .labels import RelationCatalog


class DataError(ValueError):
    """Structurally invalid sentence, bag, or dataset."""


@dataclass(frozen=True)
class Sentence:
    tokens: np.ndarray  # vocabulary indices, shape (m,)
    head_pos: int
    tail_pos: int

    def __post_init__(self):
        tokens = np.ascontiguousarray(self.tokens, dtype=np.int64)
        tokens.flags.writeable = False
        object.__setattr__(self, "tokens", tokens)
        m = tokens.shape[0]
        if tokens.ndim != 1 or m < 1:
            raise DataError("sentence must contain at least one token")
        for name, pos in (("head_pos", self.head_pos), ("tail_pos", self.tail_pos)):
            if not 0 <= pos < m:
                raise DataError(f"{name}={pos} outside sentence of length {m}")
        if self.head_pos == self.tail_pos:
            raise DataError("head and tail positions must differ")

    def __len__(self) -> int:
        return self.tokens.shape[0]


@dataclass(frozen=True)
class Bag:
    id: str
    head: str
    tail: str
    sentences: tuple[Sentence, ...]
    observed: np.ndarray  # noisy label bits z, shape (|R|,)
    truth: np.ndarray | None = None  # ground-truth bits y when known

    def __post_init__(self):
        if not self.sentences:
            raise DataError(f"bag {self.id}: needs at least one sentence")
        observed = np.ascontiguousarray(self.observed, dtype=np.uint8)
        observed.flags.writeable = False
        object.__setattr__(self, "observed", observed)
        if self.truth is not None:
            truth = np.ascontiguousarray(self.truth, dtype=np.uint8)
            truth.flags.writeable = False
            object.__setattr__(self, "truth", truth)
            if truth.shape != observed.shape:
                raise DataError(f"bag {self.id}: truth/observed length mismatch")


@dataclass
class Dataset:
    catalog: RelationCatalog
    bags: list[Bag]
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.bags)

    def __iter__(self):
        return iter(self.bags)

    @property
    def has_truth(self) -> bool:
        return all(b.truth is not None for b in self.bags)

    def observed_matrix(self) -> np.ndarray:
        return np.stack([b.observed for b in self.bags]) if self.bags else np.zeros(
            (0, len(self.catalog)), dtype=np.uint8
        )

    def truth_matrix(self) -> np.ndarray | None:
        if not self.has_truth:
            return None
        return np.stack([b.truth for b in self.bags]) if self.bags else np.zeros(
            (0, len(self.catalog)), dtype=np.uint8
        )

    def validate(self, vocab_size: int | None = None, max_len: int | None = None):
        """Check bag invariants, raising DataError naming the offending bag."""
        n_rel = len(self.catalog)
        for bag in self.bags:
            if bag.observed.shape != (n_rel,):
                raise DataError(f"bag {bag.id}: label vector length != |catalog|")
            for s in bag.sentences:
                if max_len is not None and len(s) > max_len:
                    raise DataError(f"bag {bag.id}: sentence longer than max_len={max_len}")
                if vocab_size is not None and int(s.tokens.max()) >= vocab_size:
                    raise DataError(f"bag {bag.id}: token id outside vocabulary")

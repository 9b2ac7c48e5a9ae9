import numpy as np
import pytest

from nem.data import Bag, Sentence
from nem.labels import RelationCatalog


@pytest.fixture
def catalog3():
    return RelationCatalog(("NA", "A", "B"), na_index=0)


def random_sentence(rng, vocab_size: int, min_len: int = 3, max_len: int = 14) -> Sentence:
    m = int(rng.integers(min_len, max_len + 1))
    tokens = rng.integers(0, vocab_size, size=m)
    head, tail = rng.choice(m, size=2, replace=False)
    return Sentence(tokens, int(head), int(tail))


def random_bag(rng, vocab_size: int, n_rel: int, n_sentences=None, bag_id: str = "b0") -> Bag:
    n = int(n_sentences if n_sentences is not None else rng.integers(1, 5))
    sentences = tuple(random_sentence(rng, vocab_size) for _ in range(n))
    z = rng.integers(0, 2, size=n_rel).astype(np.uint8)
    return Bag(bag_id, "eh", "et", sentences, z)

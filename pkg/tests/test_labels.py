import itertools

import numpy as np
import pytest

from nem.labels import (
    CatalogError,
    RelationCatalog,
    decode_label_vector,
    hamming,
    make_label_vector,
)


class TestCatalog:
    def test_valid(self, catalog3):
        assert len(catalog3) == 3
        assert catalog3.na_name == "NA"
        assert catalog3.index("B") == 2
        assert catalog3.real_indices() == [1, 2]

    def test_duplicate_names(self):
        with pytest.raises(CatalogError):
            RelationCatalog(("NA", "A", "A"), 0)

    def test_too_small(self):
        with pytest.raises(CatalogError):
            RelationCatalog(("NA",), 0)

    def test_na_index_range(self):
        with pytest.raises(CatalogError):
            RelationCatalog(("NA", "A"), 5)

    def test_unknown_name_mentions_offender(self, catalog3):
        with pytest.raises(CatalogError, match="bogus"):
            catalog3.index("bogus")

    def test_json_round_trip(self, catalog3):
        again = RelationCatalog.from_json(catalog3.to_json())
        assert again == catalog3
        assert again.digest() == catalog3.digest()

    def test_digest_changes_with_order(self):
        a = RelationCatalog(("NA", "A", "B"), 0)
        b = RelationCatalog(("NA", "B", "A"), 0)
        assert a.digest() != b.digest()


class TestMakeLabelVector:
    def test_single(self, catalog3):
        assert make_label_vector(catalog3, {"A"}).tolist() == [0, 1, 0]

    def test_empty(self, catalog3):
        assert make_label_vector(catalog3, set()).tolist() == [0, 0, 0]

    def test_two_labels(self, catalog3):
        assert make_label_vector(catalog3, {"A", "B"}).tolist() == [0, 1, 1]

    def test_unknown_name(self, catalog3):
        with pytest.raises(CatalogError, match="nope"):
            make_label_vector(catalog3, {"nope"})

    def test_round_trip_exhaustive(self):
        # every subset decodes back exactly, for catalogs up to 8 relations
        names = ("NA",) + tuple(f"R{i}" for i in range(7))
        catalog = RelationCatalog(names, 0)
        for k in range(len(names) + 1):
            for subset in itertools.combinations(names, k):
                vec = make_label_vector(catalog, set(subset))
                assert decode_label_vector(catalog, vec) == set(subset)


class TestHamming:
    def test_identity(self):
        v = np.array([0, 1, 0], dtype=np.uint8)
        assert hamming(v, v) == 0

    def test_direct_count(self):
        assert hamming(np.array([0, 1, 0]), np.array([1, 1, 1])) == 2

    def test_full_flip(self):
        rng = np.random.default_rng(0)
        v = rng.integers(0, 2, size=9).astype(np.uint8)
        assert hamming(v, 1 - v) == 9

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            hamming(np.array([0, 1]), np.array([0, 1, 0]))

    def test_symmetric_and_triangle(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            n = int(rng.integers(1, 12))
            a, b, c = (rng.integers(0, 2, size=n).astype(np.uint8) for _ in range(3))
            assert hamming(a, b) == hamming(b, a)
            assert hamming(a, c) <= hamming(a, b) + hamming(b, c)

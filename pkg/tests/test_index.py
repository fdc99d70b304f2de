import math

import numpy as np
import pytest

from pubrank.errors import CorruptIndexError, DataError, UsageError
from pubrank.index import (
    HnswIndex,
    build_index,
    load_index,
    save_index,
    validate_hnsw_graph,
)

from conftest import unit_rows


def brute_force_top(pmids, matrix, query, k):
    """Independent oracle: per-row python dot products, sort with tie-break."""
    scored = []
    for pmid, row in zip(pmids, matrix):
        score = math.fsum(float(a) * float(b) for a, b in zip(row, query))
        scored.append((pmid, score))
    scored.sort(key=lambda t: (-t[1], int(t[0])))
    return scored[:k]


@pytest.fixture
def small_exact():
    matrix = unit_rows(50, 16, seed=9)
    pmids = [str(i + 1) for i in range(50)]
    return build_index(pmids, matrix, kind="exact"), pmids, matrix


class TestExact:
    def test_self_retrieval(self, small_exact):
        index, pmids, matrix = small_exact
        hits = index.query(matrix[41], 5)
        assert hits[0].pmid == "42"
        assert abs(hits[0].score - 1.0) < 1e-5

    def test_k_larger_than_corpus(self, small_exact):
        index, pmids, _ = small_exact
        hits = index.query(unit_rows(1, 16, seed=1)[0], 500)
        assert len(hits) == 50
        assert {h.pmid for h in hits} == set(pmids)

    def test_scores_non_increasing(self, small_exact):
        index, _, _ = small_exact
        hits = index.query(unit_rows(1, 16, seed=2)[0], 50)
        scores = [h.score for h in hits]
        assert all(a >= b for a, b in zip(scores, scores[1:]))

    def test_prefix_monotonicity(self, small_exact):
        index, _, _ = small_exact
        q = unit_rows(1, 16, seed=3)[0]
        small = [h.pmid for h in index.query(q, 7)]
        big = [h.pmid for h in index.query(q, 12)]
        assert big[:7] == small

    def test_matches_brute_force_with_ties(self):
        base = unit_rows(20, 16, seed=4)
        # duplicate rows force exact score ties resolved by numeric pmid
        matrix = np.concatenate([base, base[:5]])
        pmids = [str(i + 1) for i in range(25)]
        index = build_index(pmids, matrix, kind="exact")
        for seed in range(10):
            q = unit_rows(1, 16, seed=100 + seed)[0]
            expected = [p for p, _ in brute_force_top(pmids, matrix, q, 10)]
            got = [h.pmid for h in index.query(q, 10)]
            assert got == expected

    def test_empty_index(self):
        index = build_index([], np.empty((0, 8), dtype=np.float32), kind="exact")
        q = np.zeros(8, dtype=np.float32)
        q[0] = 1.0
        assert index.query(q, 3) == []

    def test_dimension_mismatch(self, small_exact):
        index, _, _ = small_exact
        with pytest.raises(DataError):
            index.query(np.zeros(8, dtype=np.float32), 3)

    def test_duplicate_pmid_fatal(self):
        matrix = unit_rows(2, 8)
        with pytest.raises(DataError, match="duplicate"):
            build_index(["1", "1"], matrix, kind="exact")

    def test_non_unit_vectors_fatal(self):
        matrix = np.ones((2, 8), dtype=np.float32)
        with pytest.raises(DataError, match="unit-norm"):
            build_index(["1", "2"], matrix, kind="exact")


class TestHnsw:
    def test_param_preconditions(self):
        matrix = unit_rows(4, 8)
        pmids = ["1", "2", "3", "4"]
        with pytest.raises(UsageError):
            build_index(pmids, matrix, kind="hnsw", m=1)
        with pytest.raises(UsageError):
            build_index(pmids, matrix, kind="hnsw", m=8, ef_construction=4)

    def test_empty(self):
        index = build_index([], np.empty((0, 8), dtype=np.float32), kind="hnsw")
        q = np.zeros(8, dtype=np.float32)
        q[0] = 1.0
        assert index.query(q, 3) == []

    def test_graph_invariants(self):
        matrix = unit_rows(800, 24, seed=6)
        pmids = [str(i + 1) for i in range(800)]
        hnsw = build_index(pmids, matrix, kind="hnsw", m=8, ef_construction=40, seed=2)
        validate_hnsw_graph(hnsw)

    def test_deterministic_build(self):
        matrix = unit_rows(300, 16, seed=7)
        pmids = [str(i + 1) for i in range(300)]
        a = build_index(pmids, matrix, kind="hnsw", m=8, ef_construction=40, seed=5)
        b = build_index(pmids, matrix, kind="hnsw", m=8, ef_construction=40, seed=5)
        assert a.levels == b.levels
        assert a.entry_point == b.entry_point
        for la, lb in zip(a.neighbors, b.neighbors):
            for x, y in zip(la, lb):
                assert np.array_equal(x, y)

    def test_seed_changes_levels(self):
        matrix = unit_rows(300, 16, seed=7)
        pmids = [str(i + 1) for i in range(300)]
        a = build_index(pmids, matrix, kind="hnsw", m=8, ef_construction=40, seed=5)
        b = build_index(pmids, matrix, kind="hnsw", m=8, ef_construction=40, seed=6)
        assert a.levels != b.levels

    def test_recall_against_exact(self):
        matrix = unit_rows(2000, 32, seed=8)
        pmids = [str(i + 1) for i in range(2000)]
        exact = build_index(pmids, matrix, kind="exact")
        hnsw = build_index(pmids, matrix, kind="hnsw", m=16, ef_construction=100, seed=1)
        overlaps = []
        for seed in range(30):
            q = unit_rows(1, 32, seed=500 + seed)[0]
            e = {h.pmid for h in exact.query(q, 10)}
            a = {h.pmid for h in hnsw.query(q, 10, ef_search=128)}
            overlaps.append(len(e & a) / 10)
        assert sum(overlaps) / len(overlaps) >= 0.95

    def test_results_sorted_with_pmid_tiebreak(self):
        base = unit_rows(30, 16, seed=11)
        matrix = np.concatenate([base, base[:3]])
        pmids = [str(i + 1) for i in range(33)]
        hnsw = build_index(pmids, matrix, kind="hnsw", m=8, ef_construction=40, seed=0)
        hits = hnsw.query(base[0], 33, ef_search=64)
        pairs = [(-h.score, int(h.pmid)) for h in hits]
        assert pairs == sorted(pairs)

    def test_level_distribution_sane(self):
        matrix = unit_rows(2000, 8, seed=12)
        pmids = [str(i + 1) for i in range(2000)]
        hnsw = build_index(pmids, matrix, kind="hnsw", m=16, ef_construction=32, seed=3)
        top = max(hnsw.levels)
        assert 0 < top <= math.ceil(math.log(2000) / math.log(16)) + 3
        assert hnsw.levels.count(0) > 1500


class TestPersistence:
    def test_roundtrip_random_queries(self, tmp_path):
        matrix = unit_rows(200, 16, seed=13)
        pmids = [str(i * 2 + 1) for i in range(200)]
        original = build_index(pmids, matrix, kind="hnsw", m=8, ef_construction=40, seed=4)
        path = tmp_path / "index.bin"
        save_index(original, path)
        loaded = load_index(path)
        assert isinstance(loaded, HnswIndex)
        for seed in range(20):
            q = unit_rows(1, 16, seed=900 + seed)[0]
            a = [(h.pmid, h.score) for h in original.query(q, 10)]
            b = [(h.pmid, h.score) for h in loaded.query(q, 10)]
            assert a == b

    def test_exact_roundtrip(self, tmp_path):
        matrix = unit_rows(64, 8, seed=14)
        pmids = [str(i + 1) for i in range(64)]
        original = build_index(pmids, matrix, kind="exact")
        path = tmp_path / "index.bin"
        save_index(original, path)
        loaded = load_index(path)
        q = unit_rows(1, 8, seed=999)[0]
        assert [(h.pmid, h.score) for h in original.query(q, 5)] == [
            (h.pmid, h.score) for h in loaded.query(q, 5)
        ]

    def test_truncated_file_is_corrupt(self, tmp_path):
        matrix = unit_rows(10, 8)
        index = build_index([str(i) for i in range(1, 11)], matrix, kind="exact")
        path = tmp_path / "index.bin"
        save_index(index, path)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) - 10])
        with pytest.raises(CorruptIndexError):
            load_index(path)

    def test_bitflip_is_corrupt(self, tmp_path):
        matrix = unit_rows(10, 8)
        index = build_index([str(i) for i in range(1, 11)], matrix, kind="exact")
        path = tmp_path / "index.bin"
        save_index(index, path)
        raw = bytearray(path.read_bytes())
        raw[len(raw) // 2] ^= 0x01
        path.write_bytes(bytes(raw))
        with pytest.raises(CorruptIndexError, match="checksum"):
            load_index(path)

    def test_version_mismatch_names_versions(self, tmp_path):
        import hashlib
        import struct

        matrix = unit_rows(4, 8)
        index = build_index(["1", "2", "3", "4"], matrix, kind="exact")
        path = tmp_path / "index.bin"
        save_index(index, path)
        raw = bytearray(path.read_bytes())[:-32]
        struct.pack_into("<I", raw, 4, 99)
        payload = bytes(raw)
        path.write_bytes(payload + hashlib.sha256(payload).digest())
        with pytest.raises(CorruptIndexError, match="99"):
            load_index(path)

    def test_empty_roundtrip(self, tmp_path):
        index = build_index([], np.empty((0, 8), dtype=np.float32), kind="hnsw")
        path = tmp_path / "index.bin"
        save_index(index, path)
        loaded = load_index(path)
        q = np.zeros(8, dtype=np.float32)
        q[0] = 1.0
        assert loaded.query(q, 4) == []

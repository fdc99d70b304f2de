"""Dense retrieval end to end: mock embeddings, exact scan vs HNSW graph.

Builds both index kinds over 3,000 synthetic documents and compares the
approximate top-10 against the exact top-10 per query.

Run: python demos/02_embed_and_search.py
"""

import time

import numpy as np

from pubrank.embedding import mock_embed
from pubrank.index import build_index

DOCS = 3000
DIM = 64


def main():
    print(f"embedding {DOCS} synthetic documents at dimension {DIM} (mock provider)...")
    pmids = [str(i + 1) for i in range(DOCS)]
    matrix = np.stack(
        [mock_embed(f"document {p} about topic {int(p) % 50}", DIM, seed=1) for p in pmids]
    )

    t0 = time.perf_counter()
    exact = build_index(pmids, matrix, kind="exact")
    t1 = time.perf_counter()
    hnsw = build_index(pmids, matrix, kind="hnsw", m=16, ef_construction=200, seed=3)
    t2 = time.perf_counter()
    print(f"exact build {t1 - t0:.2f}s, hnsw build {t2 - t1:.2f}s")

    overlaps = []
    for i in range(20):
        query = mock_embed(f"query about topic {i}", DIM, seed=2)
        truth = [h.pmid for h in exact.query(query, 10)]
        approx = [h.pmid for h in hnsw.query(query, 10, ef_search=128)]
        overlap = len(set(truth) & set(approx)) / 10
        overlaps.append(overlap)
        if i < 3:
            print(f"  query {i}: exact top-3 {truth[:3]}, hnsw top-3 {approx[:3]}, overlap {overlap:.1f}")
    print(f"mean top-10 overlap across 20 queries: {np.mean(overlaps):.3f}")
    print("self-retrieval sanity:", exact.query(matrix[41], 1)[0])


if __name__ == "__main__":
    main()

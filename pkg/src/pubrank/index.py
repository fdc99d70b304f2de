"""Exact and HNSW nearest-neighbor search over unit-norm vectors.

Cosine similarity on pre-normalized vectors reduces to a dot product, so both
index kinds store vectors as given (unit norm asserted at build) and score by
dot product. Result ordering is score descending with ties broken by numeric
PMID ascending.

The HNSW build is sequential and fully deterministic: node levels come from a
keyed hash of (seed, insertion ordinal), and every internal selection breaks
ties on node ordinal. Layer search expands a small frontier of the current
candidate pool per iteration so the distance work runs through vectorized
batches; this explores at least as much of the graph as single-node greedy
expansion at the same beam width.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CorruptIndexError, DataError, UsageError
from .vectors import VectorStore

INDEX_MAGIC = b"PRIX"
INDEX_VERSION = 1
DEFAULT_M = 16
DEFAULT_EF_CONSTRUCTION = 200
DEFAULT_EF_SEARCH = 128
_FRONTIER = 8  # nodes expanded per search iteration
_NORM_TOLERANCE = 1e-4


@dataclass
class SearchHit:
    pmid: str
    score: float


def _check_vectors(pmids: Sequence[str], matrix: np.ndarray) -> np.ndarray:
    if len(set(pmids)) != len(pmids):
        raise DataError("duplicate pmid in vector set")
    matrix = np.ascontiguousarray(matrix, dtype=np.float32)
    if matrix.ndim != 2:
        raise DataError(f"vector matrix must be 2-d, got shape {matrix.shape}")
    if matrix.shape[0] != len(pmids):
        raise DataError("pmid count does not match vector rows")
    if matrix.shape[0]:
        norms = np.linalg.norm(matrix.astype(np.float64), axis=1)
        if np.any(np.abs(norms - 1.0) > _NORM_TOLERANCE):
            worst = float(np.max(np.abs(norms - 1.0)))
            raise DataError(f"vectors must be unit-norm, worst deviation {worst:.2e}")
    return matrix


def _pmid_order_keys(pmids: Sequence[str]) -> np.ndarray:
    try:
        return np.array([int(p) for p in pmids], dtype=np.int64)
    except ValueError as exc:
        raise DataError(f"non-numeric pmid in index: {exc}") from exc


def _row_scores(matrix: np.ndarray, vector: np.ndarray) -> np.ndarray:
    """Dot products computed row-independently.

    BLAS gemv may accumulate different rows along different paths, so two
    identical rows can score unequally and break pmid tie-breaking. An
    elementwise product with a per-row float64 reduction scores equal rows
    equally.
    """
    return np.sum(matrix * vector, axis=1, dtype=np.float64)


def _top_hits(
    scores: np.ndarray, pmids: Sequence[str], pmid_keys: np.ndarray, k: int
) -> list[SearchHit]:
    order = np.lexsort((pmid_keys, -scores))
    return [SearchHit(pmids[i], float(scores[i])) for i in order[:k]]


class ExactIndex:
    kind = "exact"

    def __init__(self, pmids: Sequence[str], matrix: np.ndarray):
        self.matrix = _check_vectors(pmids, matrix)
        self.pmids = [str(p) for p in pmids]
        self._pmid_keys = _pmid_order_keys(self.pmids)

    @property
    def dimension(self) -> int:
        return int(self.matrix.shape[1])

    def __len__(self) -> int:
        return len(self.pmids)

    def query(self, vector: np.ndarray, k: int, ef_search: int | None = None) -> list[SearchHit]:
        if k < 1:
            raise UsageError(f"k must be >= 1, got {k}")
        vector = np.asarray(vector, dtype=np.float32)
        if vector.shape != (self.dimension,):
            raise DataError(
                f"query dimension {vector.shape} does not match index ({self.dimension},)"
            )
        if not len(self):
            return []
        scores = _row_scores(self.matrix, vector)
        return _top_hits(scores, self.pmids, self._pmid_keys, k)


class HnswIndex:
    kind = "hnsw"

    def __init__(
        self,
        pmids: Sequence[str],
        matrix: np.ndarray,
        m: int = DEFAULT_M,
        ef_construction: int = DEFAULT_EF_CONSTRUCTION,
        ef_search: int = DEFAULT_EF_SEARCH,
        seed: int = 0,
        _graph: tuple | None = None,
    ):
        if m < 2:
            raise UsageError(f"hnsw m must be >= 2, got {m}")
        if ef_construction < m:
            raise UsageError(
                f"ef_construction ({ef_construction}) must be >= m ({m})"
            )
        self.matrix = _check_vectors(pmids, matrix)
        self.pmids = [str(p) for p in pmids]
        self._pmid_keys = _pmid_order_keys(self.pmids)
        self.m = m
        self.ef_construction = ef_construction
        self.ef_search = ef_search
        self.seed = seed
        self._ml = 1.0 / math.log(m)
        if _graph is not None:
            self.levels, self.neighbors, self.entry_point, self.max_level = _graph
        else:
            self.levels = []
            self.neighbors = []
            self.entry_point = -1
            self.max_level = -1
            self._build()

    @property
    def dimension(self) -> int:
        return int(self.matrix.shape[1])

    def __len__(self) -> int:
        return len(self.pmids)

    def _cap(self, layer: int) -> int:
        return 2 * self.m if layer == 0 else self.m

    def _level_for(self, ordinal: int) -> int:
        payload = f"{self.seed}:{ordinal}".encode()
        raw = hashlib.blake2b(payload, digest_size=8).digest()
        u = int.from_bytes(raw, "little") / 2.0**64
        return min(int(-math.log(max(u, 2.0**-64)) * self._ml), 60)

    # -- construction -------------------------------------------------------

    def _build(self) -> None:
        n = len(self.pmids)
        self.levels = [self._level_for(i) for i in range(n)]
        self.neighbors = [
            [np.empty(0, dtype=np.int64) for _ in range(level + 1)]
            for level in self.levels
        ]
        for node in range(n):
            self._insert(node)

    def _insert(self, node: int) -> None:
        level = self.levels[node]
        if self.entry_point < 0:
            self.entry_point = node
            self.max_level = level
            return
        vector = self.matrix[node]
        entry = self.entry_point
        for layer in range(self.max_level, level, -1):
            entry = self._greedy_step(vector, entry, layer)
        entries = [entry]
        for layer in range(min(level, self.max_level), -1, -1):
            dists, ids = self._search_layer(
                vector, entries, layer, self.ef_construction, exclude=node
            )
            selected = self._select_neighbors(vector, dists, ids, self.m)
            self.neighbors[node][layer] = np.array(selected, dtype=np.int64)
            cap = self._cap(layer)
            for nb in selected:
                links = self.neighbors[nb][layer]
                links = np.append(links, np.int64(node))
                if len(links) > cap:
                    nb_vec = self.matrix[nb]
                    nb_dists = 1.0 - self.matrix[links] @ nb_vec
                    order = np.lexsort((links, nb_dists))
                    links_sorted = links[order]
                    dists_sorted = nb_dists[order]
                    pruned = self._select_neighbors(
                        nb_vec, dists_sorted, links_sorted, cap
                    )
                    links = np.array(pruned, dtype=np.int64)
                self.neighbors[nb][layer] = links
            entries = list(ids[: self.ef_construction])
        if level > self.max_level:
            self.entry_point = node
            self.max_level = level

    def _select_neighbors(
        self,
        center: np.ndarray,
        dists: np.ndarray,
        ids: np.ndarray,
        m: int,
    ) -> list[int]:
        """Diversity-aware selection: keep candidates closer to the center
        than to every already-selected neighbor, then backfill from the
        pruned ones. Candidates must arrive sorted by (distance, id).

        Selecting a candidate eliminates, in one vectorized mask, everything
        that sits closer to it than to the center; this is the same rule as
        checking each candidate against the selected set one by one.
        """
        count = len(ids)
        if count <= m:
            return [int(i) for i in ids]
        vecs = self.matrix[ids]
        pairwise = 1.0 - vecs @ vecs.T
        alive = np.ones(count, dtype=bool)
        picks: list[int] = []
        while len(picks) < m:
            pos = int(np.argmax(alive))
            if not alive[pos]:
                break
            picks.append(pos)
            alive &= dists < pairwise[:, pos]
            alive[pos] = False
        if len(picks) < m:
            chosen = np.zeros(count, dtype=bool)
            chosen[picks] = True
            for pos in np.flatnonzero(~chosen)[: m - len(picks)]:
                picks.append(int(pos))
        return [int(ids[p]) for p in picks]

    # -- search -------------------------------------------------------------

    def _greedy_step(self, vector: np.ndarray, entry: int, layer: int) -> int:
        current = entry
        current_dist = 1.0 - float(self.matrix[current] @ vector)
        while True:
            links = self.neighbors[current][layer]
            if len(links) == 0:
                return current
            dists = 1.0 - self.matrix[links] @ vector
            order = np.lexsort((links, dists))
            best = order[0]
            if float(dists[best]) < current_dist:
                current = int(links[best])
                current_dist = float(dists[best])
            else:
                return current

    def _search_layer(
        self,
        vector: np.ndarray,
        entries: Sequence[int],
        layer: int,
        ef: int,
        exclude: int = -1,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Beam search at one layer; returns (dists, ids) sorted by (dist, id)."""
        n = len(self.pmids)
        visited = np.zeros(n, dtype=bool)
        expanded = np.zeros(n, dtype=bool)
        ids = np.unique(np.asarray(entries, dtype=np.int64))
        visited[ids] = True
        if exclude >= 0:
            visited[exclude] = True
            ids = ids[ids != exclude]
        dists = 1.0 - self.matrix[ids] @ vector
        order = np.lexsort((ids, dists))
        ids, dists = ids[order], dists[order]
        while True:
            pool_ids = ids[:ef]
            frontier = pool_ids[~expanded[pool_ids]][:_FRONTIER]
            if len(frontier) == 0:
                break
            expanded[frontier] = True
            fresh = np.concatenate([self.neighbors[int(f)][layer] for f in frontier])
            if len(fresh):
                fresh = np.unique(fresh)
                fresh = fresh[~visited[fresh]]
            if len(fresh) == 0:
                continue
            visited[fresh] = True
            fresh_dists = 1.0 - self.matrix[fresh] @ vector
            ids = np.concatenate([ids, fresh])
            dists = np.concatenate([dists, fresh_dists])
            order = np.lexsort((ids, dists))[:ef]
            ids, dists = ids[order], dists[order]
        return dists[:ef], ids[:ef]

    def query(self, vector: np.ndarray, k: int, ef_search: int | None = None) -> list[SearchHit]:
        if k < 1:
            raise UsageError(f"k must be >= 1, got {k}")
        vector = np.asarray(vector, dtype=np.float32)
        if vector.shape != (self.dimension,):
            raise DataError(
                f"query dimension {vector.shape} does not match index ({self.dimension},)"
            )
        if not len(self):
            return []
        ef = max(ef_search or self.ef_search, k)
        entry = self.entry_point
        for layer in range(self.max_level, 0, -1):
            entry = self._greedy_step(vector, entry, layer)
        _, ids = self._search_layer(vector, [entry], 0, ef)
        top = ids[:ef]
        scores = _row_scores(self.matrix[top], vector)
        keys = self._pmid_keys[top]
        order = np.lexsort((keys, -scores))
        return [SearchHit(self.pmids[int(top[i])], float(scores[i])) for i in order[:k]]


VectorIndex = ExactIndex | HnswIndex


def build_index(
    pmids: Sequence[str],
    matrix: np.ndarray,
    kind: str = "exact",
    m: int = DEFAULT_M,
    ef_construction: int = DEFAULT_EF_CONSTRUCTION,
    ef_search: int = DEFAULT_EF_SEARCH,
    seed: int = 0,
) -> VectorIndex:
    if kind == "exact":
        return ExactIndex(pmids, matrix)
    if kind == "hnsw":
        return HnswIndex(pmids, matrix, m, ef_construction, ef_search, seed)
    raise UsageError(f"unknown index kind {kind!r}")


def build_from_store(store: VectorStore, kind: str = "exact", **params) -> VectorIndex:
    return build_index(store.pmids, store.matrix, kind, **params)


def validate_hnsw_graph(index: HnswIndex) -> None:
    """Walk every node and check degree caps and reference resolution."""
    n = len(index)
    for node in range(n):
        level = index.levels[node]
        if len(index.neighbors[node]) != level + 1:
            raise DataError(f"node {node}: layer list does not match level {level}")
        for layer in range(level + 1):
            links = index.neighbors[node][layer]
            cap = 2 * index.m if layer == 0 else index.m
            if len(links) > cap:
                raise DataError(
                    f"node {node} layer {layer}: degree {len(links)} exceeds cap {cap}"
                )
            for nb in links:
                nb = int(nb)
                if not (0 <= nb < n):
                    raise DataError(f"node {node} layer {layer}: dangling link {nb}")
                if index.levels[nb] < layer:
                    raise DataError(
                        f"node {node} layer {layer}: link to {nb} missing from layer"
                    )
    if n and not (0 <= index.entry_point < n):
        raise DataError(f"entry point {index.entry_point} out of range")


# -- persistence ------------------------------------------------------------

def save_index(index: VectorIndex, path: str | Path) -> None:
    parts: list[bytes] = [INDEX_MAGIC, struct.pack("<I", INDEX_VERSION)]
    kind_code = 0 if index.kind == "exact" else 1
    count = len(index)
    parts.append(struct.pack("<BIQ", kind_code, index.dimension, count))
    if kind_code == 1:
        parts.append(
            struct.pack(
                "<IIIQqi",
                index.m,
                index.ef_construction,
                index.ef_search,
                index.seed & 0xFFFFFFFFFFFFFFFF,
                index.entry_point,
                index.max_level,
            )
        )
        parts.append(np.asarray(index.levels, dtype="<u4").tobytes())
        for node in range(count):
            for layer in range(index.levels[node] + 1):
                links = np.asarray(index.neighbors[node][layer], dtype="<u4")
                parts.append(struct.pack("<I", len(links)))
                parts.append(links.tobytes())
    parts.append(index.matrix.astype("<f4").tobytes(order="C"))
    for pmid in index.pmids:
        raw = pmid.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
    payload = b"".join(parts)
    checksum = hashlib.sha256(payload).digest()
    Path(path).write_bytes(payload + checksum)


def load_index(path: str | Path) -> VectorIndex:
    data = Path(path).read_bytes()
    if len(data) < 4 + 4 + 13 + 32 or data[:4] != INDEX_MAGIC:
        raise CorruptIndexError(f"{path}: not an index file")
    payload, checksum = data[:-32], data[-32:]
    if hashlib.sha256(payload).digest() != checksum:
        raise CorruptIndexError(f"{path}: checksum mismatch, file is corrupt")
    version = struct.unpack_from("<I", payload, 4)[0]
    if version != INDEX_VERSION:
        raise CorruptIndexError(
            f"{path}: index file version {version}, this build supports {INDEX_VERSION}"
        )
    kind_code, dimension, count = struct.unpack_from("<BIQ", payload, 8)
    offset = 8 + 13
    if kind_code == 1:
        m, efc, efs, seed, entry, max_level = struct.unpack_from("<IIIQqi", payload, offset)
        offset += struct.calcsize("<IIIQqi")
        levels = np.frombuffer(payload, dtype="<u4", count=count, offset=offset)
        offset += 4 * count
        levels = [int(v) for v in levels]
        neighbors: list[list[np.ndarray]] = []
        for node in range(count):
            layers = []
            for _ in range(levels[node] + 1):
                degree = struct.unpack_from("<I", payload, offset)[0]
                offset += 4
                links = np.frombuffer(payload, dtype="<u4", count=degree, offset=offset)
                offset += 4 * degree
                layers.append(links.astype(np.int64))
            neighbors.append(layers)
    matrix = np.frombuffer(
        payload, dtype="<f4", count=count * dimension, offset=offset
    ).reshape(count, dimension).copy()
    offset += 4 * count * dimension
    pmids: list[str] = []
    for _ in range(count):
        strlen = struct.unpack_from("<I", payload, offset)[0]
        offset += 4
        pmids.append(payload[offset : offset + strlen].decode("utf-8"))
        offset += strlen
    if kind_code == 0:
        return ExactIndex(pmids, matrix)
    return HnswIndex(
        pmids,
        matrix,
        m=m,
        ef_construction=efc,
        ef_search=efs,
        seed=seed,
        _graph=(levels, neighbors, entry, max_level),
    )

"""Binary vector file: unit-norm float32 rows keyed by PMID.

Layout (little-endian): magic ``PRV1``, dimension as u32, count as u64,
count x dimension float32 row-major, then a pmid table of count
length-prefixed (u32) UTF-8 strings in row order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError

MAGIC = b"PRV1"


@dataclass
class VectorStore:
    pmids: list[str]
    matrix: np.ndarray  # float32, shape (count, dimension)

    @property
    def dimension(self) -> int:
        return int(self.matrix.shape[1])

    def __len__(self) -> int:
        return len(self.pmids)


def write_vectors(path: str | Path, pmids: Sequence[str], matrix: np.ndarray) -> None:
    matrix = np.ascontiguousarray(matrix, dtype=np.float32)
    if matrix.ndim != 2:
        raise DataError(f"vector matrix must be 2-d, got shape {matrix.shape}")
    if len(pmids) != matrix.shape[0]:
        raise DataError(
            f"pmid count {len(pmids)} does not match row count {matrix.shape[0]}"
        )
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", matrix.shape[1]))
        fh.write(struct.pack("<Q", matrix.shape[0]))
        fh.write(matrix.tobytes(order="C"))
        for pmid in pmids:
            raw = pmid.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)


def read_vectors(path: str | Path) -> VectorStore:
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != MAGIC:
        raise DataError(f"{path}: not a PRV1 vector file")
    dimension = struct.unpack_from("<I", data, 4)[0]
    count = struct.unpack_from("<Q", data, 8)[0]
    offset = 16
    need = count * dimension * 4
    if len(data) < offset + need:
        raise DataError(f"{path}: truncated vector block")
    matrix = np.frombuffer(
        data, dtype="<f4", count=count * dimension, offset=offset
    ).reshape(count, dimension)
    offset += need
    pmids: list[str] = []
    for _ in range(count):
        if len(data) < offset + 4:
            raise DataError(f"{path}: truncated pmid table")
        strlen = struct.unpack_from("<I", data, offset)[0]
        offset += 4
        if len(data) < offset + strlen:
            raise DataError(f"{path}: truncated pmid entry")
        pmids.append(data[offset : offset + strlen].decode("utf-8"))
        offset += strlen
    return VectorStore(pmids=pmids, matrix=matrix.copy())

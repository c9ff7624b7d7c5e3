"""MDEMB embedding cache: a text header followed by raw little-endian float64 records."""

from __future__ import annotations

from pathlib import Path

import numpy as np

MAGIC = "MDEMB"


def write_embeddings(path: str | Path, embeddings: np.ndarray) -> None:
    emb = np.asarray(embeddings, dtype=np.float64)
    if emb.ndim != 2:
        raise ValueError("embeddings must be a (count, dim) array")
    count, dim = emb.shape
    with open(path, "wb") as fh:
        fh.write(f"{MAGIC} 1 {count} {dim}\n".encode())
        fh.write(np.ascontiguousarray(emb, dtype="<f8").tobytes())


def read_embeddings(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.readline().decode().split()
        if len(head) != 4 or head[0] != MAGIC or head[1] != "1":
            raise ValueError(f"{path}: not an {MAGIC} v1 cache")
        count, dim = int(head[2]), int(head[3])
        raw = fh.read()
    if len(raw) != 8 * count * dim:
        raise ValueError(f"{path}: expected {count}x{dim} records, got {len(raw)} bytes")
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(count, dim)

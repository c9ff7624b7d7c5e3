"""Pseudo motion labels from k-means over clip embeddings."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .flowfeat.kmeans import kmeans


@dataclass(frozen=True)
class PseudoLabeledClip:
    clip_id: int
    label: int
    n_labels: int

    @property
    def label_onehot(self) -> np.ndarray:
        y = np.zeros(self.n_labels)
        y[self.label] = 1.0
        return y


def assign_pseudo_labels(embeddings, K: int = 16, seed: int = 0, clip_ids: Sequence[int] | None = None) -> list[PseudoLabeledClip]:
    emb = np.asarray(embeddings, dtype=np.float64)
    if len(emb) < K:
        raise ValueError(f"{len(emb)} clips cannot fill K={K} clusters; use a smaller K (<= {len(emb) // 4} recommended)")
    ids = list(range(len(emb))) if clip_ids is None else list(clip_ids)
    if len(ids) != len(emb):
        raise ValueError("clip_ids must match the number of embeddings")
    labels = kmeans(emb, K, seed=seed).labels
    return [PseudoLabeledClip(int(i), int(lab), K) for i, lab in zip(ids, labels)]


def write_manifest(path: str | Path, clips: Sequence[PseudoLabeledClip]) -> None:
    with open(path, "w") as fh:
        for c in clips:
            fh.write(f"{c.clip_id}\t{c.label}\n")


def read_manifest(path: str | Path, K: int) -> list[PseudoLabeledClip]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'clip_id<TAB>label'")
            label = int(parts[1])
            if not 0 <= label < K:
                raise ValueError(f"{path}:{lineno}: label {label} outside [0, {K})")
            out.append(PseudoLabeledClip(int(parts[0]), label, K))
    return out

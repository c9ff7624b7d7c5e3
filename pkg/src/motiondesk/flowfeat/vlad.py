"""Flow codebook, VLAD encoding of flow maps and clip-level concatenation."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .flow import FlowField, compute_flow
from .kmeans import assign, kmeans
from .otsu import otsu_threshold

log = logging.getLogger(__name__)


class DegenerateCorpusError(ValueError):
    """Surviving flow entries cannot support a codebook of the requested size."""


@dataclass(frozen=True)
class FlowSettings:
    levels: int = 3
    smoothness_weight: float = 0.1
    iterations: int = 50


@dataclass
class FlowCodebook:
    centroids: np.ndarray
    seed: int

    @property
    def n_clusters(self) -> int:
        return self.centroids.shape[0]

    @property
    def vlad_dim(self) -> int:
        return self.centroids.shape[0] * self.centroids.shape[1]


def surviving_entries(flow: FlowField, threshold: float) -> np.ndarray:
    keep = flow.magnitudes() >= threshold
    return flow.entries()[keep]


def build_flow_codebook(flows: Sequence[FlowField], threshold: float, n_clusters: int = 128, seed: int = 0) -> FlowCodebook:
    pooled = np.concatenate([surviving_entries(f, threshold) for f in flows], axis=0)
    if len(pooled) < n_clusters:
        raise DegenerateCorpusError(
            f"only {len(pooled)} flow entries survive the Otsu filter; lower n_clusters below {n_clusters}"
        )
    n_distinct = len(np.unique(pooled, axis=0))
    if n_distinct < n_clusters:
        raise DegenerateCorpusError(
            f"degenerate corpus: {n_distinct} distinct surviving flow entries cannot yield "
            f"{n_clusters} distinct centroids"
        )
    result = kmeans(pooled, n_clusters, seed=seed)
    return FlowCodebook(result.centroids, seed)


def vlad_vector(descriptors: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Residual aggregation, signed square root, then global L2 normalisation."""
    k, d = centroids.shape
    acc = np.zeros((k, d))
    if len(descriptors):
        labels, _ = assign(descriptors, centroids)
        np.add.at(acc, labels, descriptors - centroids[labels])
    v = acc.ravel()
    v = np.sign(v) * np.sqrt(np.abs(v))
    norm = np.linalg.norm(v)
    if norm == 0.0:
        return v
    return v / norm


def vlad_encode(flow: FlowField, threshold: float, codebook: FlowCodebook) -> np.ndarray:
    return vlad_vector(surviving_entries(flow, threshold), codebook.centroids)


def clip_flows(frames: Sequence[np.ndarray], settings: FlowSettings = FlowSettings()) -> list[FlowField]:
    if len(frames) < 2:
        raise ValueError("a clip needs at least 2 frames to produce a flow map")
    return [
        compute_flow(frames[i], frames[i + 1], settings.levels, settings.smoothness_weight, settings.iterations)
        for i in range(len(frames) - 1)
    ]


def clip_embedding(
    frames: Sequence[np.ndarray],
    threshold: float,
    codebook: FlowCodebook,
    settings: FlowSettings = FlowSettings(),
) -> np.ndarray:
    """Concatenated VLADs of the k-1 consecutive flow maps, in temporal order."""
    return np.concatenate([vlad_encode(f, threshold, codebook) for f in clip_flows(frames, settings)])


@dataclass
class CorpusEmbedding:
    embeddings: np.ndarray
    threshold: float
    codebook: FlowCodebook | None
    warnings: list[str] = field(default_factory=list)


def embed_corpus(
    clips: Sequence[Sequence[np.ndarray]],
    n_clusters: int = 128,
    seed: int = 0,
    settings: FlowSettings = FlowSettings(),
    workers: int = 1,
) -> CorpusEmbedding:
    """Full hand-crafted pipeline: flows, global Otsu, codebook, per-clip VLAD concatenation.

    A corpus without usable motion (e.g. static videos) encodes to all-zero
    embeddings with a warning instead of failing.  Flow fields may be computed
    in ``workers`` processes; results are gathered in clip order.
    """
    if not clips:
        raise ValueError("empty clip corpus")
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            flows = list(pool.map(clip_flows, clips, [settings] * len(clips)))
    else:
        flows = [clip_flows(c, settings) for c in clips]
    n_maps = len(flows[0])
    if any(len(f) != n_maps for f in flows):
        raise ValueError("all clips must have the same number of frames")
    mags = np.concatenate([f.magnitudes() for fl in flows for f in fl])
    threshold = otsu_threshold(mags)
    dim = n_maps * n_clusters * 2
    try:
        codebook = build_flow_codebook([f for fl in flows for f in fl], threshold, n_clusters, seed)
    except DegenerateCorpusError as exc:
        msg = f"no usable motion in corpus, emitting all-zero embeddings: {exc}"
        log.warning(msg)
        return CorpusEmbedding(np.zeros((len(clips), dim)), threshold, None, [msg])
    emb = np.stack(
        [np.concatenate([vlad_encode(f, threshold, codebook) for f in fl]) for fl in flows]
    )
    return CorpusEmbedding(emb, threshold, codebook)

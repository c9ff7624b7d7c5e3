"""Classification, pseudo-motion and temporal-smoothness losses, and their window sets.

Window starts are 1-based to match the frame numbering used throughout.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import ShapeError, Tensor
from .core import ops
from .nets import ModelBundle, classify, encode, gru_step, motion_feature_image, zero_state

log = logging.getLogger(__name__)

LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class MarginConfig:
    delta: float = 1.0
    lambda_tradeoff: float = 0.1

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.lambda_tradeoff < 0:
            raise ValueError("lambda_tradeoff must be non-negative")


@dataclass(frozen=True, order=True)
class ClipWindow:
    video_id: int
    start: int
    duration: int


def neighbor_radius(dt: int) -> int:
    return math.ceil(dt / 2)


# ---------------------------------------------------------------- cross-entropy terms


def cross_entropy(probs: Tensor, onehot) -> Tensor:
    """-sum_i y_i^T log p_i with log clamped at log(1e-12)."""
    y = np.asarray(onehot, dtype=np.float64)
    if y.shape != probs.shape:
        raise ShapeError("cross_entropy", probs.shape, y.shape, "label width must equal class count")
    return ops.mul(ops.sum(ops.mul(ops.log(probs, floor=LOG_FLOOR), y)), -1.0)


def onehot(labels, n: int) -> np.ndarray:
    lab = np.asarray(labels, dtype=np.int64)
    if lab.size and (lab.min() < 0 or lab.max() >= n):
        raise ValueError(f"labels must lie in [0, {n})")
    out = np.zeros((lab.size, n))
    out[np.arange(lab.size), lab] = 1.0
    return out


def l_main(model: ModelBundle, images, labels_onehot, features: Tensor | None = None) -> Tensor:
    """Main-task loss on labelled images.  ``features`` may carry precomputed f(x)."""
    y = np.asarray(labels_onehot, dtype=np.float64)
    if y.ndim != 2 or y.shape[1] != model.cfg.n_classes:
        raise ShapeError("l_main", y.shape, (model.cfg.n_classes,), "label width must equal C")
    f = encode(images, model.theta_n) if features is None else features
    return cross_entropy(classify(model.theta_c, f), y)


def sequence_features(frame_feats: Tensor, index: np.ndarray, model: ModelBundle) -> Tensor:
    """GRU fold over rows of ``frame_feats`` selected by each row of ``index`` (B, T)."""
    index = np.asarray(index, dtype=np.intp)
    cell = model.theta_g
    state = zero_state(cell, (index.shape[0],))
    for t in range(index.shape[1]):
        state = gru_step(state, ops.take(frame_feats, index[:, t]), cell)
    return state


def l_motion_from_features(model: ModelBundle, motion_feats: Tensor, pseudo_labels) -> Tensor:
    labels = np.asarray(pseudo_labels)
    if labels.dtype == object or (labels < 0).any():
        raise ValueError("every clip needs a pseudo label")
    return cross_entropy(classify(model.theta_m, motion_feats), onehot(labels, model.cfg.n_motion))


def l_motion(model: ModelBundle, clips, pseudo_labels) -> Tensor:
    """Pseudo-motion classification loss over clips of shape (B, T, H, W)."""
    clips = np.asarray(clips, dtype=np.float64)
    if pseudo_labels is None or len(pseudo_labels) != len(clips) or any(l is None for l in pseudo_labels):
        raise ValueError("every clip needs a pseudo label")
    b, t = clips.shape[:2]
    feats = encode(clips.reshape(b * t, *clips.shape[2:]), model.theta_n)
    index = np.arange(b * t).reshape(b, t)
    return l_motion_from_features(model, sequence_features(feats, index, model), pseudo_labels)


# ---------------------------------------------------------------- window sets


def enumerate_windows(clip_lengths: Sequence[int], dt: int) -> list[ClipWindow]:
    """Every valid window of duration ``dt``; clips shorter than ``dt`` are skipped with a warning."""
    out = []
    for vid, length in enumerate(clip_lengths):
        if length < dt:
            log.warning("clip %d has %d frames < dt=%d; skipped", vid, length, dt)
            continue
        out.extend(ClipWindow(vid, t, dt) for t in range(1, length - dt + 2))
    return out


@dataclass
class PairSets:
    positives: list[tuple[ClipWindow, ClipWindow]]
    negatives: list[tuple[ClipWindow, ClipWindow]]


@dataclass
class TupleSets:
    positives: list[tuple[ClipWindow, ClipWindow, ClipWindow]]
    corrupted: list[tuple[ClipWindow, ClipWindow, ClipWindow]]
    warnings: list[str] = field(default_factory=list)


def _by_video(windows: Sequence[ClipWindow]) -> dict[int, list[ClipWindow]]:
    out: dict[int, list[ClipWindow]] = {}
    for w in windows:
        out.setdefault(w.video_id, []).append(w)
    return out


def enumerate_windows_and_pairs(
    clip_lengths: Sequence[int],
    dt: int,
    negatives_per_positive: int = 1,
    seed: int = 0,
    cross_video_fraction: float = 0.8,
) -> PairSets:
    """Temporal-neighbour pairs plus seeded negatives drawn from outside the pair set."""
    rng = np.random.default_rng(seed)
    radius = neighbor_radius(dt)
    videos = _by_video(enumerate_windows(clip_lengths, dt))
    positives = []
    for ws in videos.values():
        for a, b in itertools.combinations(ws, 2):
            if 1 <= abs(b.start - a.start) <= radius:
                positives.append((a, b))

    vids = sorted(videos)
    negatives = []
    for anchor, _ in positives:
        others = [v for v in vids if v != anchor.video_id]
        distant = [w for w in videos[anchor.video_id] if abs(w.start - anchor.start) > radius]
        for _ in range(negatives_per_positive):
            cross = bool(others) and (not distant or rng.random() < cross_video_fraction)
            if cross:
                v = others[int(rng.integers(len(others)))]
                partner = videos[v][int(rng.integers(len(videos[v])))]
            elif distant:
                partner = distant[int(rng.integers(len(distant)))]
            else:
                continue
            negatives.append((anchor, partner))
    return PairSets(positives, negatives)


def enumerate_tuples(clip_lengths: Sequence[int], dt: int, corrupted_per_tuple: int = 1, seed: int = 0) -> TupleSets:
    rng = np.random.default_rng(seed)
    radius = neighbor_radius(dt)
    videos = _by_video(enumerate_windows(clip_lengths, dt))
    positives = []
    for ws in videos.values():
        for a, b, c in itertools.combinations(ws, 3):
            if b.start - a.start <= radius and c.start - b.start <= radius:
                positives.append((a, b, c))
    sets = TupleSets(positives, [])
    vids = sorted(videos)
    if len(vids) < 2:
        if positives:
            msg = "fewer than two videos: corrupted tuple set is empty"
            log.warning(msg)
            sets.warnings.append(msg)
        return sets
    for a, b, _ in positives:
        others = [v for v in vids if v != a.video_id]
        for _ in range(corrupted_per_tuple):
            v = others[int(rng.integers(len(others)))]
            sets.corrupted.append((a, b, videos[v][int(rng.integers(len(videos[v])))]))
    return sets


# ---------------------------------------------------------------- contrastive terms


def smooth1_from_features(
    feats: Tensor,
    positives: Sequence[tuple[int, int]],
    negatives: Sequence[tuple[int, int]],
    delta: float,
) -> Tensor:
    """Pairs index rows of ``feats``.  sum_pos d + sum_neg max(delta - d, 0)."""
    total = Tensor(0.0)
    if len(positives):
        p = np.asarray(positives, dtype=np.intp)
        total = ops.add(total, ops.sum(ops.euclidean_distance(ops.take(feats, p[:, 0]), ops.take(feats, p[:, 1]))))
    if len(negatives):
        n = np.asarray(negatives, dtype=np.intp)
        d = ops.euclidean_distance(ops.take(feats, n[:, 0]), ops.take(feats, n[:, 1]))
        total = ops.add(total, ops.sum(ops.hinge(ops.sub(delta, d))))
    return total


def smooth2_from_features(
    feats: Tensor,
    positives: Sequence[tuple[int, int, int]],
    corrupted: Sequence[tuple[int, int, int]],
    delta: float,
) -> Tensor:
    """Second-order term on differences f1 - f2 and f2 - f3 of indexed rows."""

    def second_diff_dist(triples):
        t = np.asarray(triples, dtype=np.intp)
        f1, f2, f3 = (ops.take(feats, t[:, i]) for i in range(3))
        return ops.euclidean_distance(ops.sub(f1, f2), ops.sub(f2, f3))

    total = Tensor(0.0)
    if len(positives):
        total = ops.add(total, ops.sum(second_diff_dist(positives)))
    if len(corrupted):
        total = ops.add(total, ops.sum(ops.hinge(ops.sub(delta, second_diff_dist(corrupted)))))
    return total


@dataclass
class ProxyBatch:
    """One minibatch of clips with everything the proxy losses need.

    ``frames`` is (B, k, H, W).  ``motion_index`` rows select the augmented
    (k-2)-frame clips, ``motion_labels`` their pseudo labels; ``windows`` lists the
    smoothness windows whose rows are indexed by the pair/tuple sets.
    """

    frames: np.ndarray
    motion_index: np.ndarray
    motion_labels: np.ndarray
    window_index: np.ndarray
    pos_pairs: np.ndarray
    neg_pairs: np.ndarray
    pos_tuples: np.ndarray
    bad_tuples: np.ndarray


def build_proxy_batch(
    frames: np.ndarray,
    pseudo_labels: Sequence[int],
    dt: int,
    seed: int,
    negatives_per_positive: int = 1,
    corrupted_per_tuple: int = 1,
) -> ProxyBatch:
    frames = np.asarray(frames, dtype=np.float64)
    b, k = frames.shape[:2]
    if k < 4:
        raise ValueError("clips need k >= 4 frames for (k-2)-frame augmentation")
    if dt > k:
        raise ValueError(f"dt={dt} exceeds clip length {k}")
    base = np.arange(b * k).reshape(b, k)
    motion_index = np.concatenate([base[:, s : s + k - 2] for s in range(3)], axis=0)
    motion_labels = np.tile(np.asarray(pseudo_labels, dtype=np.int64), 3)

    lengths = [k] * b
    windows = enumerate_windows(lengths, dt)
    row = {w: i for i, w in enumerate(windows)}
    window_index = np.array([base[w.video_id, w.start - 1 : w.start - 1 + dt] for w in windows], dtype=np.intp)
    pairs = enumerate_windows_and_pairs(lengths, dt, negatives_per_positive, seed)
    tuples = enumerate_tuples(lengths, dt, corrupted_per_tuple, seed + 1)

    def rows(items, width):
        if not items:
            return np.zeros((0, width), dtype=np.intp)
        return np.array([[row[w] for w in it] for it in items], dtype=np.intp)

    return ProxyBatch(
        frames,
        motion_index,
        motion_labels,
        window_index,
        rows(pairs.positives, 2),
        rows(pairs.negatives, 2),
        rows(tuples.positives, 3),
        rows(tuples.corrupted, 3),
    )


@dataclass
class ProxyTerms:
    motion: Tensor
    smooth1: Tensor
    smooth2: Tensor

    @property
    def total(self) -> Tensor:
        return ops.add(ops.add(self.motion, self.smooth1), self.smooth2)


def proxy_terms(
    model: ModelBundle,
    batch: ProxyBatch,
    delta: float,
    use: tuple[bool, bool, bool] = (True, True, True),
    frame_features: Tensor | None = None,
) -> ProxyTerms:
    """Evaluate the requested proxy components; disabled ones are constant zero.

    Sequences that coincide (same frame rows) are computed once.
    """
    b, k = batch.frames.shape[:2]
    feats = frame_features
    if feats is None:
        feats = encode(batch.frames.reshape(b * k, *batch.frames.shape[2:]), model.theta_n)
    zero = Tensor(0.0)
    need_windows = use[1] or use[2]
    seqs: list[np.ndarray] = []
    if use[0]:
        seqs.append(batch.motion_index)
    if need_windows:
        seqs.append(batch.window_index)

    # group sequences by length and deduplicate so each distinct window is folded once
    cache: dict[tuple[int, ...], int] = {}
    uniq: list[np.ndarray] = []
    for s in seqs:
        for r in s:
            key = tuple(int(i) for i in r)
            if key not in cache:
                cache[key] = len(uniq)
                uniq.append(r)
    by_len: dict[int, list[int]] = {}
    for i, r in enumerate(uniq):
        by_len.setdefault(len(r), []).append(i)
    blocks, order = [], []
    for length in sorted(by_len):
        ids = by_len[length]
        blocks.append(sequence_features(feats, np.stack([uniq[i] for i in ids]), model))
        order.extend(ids)
    if not blocks:
        return ProxyTerms(zero, zero, zero)
    stacked = blocks[0] if len(blocks) == 1 else _stack_rows(blocks)
    pos_of = np.empty(len(uniq), dtype=np.intp)
    pos_of[np.asarray(order)] = np.arange(len(order))

    def rows_for(index):
        return pos_of[[cache[tuple(int(i) for i in r)] for r in index]]

    motion = zero
    if use[0]:
        motion = l_motion_from_features(model, ops.take(stacked, rows_for(batch.motion_index)), batch.motion_labels)
    s1 = s2 = zero
    if need_windows and len(batch.window_index):
        wf = ops.take(stacked, rows_for(batch.window_index))
        if use[1]:
            s1 = smooth1_from_features(wf, batch.pos_pairs, batch.neg_pairs, delta)
        if use[2]:
            s2 = smooth2_from_features(wf, batch.pos_tuples, batch.bad_tuples, delta)
    return ProxyTerms(motion, s1, s2)


def _stack_rows(blocks: Sequence[Tensor]) -> Tensor:
    """Row-stack (B_i, d) tensors using only concatenate/reshape/take."""
    d = blocks[0].shape[-1]
    width = sum(bl.shape[0] for bl in blocks)
    # row-major flatten keeps block order when joined along the last axis
    flat = ops.concatenate([ops.reshape(bl, (1, bl.shape[0] * d)) for bl in blocks])
    return ops.reshape(flat, (width, d))


def l_smooth1(model: ModelBundle, batch: ProxyBatch, delta: float = 1.0) -> Tensor:
    return proxy_terms(model, batch, delta, use=(False, True, False)).smooth1


def l_smooth2(model: ModelBundle, batch: ProxyBatch, delta: float = 1.0) -> Tensor:
    return proxy_terms(model, batch, delta, use=(False, False, True)).smooth2


def l_proxy(model: ModelBundle, batch: ProxyBatch, delta: float = 1.0, frame_features: Tensor | None = None) -> Tensor:
    return proxy_terms(model, batch, delta, frame_features=frame_features).total


def l_vre(
    model: ModelBundle,
    images,
    labels_onehot,
    batch: ProxyBatch,
    margins: MarginConfig = MarginConfig(),
    use: tuple[bool, bool, bool] = (True, True, True),
) -> Tensor:
    main = l_main(model, images, labels_onehot)
    proxy = proxy_terms(model, batch, margins.delta, use).total
    return ops.add(main, ops.mul(proxy, margins.lambda_tradeoff))


def fused_feature(model: ModelBundle, visual: Tensor) -> Tensor:
    """[motion ; visual] in that order."""
    return ops.concatenate([motion_feature_image(visual, model.theta_g), visual])


def l_mra(model: ModelBundle, images, labels_onehot, features: Tensor | None = None) -> Tensor:
    f = encode(images, model.theta_n) if features is None else features
    return cross_entropy(classify(model.theta_a, fused_feature(model, f)), labels_onehot)


def l_only_mr(model: ModelBundle, images, labels_onehot, features: Tensor | None = None) -> Tensor:
    f = encode(images, model.theta_n) if features is None else features
    return cross_entropy(classify(model.theta_o, motion_feature_image(f, model.theta_g)), labels_onehot)

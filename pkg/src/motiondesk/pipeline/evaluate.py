"""Accuracy/confusion evaluation and nearest-motion-clip retrieval."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import no_grad
from ..losses import fused_feature
from ..nets import ModelBundle, classify, encode, motion_feature_image

MODES = ("fused", "visual_only", "motion_only")
_MODE_HEAD = {"fused": "theta_a", "visual_only": "theta_c", "motion_only": "theta_o"}


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray  # rows: true class, cols: predicted
    predictions: np.ndarray


def predict_proba(model: ModelBundle, images, mode: str = "fused") -> np.ndarray:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    with no_grad():
        visual = encode(images, model.theta_n)
        if mode == "visual_only":
            return classify(model.theta_c, visual).data
        if mode == "motion_only":
            return classify(model.theta_o, motion_feature_image(visual, model.theta_g)).data
        return classify(model.theta_a, fused_feature(model, visual)).data


def evaluate(model: ModelBundle, images, labels, mode: str = "fused") -> EvalResult:
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) == 0:
        raise ValueError("empty test set")
    probs = predict_proba(model, images, mode)
    pred = probs.argmax(axis=1)  # ties -> lowest class index
    C = probs.shape[1]
    conf = np.zeros((C, C), dtype=np.int64)
    np.add.at(conf, (labels, pred), 1)
    return EvalResult(float((pred == labels).mean()), conf, pred)


def head_for_mode(mode: str) -> str:
    return _MODE_HEAD[mode]


@dataclass
class Retrieval:
    clip_id: int
    distance: float


def motion_codes_for_first_frames(model: ModelBundle, first_frames) -> np.ndarray:
    with no_grad():
        return motion_feature_image(encode(first_frames, model.theta_n), model.theta_g).data


def retrieve_nearest_clips(images, model: ModelBundle, first_frames, clip_ids=None) -> list[Retrieval]:
    """Nearest clip (L2 between first-frame motion codes) for each query image; ties -> lowest id."""
    first_frames = np.asarray(first_frames, dtype=np.float64)
    if len(first_frames) == 0:
        raise ValueError("retrieval needs at least one clip")
    ids = np.arange(len(first_frames)) if clip_ids is None else np.asarray(clip_ids)
    order = np.argsort(ids, kind="stable")
    ids, codes = ids[order], motion_codes_for_first_frames(model, first_frames)[order]
    queries = motion_codes_for_first_frames(model, np.asarray(images, dtype=np.float64))
    out = []
    for q in queries:
        dist = np.sqrt(((codes - q) ** 2).sum(axis=1))
        j = int(np.argmin(dist))  # first minimum in ascending id order
        out.append(Retrieval(int(ids[j]), float(dist[j])))
    return out


def retrieve_nearest_clip(image, model: ModelBundle, first_frames, clip_ids=None) -> Retrieval:
    """Clip whose first-frame motion code is closest (L2) to the image's; ties -> lowest id."""
    return retrieve_nearest_clips(np.asarray(image, dtype=np.float64)[None], model, first_frames, clip_ids)[0]

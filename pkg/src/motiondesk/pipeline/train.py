"""The five-step training procedure and its ablation variants."""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..core import Tensor, adam_step, no_grad, zero_grad
from ..losses import (
    build_proxy_batch,
    cross_entropy,
    fused_feature,
    l_main,
    onehot,
    proxy_terms,
)
from ..nets import ModelBundle, classify, encode, motion_feature_image
from ..core import ops
from .config import TrainConfig
from .data import Corpus, sample_clip

log = logging.getLogger(__name__)

# (steps run, proxy components used in step 2, final head for step 5)
VARIANT_PLAN: dict[str, tuple[tuple[int, ...], tuple[bool, bool, bool], str | None]] = {
    "unreg": ((1,), (False, False, False), None),
    "unreg+motion": ((1, 2, 3), (True, False, False), None),
    "unreg+smooth1": ((1, 2, 3), (False, True, False), None),
    "unreg+smooth2": ((1, 2, 3), (False, False, True), None),
    "no_mra": ((1, 2, 3), (True, True, True), None),
    "full": ((1, 2, 3, 4, 5), (True, True, True), "theta_a"),
    "only_mr": ((1, 2, 3, 4, 5), (True, True, True), "theta_o"),
}

STEP_GROUPS = {
    1: ("theta_n", "theta_c"),
    2: ("theta_n", "theta_c", "theta_g", "theta_m"),
    3: ("theta_n", "theta_c"),
    4: ("theta_g", "theta_m"),
}


class TrainingDivergence(RuntimeError):
    def __init__(self, step: int, iteration: int, value: float):
        self.step = step
        self.iteration = iteration
        self.value = value
        super().__init__(f"non-finite loss {value} at step {step}, iteration {iteration}")

    def __reduce__(self):
        return type(self), (self.step, self.iteration, self.value)


@dataclass
class TrainingData:
    images: np.ndarray
    labels: np.ndarray
    clips: np.ndarray  # (N_v, k, H, W)
    pseudo_labels: np.ndarray
    n_classes: int


@dataclass
class TrainResult:
    model: ModelBundle
    variant: str
    seed: int
    # (step, iteration, loss)
    trace: list[tuple[int, int, float]] = field(default_factory=list)
    final_head: str = "theta_c"

    def step_trace(self, step: int) -> np.ndarray:
        return np.array([loss for s, _, loss in self.trace if s == step])


def make_training_data(corpus: Corpus, pseudo_labels, k: int) -> TrainingData:
    clips = np.stack([sample_clip(v, k) for v in corpus.videos]) if len(corpus.videos) else np.zeros((0, k, 1, 1))
    return TrainingData(corpus.train_images, corpus.train_labels, clips, np.asarray(pseudo_labels, dtype=np.int64), corpus.n_classes)


def variant_plan(variant: str):
    if variant not in VARIANT_PLAN:
        raise ValueError(f"unknown variant {variant!r}")
    return VARIANT_PLAN[variant]


def _run_step(
    model: ModelBundle,
    step: int,
    groups: tuple[str, ...],
    n_iter: int,
    cfg: TrainConfig,
    loss_fn: Callable[[int], Tensor],
    trace: list,
) -> None:
    params = model.params(*groups)
    for p in params:
        p.reset_moments()
    schedule = cfg.schedule()
    for it in range(n_iter):
        zero_grad(params)
        loss = loss_fn(it)
        value = loss.item()
        if not math.isfinite(value):
            raise TrainingDivergence(step, it, value)
        trace.append((step, it, value))
        loss.backward()
        adam_step(params, schedule, it)
    for p in model.params(*[g for g in ("theta_n", "theta_c", "theta_g", "theta_m", "theta_a", "theta_o")]):
        p.grad = None


class _Trainer:
    """Mutable training state (model, RNG, loss trace) advanced one step at a time.

    A trainer can be deep-copied between steps; because every step draws only from
    the trainer's own RNG, a copy continued with step s is bit-identical to an
    uninterrupted run of the same plan.  ``train_family`` relies on this to share
    common step prefixes across variants.
    """

    def __init__(self, cfg: TrainConfig, data: TrainingData, seed: int):
        self.cfg = cfg
        self.data = data
        self.model = ModelBundle(cfg.net(data.n_classes), seed)
        self.rng = np.random.default_rng([seed, 1])
        self.trace: list[tuple[int, int, float]] = []
        self.y_all = onehot(data.labels, data.n_classes)
        self.ib = min(cfg.image_batch, len(data.images))
        self.cb = min(cfg.clip_batch, len(data.clips))

    def _image_batch(self):
        idx = np.sort(self.rng.choice(len(self.data.images), self.ib, replace=False))
        return self.data.images[idx], self.y_all[idx]

    def _proxy_batch(self):
        cfg, data = self.cfg, self.data
        idx = np.sort(self.rng.choice(len(data.clips), self.cb, replace=False))
        batch = build_proxy_batch(
            data.clips[idx],
            data.pseudo_labels[idx],
            cfg.dt,
            seed=int(self.rng.integers(2**31)),
            negatives_per_positive=cfg.negatives_per_positive,
            corrupted_per_tuple=cfg.corrupted_per_tuple,
        )
        return idx, batch

    def _run(self, step: int, groups: tuple[str, ...], loss_fn: Callable[[int], Tensor]) -> None:
        _run_step(self.model, step, groups, self.cfg.iterations[step - 1], self.cfg, loss_fn, self.trace)

    def step_main(self, step: int) -> None:
        """Steps 1 and 3: L_main on theta_n, theta_c."""
        model = self.model

        def loss(it: int) -> Tensor:
            x, y = self._image_batch()
            return l_main(model, x, y)

        self._run(step, STEP_GROUPS[step], loss)

    def step_vre(self, use: tuple[bool, bool, bool]) -> None:
        """Step 2: L_main + lambda * L_proxy on theta_n, theta_c, theta_g, theta_m."""
        model, cfg = self.model, self.cfg
        if len(self.data.clips) == 0:
            raise ValueError("proxy training needs unlabeled clips")

        def loss(it: int) -> Tensor:
            x, y = self._image_batch()
            _, batch = self._proxy_batch()
            proxy = proxy_terms(model, batch, cfg.delta, use).total
            return ops.add(l_main(model, x, y), ops.mul(proxy, cfg.lam))

        self._run(2, STEP_GROUPS[2], loss)

    def step_motion(self) -> None:
        """Step 4: L_proxy on theta_g, theta_m with the (frozen) encoder's features precomputed."""
        model, data, cfg = self.model, self.data, self.cfg
        n_clip, k = data.clips.shape[:2]
        with no_grad():
            frame_feats = encode(data.clips.reshape(n_clip * k, *data.clips.shape[2:]), model.theta_n).data

        def loss(it: int) -> Tensor:
            idx, batch = self._proxy_batch()
            rows = (idx[:, None] * k + np.arange(k)[None, :]).ravel()
            return proxy_terms(model, batch, cfg.delta, frame_features=Tensor(frame_feats[rows])).total

        self._run(4, STEP_GROUPS[4], loss)

    def step_head(self, head_name: str) -> None:
        """Step 5: the final classifier on frozen (fused or motion-only) features."""
        model = self.model
        with no_grad():
            visual = encode(self.data.images, model.theta_n)
            if head_name == "theta_a":
                head_input = fused_feature(model, visual).data
            else:
                head_input = motion_feature_image(visual, model.theta_g).data
        head = model.group(head_name)

        def loss(it: int) -> Tensor:
            idx = np.sort(self.rng.choice(len(self.data.images), self.ib, replace=False))
            return cross_entropy(classify(head, Tensor(head_input[idx])), self.y_all[idx])

        self._run(5, (head_name,), loss)

    def apply(self, stage: tuple) -> None:
        step = stage[0]
        if step in (1, 3):
            self.step_main(step)
        elif step == 2:
            self.step_vre(stage[1])
        elif step == 4:
            self.step_motion()
        else:
            self.step_head(stage[1])


def _stages(variant: str) -> list[tuple]:
    steps, use, final = variant_plan(variant)
    out = []
    for s in steps:
        out.append((2, use) if s == 2 else (5, final) if s == 5 else (s,))
    return out


def train_family(cfg: TrainConfig, data: TrainingData, seed: int, variants) -> dict[str, TrainResult]:
    """Train several variants for one seed, running shared step prefixes only once.

    Results are bit-identical to calling ``train`` for each variant separately.
    """
    cfg.validate()
    variants = list(dict.fromkeys(variants))
    plans = {v: _stages(v) for v in variants}
    results: dict[str, TrainResult] = {}

    def grow(trainer: _Trainer, depth: int, members: list[str]) -> None:
        done = [v for v in members if len(plans[v]) == depth]
        for v in done:
            results[v] = TrainResult(trainer.model, v, seed, list(trainer.trace), plans[v][-1][1] if plans[v][-1][0] == 5 else "theta_c")
        rest = [v for v in members if len(plans[v]) > depth]
        branches: dict[tuple, list[str]] = {}
        for v in rest:
            branches.setdefault(plans[v][depth], []).append(v)
        for i, (stage, group) in enumerate(branches.items()):
            # the last branch may consume the trainer unless a finished variant still holds its model
            last = i == len(branches) - 1 and not done
            child = trainer if last else copy.deepcopy(trainer, {id(trainer.data): trainer.data, id(trainer.cfg): trainer.cfg})
            child.apply(stage)
            grow(child, depth + 1, group)

    grow(_Trainer(cfg, data, seed), 0, variants)
    return {v: results[v] for v in variants}


def train(cfg: TrainConfig, data: TrainingData, seed: int | None = None, variant: str | None = None) -> TrainResult:
    """Algorithm 1 for one variant."""
    seed = cfg.seed if seed is None else seed
    variant = cfg.variant if variant is None else variant
    return train_family(cfg, data, seed, [variant])[variant]

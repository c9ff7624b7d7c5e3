"""Visual encoder, shared GRU cell and the two-layer classification heads."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .core import Parameter, ShapeError, Tensor, glorot_uniform
from .core import ops

GROUPS = ("theta_n", "theta_c", "theta_g", "theta_m", "theta_a", "theta_o")


class Module:
    """Parameter container; attributes holding Parameters are discovered in definition order."""

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_parameters(self) -> Iterator[tuple[str, Parameter]]:
        for key, val in vars(self).items():
            if isinstance(val, Parameter):
                yield key, val


def _param(rng, shape, fan_in, fan_out, name) -> Parameter:
    return Parameter(glorot_uniform(rng, shape, fan_in, fan_out), name=name)


def _bias(n, name) -> Parameter:
    return Parameter(np.zeros(n), name=name)


class Encoder(Module):
    """conv3x3(c1) -> relu -> pool2 -> conv3x3(c2) -> relu -> pool2 -> fc(d_v) -> relu."""

    def __init__(self, rng: np.random.Generator, image_size: int = 32, d_v: int = 64, channels: tuple[int, int] = (8, 16)):
        if image_size % 4:
            raise ValueError("image_size must be divisible by 4")
        c1, c2 = channels
        self.image_size = image_size
        self.d_v = d_v
        self.conv1_w = _param(rng, (3, 3, 1, c1), 9, c1 * 9, "conv1_w")
        self.conv1_b = _bias(c1, "conv1_b")
        self.conv2_w = _param(rng, (3, 3, c1, c2), c1 * 9, c2 * 9, "conv2_w")
        self.conv2_b = _bias(c2, "conv2_b")
        flat = c2 * (image_size // 4) ** 2
        self.fc_w = _param(rng, (flat, d_v), flat, d_v, "fc_w")
        self.fc_b = _bias(d_v, "fc_b")

    def __call__(self, images) -> Tensor:
        return encode(images, self)


class GRUCell(Module):
    def __init__(self, rng: np.random.Generator, d_v: int = 64, d_m: int = 32):
        self.d_v = d_v
        self.d_m = d_m
        n_in = d_m + d_v
        self.w_z = _param(rng, (n_in, d_m), n_in, d_m, "w_z")
        self.b_z = _bias(d_m, "b_z")
        self.w_r = _param(rng, (n_in, d_m), n_in, d_m, "w_r")
        self.b_r = _bias(d_m, "b_r")
        self.w_h = _param(rng, (n_in, d_m), n_in, d_m, "w_h")
        self.b_h = _bias(d_m, "b_h")


class Head(Module):
    """fc -> relu -> fc -> softmax."""

    def __init__(self, rng: np.random.Generator, n_in: int, hidden: int, n_out: int):
        self.n_in = n_in
        self.w1 = _param(rng, (n_in, hidden), n_in, hidden, "w1")
        self.b1 = _bias(hidden, "b1")
        self.w2 = _param(rng, (hidden, n_out), hidden, n_out, "w2")
        self.b2 = _bias(n_out, "b2")

    def logits(self, feature: Tensor) -> Tensor:
        if feature.shape[-1] != self.n_in:
            raise ShapeError("classify", feature.shape, self.w1.shape, f"head expects feature width {self.n_in}")
        hidden = ops.relu(ops.add(ops.matmul(feature, self.w1), self.b1))
        return ops.add(ops.matmul(hidden, self.w2), self.b2)

    def __call__(self, feature: Tensor) -> Tensor:
        return classify(self, feature)


# ---------------------------------------------------------------- operations


def as_image_batch(images, size: int) -> Tensor:
    arr = images.data if isinstance(images, Tensor) else np.asarray(images, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim == 3:
        arr = arr[..., None]
    if arr.ndim != 4 or arr.shape[3] != 1 or arr.shape[1:3] != (size, size):
        raise ShapeError("encode", arr.shape, (size, size), "image size does not match encoder configuration")
    return images if isinstance(images, Tensor) and images.ndim == 4 else Tensor(arr)


def encode(images, enc: Encoder) -> Tensor:
    """Visual features f(x), shape (N, d_v), for grayscale images in [0, 1]."""
    x = as_image_batch(images, enc.image_size)
    if not np.isfinite(x.data).all() or x.data.min() < 0.0 or x.data.max() > 1.0:
        raise ValueError("image values must lie in [0, 1]")
    h = ops.max_pool2d(ops.relu(ops.conv2d(x, enc.conv1_w, enc.conv1_b, padding=1)))
    h = ops.max_pool2d(ops.relu(ops.conv2d(h, enc.conv2_w, enc.conv2_b, padding=1)))
    h = ops.reshape(h, (h.shape[0], -1))
    return ops.relu(ops.add(ops.matmul(h, enc.fc_w), enc.fc_b))


def gru_step(prev_state, x, cell: GRUCell) -> Tensor:
    s, x = ops.as_tensor(prev_state), ops.as_tensor(x)
    if s.shape[-1] != cell.d_m or x.shape[-1] != cell.d_v or s.shape[:-1] != x.shape[:-1]:
        raise ShapeError("gru_step", s.shape, x.shape, f"expected state width {cell.d_m} and input width {cell.d_v}")
    sx = ops.concatenate([s, x])
    z = ops.sigmoid(ops.add(ops.matmul(sx, cell.w_z), cell.b_z))
    r = ops.sigmoid(ops.add(ops.matmul(sx, cell.w_r), cell.b_r))
    cand = ops.tanh(ops.add(ops.matmul(ops.concatenate([ops.mul(r, s), x]), cell.w_h), cell.b_h))
    return ops.add(ops.mul(ops.sub(1.0, z), s), ops.mul(z, cand))


def zero_state(cell: GRUCell, batch: tuple[int, ...] = ()) -> Tensor:
    return Tensor(np.zeros(batch + (cell.d_m,)))


def motion_feature_video(features: Sequence[Tensor], cell: GRUCell) -> Tensor:
    """Fold the GRU over per-frame features from the all-zero state; returns the last state.

    Each element may be a single feature (d_v,) or a batch (B, d_v) of aligned sequences.
    """
    if len(features) == 0:
        raise ValueError("motion_feature_video needs at least one frame feature")
    first = ops.as_tensor(features[0])
    state = zero_state(cell, first.shape[:-1])
    for f in features:
        state = gru_step(state, f, cell)
    return state


def motion_feature_image(feature, cell: GRUCell) -> Tensor:
    f = ops.as_tensor(feature)
    return gru_step(zero_state(cell, f.shape[:-1]), f, cell)


def classify(head: Head, feature) -> Tensor:
    return ops.softmax(head.logits(ops.as_tensor(feature)))


# ---------------------------------------------------------------- bundle


@dataclass(frozen=True)
class NetConfig:
    n_classes: int
    n_motion: int
    image_size: int = 32
    d_v: int = 64
    d_m: int = 32
    channels: tuple[int, int] = (8, 16)


class ModelBundle:
    """theta_n encoder, theta_c visual head, theta_g GRU, theta_m motion head,
    theta_a fused head, theta_o motion-only head (used by the only-MR variant)."""

    def __init__(self, cfg: NetConfig, seed: int):
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        d_v, d_m, C, K = cfg.d_v, cfg.d_m, cfg.n_classes, cfg.n_motion
        self.theta_n = Encoder(rng, cfg.image_size, d_v, cfg.channels)
        self.theta_c = Head(rng, d_v, d_v, C)
        self.theta_g = GRUCell(rng, d_v, d_m)
        self.theta_m = Head(rng, d_m, min(512, 8 * K), K)
        self.theta_a = Head(rng, d_v + d_m, d_v + d_m, C)
        self.theta_o = Head(rng, d_m, d_m, C)

    def group(self, name: str) -> Module:
        if name not in GROUPS:
            raise KeyError(name)
        return getattr(self, name)

    def params(self, *groups: str) -> list[Parameter]:
        return [p for g in groups for p in self.group(g).parameters()]

    def named_parameters(self) -> dict[str, Parameter]:
        return {f"{g}.{k}": p for g in GROUPS for k, p in self.group(g).named_parameters()}

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.named_parameters().items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        named = self.named_parameters()
        missing = set(named) - set(values)
        if missing:
            raise KeyError(f"checkpoint lacks parameters: {sorted(missing)}")
        for k, p in named.items():
            if values[k].shape != p.shape:
                raise ShapeError("load", values[k].shape, p.shape, k)
            p.data = np.array(values[k], dtype=np.float64)

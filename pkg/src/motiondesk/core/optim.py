"""Parameters, Adam, the step-decay learning-rate schedule, and checkpoint I/O."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .tensor import Tensor

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class Parameter(Tensor):
    """A trainable leaf tensor carrying its own Adam moments."""

    __slots__ = ("name", "adam_m", "adam_v", "step_count")

    def __init__(self, data, name: str = ""):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.adam_m = np.zeros_like(self.data)
        self.adam_v = np.zeros_like(self.data)
        self.step_count = 0

    def reset_moments(self) -> None:
        self.adam_m = np.zeros_like(self.data)
        self.adam_v = np.zeros_like(self.data)
        self.step_count = 0

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    s = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=shape)


@dataclass(frozen=True)
class LrSchedule:
    base_rate: float = 1e-4
    decay_factor: float = 0.1
    decay_interval: int = 1800

    def __post_init__(self):
        if self.base_rate <= 0:
            raise ValueError("base_rate must be positive")
        if not 0 < self.decay_factor < 1:
            raise ValueError("decay_factor must lie in (0, 1)")
        if self.decay_interval < 1:
            raise ValueError("decay_interval must be a positive integer")

    def rate(self, iteration: int) -> float:
        return self.base_rate * self.decay_factor ** (iteration // self.decay_interval)


def zero_grad(params: Iterable[Parameter]) -> None:
    for p in params:
        p.zero_grad()


def adam_step(params: Iterable[Parameter], schedule: LrSchedule, iteration: int) -> list[Parameter]:
    """One Adam update at ``schedule.rate(iteration)``; clears grads afterwards."""
    params = list(params)
    for p in params:
        if p.grad is None:
            raise ValueError(f"parameter {p.name or p!r} has no gradient; call backward first")
    lr = schedule.rate(iteration)
    for p in params:
        g = p.grad
        p.step_count += 1
        t = p.step_count
        p.adam_m = ADAM_BETA1 * p.adam_m + (1.0 - ADAM_BETA1) * g
        p.adam_v = ADAM_BETA2 * p.adam_v + (1.0 - ADAM_BETA2) * g * g
        m_hat = p.adam_m / (1.0 - ADAM_BETA1**t)
        v_hat = p.adam_v / (1.0 - ADAM_BETA2**t)
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        p.grad = None
    return params


# ---------------------------------------------------------------- checkpoints

CKPT_MAGIC = "MDCKPT"


def save_checkpoint(path: str | Path, params: Mapping[str, Tensor | np.ndarray]) -> None:
    """Write values (not moments) in name order given by the mapping."""
    with open(path, "wb") as fh:
        fh.write(f"{CKPT_MAGIC} 1 {len(params)}\n".encode())
        for name, p in params.items():
            if any(ch.isspace() for ch in name):
                raise ValueError(f"parameter name may not contain whitespace: {name!r}")
            fh.write(f"{name}\n".encode())
            arr = p.data if isinstance(p, Tensor) else np.asarray(p)
            fh.write((" ".join(str(s) for s in arr.shape) + "\n").encode())
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _readline(fh) -> str:
    line = fh.readline()
    if not line:
        raise ValueError("truncated checkpoint")
    return line.decode().rstrip("\n")


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    with open(path, "rb") as fh:
        head = _readline(fh).split()
        if len(head) != 3 or head[0] != CKPT_MAGIC or head[1] != "1":
            raise ValueError(f"{path}: not an {CKPT_MAGIC} v1 checkpoint")
        for _ in range(int(head[2])):
            name = _readline(fh)
            shape_line = _readline(fh).strip()
            shape = tuple(int(s) for s in shape_line.split()) if shape_line else ()
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(8 * count)
            if len(raw) != 8 * count:
                raise ValueError(f"{path}: truncated data for {name}")
            out[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
    return out

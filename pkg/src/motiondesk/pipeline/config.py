"""Run configuration and the flat ``key = value`` config-file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from ..core import LrSchedule
from ..flowfeat import FlowSettings
from ..losses import MarginConfig
from ..nets import NetConfig
from .data import CorpusConfig

VARIANTS = ("full", "unreg", "unreg+motion", "unreg+smooth1", "unreg+smooth2", "no_mra", "only_mr")


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    # corpus
    n_classes: int = 6
    train_per_class: int = 10
    test_per_class: int = 20
    n_videos: int = 60
    video_frames: int = 40
    frame_size: int = 32
    sprite_size: int = 11
    speed: float = 0.5
    background_noise: float = 0.1
    frame_noise: float = 0.03
    contrast: float = 0.4
    jitter: float = 4.0
    static: bool = False
    data_seed: int = 0
    # hand-crafted features and pseudo labels
    k: int = 12
    flow_levels: int = 3
    flow_smoothness: float = 0.1
    flow_iterations: int = 50
    n_clusters: int = 16
    K: int = 8
    cluster_seed: int = 0
    # networks
    d_v: int = 64
    d_m: int = 32
    # losses
    dt: int = 10
    delta: float = 1.0
    lam: float = 0.1
    negatives_per_positive: int = 1
    corrupted_per_tuple: int = 1
    # optimisation
    iterations: tuple[int, int, int, int, int] = (300, 400, 300, 300, 300)
    image_batch: int = 16
    clip_batch: int = 4
    lr: float = 1e-3
    lr_decay: float = 0.1
    lr_interval: int = 180
    # run
    seed: int = 0
    variant: str = "full"
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    variants: tuple[str, ...] = ("unreg", "unreg+motion", "no_mra", "full", "only_mr")
    dataset: str = ""
    cache: str = ""

    def validate(self) -> "TrainConfig":
        if self.dt > self.k - 2:
            raise ConfigError(f"dt={self.dt} must be <= k-2={self.k - 2} so windows fit augmented clips")
        if self.dt < 1:
            raise ConfigError("dt must be >= 1")
        if self.k < 4:
            raise ConfigError("k must be >= 4")
        if self.lam < 0:
            raise ConfigError("lam must be >= 0")
        if self.delta <= 0:
            raise ConfigError("delta must be > 0")
        if len(self.iterations) != 5 or any(i < 0 for i in self.iterations):
            raise ConfigError("iterations needs five non-negative counts")
        for v in (self.variant, *self.variants):
            if v not in VARIANTS:
                raise ConfigError(f"unknown variant {v!r}; choose from {', '.join(VARIANTS)}")
        if self.video_frames < (self.k - 1) * 3 + 1:
            raise ConfigError(f"video_frames={self.video_frames} too short for k={self.k} key frames at stride 3")
        return self

    # ------------------------------------------------------------ views

    def corpus(self) -> CorpusConfig:
        return CorpusConfig(
            n_classes=self.n_classes,
            train_per_class=self.train_per_class,
            test_per_class=self.test_per_class,
            n_videos=self.n_videos,
            video_frames=self.video_frames,
            frame_size=self.frame_size,
            sprite_size=self.sprite_size,
            speed=self.speed,
            background_noise=self.background_noise,
            frame_noise=self.frame_noise,
            contrast=self.contrast,
            jitter=self.jitter,
            static=self.static,
            seed=self.data_seed,
        )

    def flow(self) -> FlowSettings:
        return FlowSettings(self.flow_levels, self.flow_smoothness, self.flow_iterations)

    def net(self, n_classes: int | None = None) -> NetConfig:
        return NetConfig(
            n_classes=self.n_classes if n_classes is None else n_classes,
            n_motion=self.K,
            image_size=self.frame_size,
            d_v=self.d_v,
            d_m=self.d_m,
        )

    def margins(self) -> MarginConfig:
        return MarginConfig(self.delta, self.lam)

    def schedule(self) -> LrSchedule:
        return LrSchedule(self.lr, self.lr_decay, self.lr_interval)

    def replace(self, **kw) -> "TrainConfig":
        return dataclasses.replace(self, **kw).validate()

    def dumps(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            val = getattr(self, f.name)
            if isinstance(val, tuple):
                val = ",".join(str(v) for v in val)
            elif isinstance(val, bool):
                val = "true" if val else "false"
            lines.append(f"{f.name} = {val}")
        return "\n".join(lines) + "\n"


def _coerce(name: str, raw: str, default):
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if isinstance(default, tuple):
            items = [s.strip() for s in raw.split(",") if s.strip()]
            if default and isinstance(default[0], int):
                return tuple(int(s) for s in items)
            return tuple(items)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


def parse_config(text: str, base: TrainConfig | None = None) -> TrainConfig:
    cfg = base or TrainConfig()
    known = {f.name: f for f in dataclasses.fields(TrainConfig)}
    updates = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"unknown config key {key!r} (line {lineno})")
        updates[key] = _coerce(key, raw, getattr(cfg, key))
    return dataclasses.replace(cfg, **updates).validate()


def load_config(path: str | Path | None) -> TrainConfig:
    if path is None:
        return TrainConfig().validate()
    return parse_config(Path(path).read_text())

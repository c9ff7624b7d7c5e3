"""Clip sampling, the synthetic sprite corpus, and the on-disk dataset layout."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

KEY_FRAME_INTERVAL = 3


def sample_clip(source_frames: Sequence[np.ndarray], k: int, interval: int = KEY_FRAME_INTERVAL) -> np.ndarray:
    """First k key frames at the given interval: 1-based source indices 1, 1+interval, ..."""
    need = (k - 1) * interval + 1
    if len(source_frames) < need:
        raise ValueError(f"source has {len(source_frames)} frames; k={k} at interval {interval} needs {need}")
    return np.stack([np.asarray(source_frames[i], dtype=np.float64) for i in range(0, need, interval)])


def key_frame_indices(k: int, interval: int = KEY_FRAME_INTERVAL) -> list[int]:
    return [1 + i * interval for i in range(k)]


def augment_clip(clip: np.ndarray) -> list[np.ndarray]:
    """Three (k-2)-frame sub-clips starting at frames 1, 2 and 3."""
    k = len(clip)
    if k < 4:
        raise ValueError(f"augmentation needs k >= 4 frames, got {k}")
    return [np.asarray(clip[s : s + k - 2]) for s in range(3)]


# ---------------------------------------------------------------- synthetic corpus

MOTIONS = ("right", "left", "up", "down", "rotate", "oscillate")


@dataclass(frozen=True)
class CorpusConfig:
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
    seed: int = 0

    def validate(self) -> None:
        if not 1 <= self.n_classes <= len(MOTIONS):
            raise ValueError(f"n_classes must be in [1, {len(MOTIONS)}]")
        if self.sprite_size + 2 > self.frame_size:
            raise ValueError(f"sprite_size {self.sprite_size} does not fit in frame_size {self.frame_size}")
        if self.frame_size < 16:
            raise ValueError("frame_size must be at least 16")
        if min(self.train_per_class, self.test_per_class, self.n_videos, self.video_frames) < 1:
            raise ValueError("corpus counts must be positive")


@dataclass
class Corpus:
    train_images: np.ndarray
    train_labels: np.ndarray
    test_images: np.ndarray
    test_labels: np.ndarray
    videos: np.ndarray  # (n_videos, video_frames, H, W)
    video_classes: np.ndarray  # generating class, never used for training
    n_classes: int


def _sprite_mask(cls: int, size: int, angle: float) -> np.ndarray:
    """Anti-aliased class sprite on a (size, size) canvas, rotated by ``angle`` radians."""
    r = (size - 1) / 2
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) - r
    c, s = math.cos(-angle), math.sin(-angle)
    x = c * xx - s * yy
    y = s * xx + c * yy
    motion = MOTIONS[cls]
    if motion in ("right", "left", "up", "down"):
        # arrow pointing along +x: triangular head plus shaft
        head = (x >= 0) & (np.abs(y) <= (r - x) * 0.9)
        shaft = (x < 0) & (x >= -r) & (np.abs(y) <= r * 0.28)
        m = head | shaft
    elif motion == "rotate":
        # two-bladed propeller
        m = ((np.abs(y) <= r * 0.25) & (np.abs(x) <= r)) | (np.hypot(x, y) <= r * 0.35)
    else:
        # ring with a notch
        rho = np.hypot(x, y)
        m = (rho <= r) & (rho >= r * 0.55) & ~((x > 0) & (np.abs(y) < r * 0.25))
    return ndimage.gaussian_filter(m.astype(np.float64), 0.5)


_DIRECTION = {"right": (1.0, 0.0), "left": (-1.0, 0.0), "up": (0.0, -1.0), "down": (0.0, 1.0)}


def _pose(cls: int, t: float, base_angle: float, phase: float, speed: float):
    """(dx, dy, angle) offset of the sprite at source frame t."""
    motion = MOTIONS[cls]
    if motion in _DIRECTION:
        ux, uy = _DIRECTION[motion]
        angle = math.atan2(uy, ux)
        return ux * speed * t, uy * speed * t, angle
    if motion == "rotate":
        return 0.0, 0.0, base_angle + 0.12 * t
    amp = 3.0
    return amp * math.sin(phase + 2 * math.pi * t / 16.0), 0.0, base_angle


def _paste(canvas: np.ndarray, sprite: np.ndarray, cx: float, cy: float, value: float) -> None:
    """Blend a sprite at fractional centre (cx, cy) on a periodic canvas."""
    h, w = canvas.shape
    size = sprite.shape[0]
    fx, fy = cx - math.floor(cx), cy - math.floor(cy)
    shifted = ndimage.shift(sprite, (fy, fx), order=1, mode="constant")
    ys = (np.arange(size) + int(math.floor(cy)) - size // 2) % h
    xs = (np.arange(size) + int(math.floor(cx)) - size // 2) % w
    region = canvas[np.ix_(ys, xs)]
    canvas[np.ix_(ys, xs)] = region * (1 - shifted) + value * shifted


def _background(rng: np.random.Generator, size: int, noise: float) -> np.ndarray:
    tex = ndimage.gaussian_filter(rng.random((size, size)), 1.2, mode="wrap")
    tex = (tex - tex.mean()) / (tex.std() + 1e-12)
    return 0.5 + noise * 0.5 * tex


def _quantize(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0) / 255.0


def _render_sequence(cfg: CorpusConfig, cls: int, n_frames: int, rng: np.random.Generator) -> np.ndarray:
    size = cfg.frame_size
    bg = _background(rng, size, cfg.background_noise)
    cx, cy = size / 2 + rng.uniform(-cfg.jitter, cfg.jitter, size=2)
    base_angle = rng.uniform(0, 2 * math.pi)
    phase = rng.uniform(0, 2 * math.pi)
    value = float(np.clip(0.5 + cfg.contrast * rng.uniform(0.7, 1.0), 0, 1))
    sprite_size = cfg.sprite_size
    frames = np.empty((n_frames, size, size))
    for t in range(n_frames):
        # a static corpus freezes every video at its first pose
        dx, dy, angle = _pose(cls, 0 if cfg.static else t, base_angle, phase, cfg.speed)
        canvas = bg.copy()
        _paste(canvas, _sprite_mask(cls, sprite_size, angle), cx + dx, cy + dy, value)
        canvas += rng.normal(0.0, cfg.frame_noise, size=canvas.shape)
        frames[t] = _quantize(canvas)
    return frames


def generate_synthetic_corpus(cfg: CorpusConfig, seed: int | None = None) -> Corpus:
    """Sprites whose shape/orientation is tied to the class motion pattern.

    Labelled and test images are first frames of fresh sequences; unlabelled
    videos cycle through the classes.  Every pixel is 8-bit quantised so the
    corpus survives a round trip through PGM files exactly.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    C = cfg.n_classes

    def images(per_class):
        imgs, labels = [], []
        for i in range(per_class * C):
            cls = i % C
            imgs.append(_render_sequence(cfg, cls, 1, rng)[0])
            labels.append(cls)
        return np.stack(imgs), np.array(labels, dtype=np.int64)

    train_x, train_y = images(cfg.train_per_class)
    test_x, test_y = images(cfg.test_per_class)
    vids, vcls = [], []
    for v in range(cfg.n_videos):
        cls = v % C
        vids.append(_render_sequence(cfg, cls, cfg.video_frames, rng))
        vcls.append(cls)
    return Corpus(train_x, train_y, test_x, test_y, np.stack(vids), np.array(vcls), C)


# ---------------------------------------------------------------- on-disk layout


def write_pgm(path: str | Path, img: np.ndarray) -> None:
    arr = np.round(np.clip(img, 0, 1) * 255).astype(np.uint8)
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(arr.tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PGM is supported")
    pixels = np.frombuffer(data[pos + 1 : pos + 1 + w * h], dtype=np.uint8)
    if pixels.size != w * h:
        raise ValueError(f"{path}: truncated pixel data")
    return pixels.reshape(h, w).astype(np.float64) / 255.0


@dataclass
class ManifestRow:
    kind: str  # "image" | "video"
    path: str
    label: int | None
    split: str  # "train" | "test" | "unlabeled"


def write_dataset(corpus: Corpus, out_dir: str | Path) -> list[ManifestRow]:
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "videos").mkdir(parents=True, exist_ok=True)
    rows: list[ManifestRow] = []
    n = 0
    for split, xs, ys in (("train", corpus.train_images, corpus.train_labels), ("test", corpus.test_images, corpus.test_labels)):
        for img, lab in zip(xs, ys):
            rel = f"images/{n:05d}.pgm"
            write_pgm(out / rel, img)
            rows.append(ManifestRow("image", rel, int(lab), split))
            n += 1
    for vid, frames in enumerate(corpus.videos):
        vdir = out / "videos" / f"{vid:05d}"
        vdir.mkdir(exist_ok=True)
        for t, frame in enumerate(frames, 1):
            write_pgm(vdir / f"frame_{t:04d}.pgm", frame)
        rows.append(ManifestRow("video", f"videos/{vid:05d}", None, "unlabeled"))
    with open(out / "manifest.tsv", "w") as fh:
        for r in rows:
            fh.write(f"{r.kind}\t{r.path}\t{'-' if r.label is None else r.label}\t{r.split}\n")
    return rows


def read_manifest(path: str | Path) -> list[ManifestRow]:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 4 or parts[0] not in ("image", "video"):
                raise ValueError(f"{path}:{lineno}: malformed manifest row")
            label = None if parts[2] == "-" else int(parts[2])
            rows.append(ManifestRow(parts[0], parts[1], label, parts[3]))
    return rows


def load_dataset(root: str | Path) -> Corpus:
    root = Path(root)
    rows = read_manifest(root / "manifest.tsv")
    split = {"train": ([], []), "test": ([], [])}
    videos = []
    for r in rows:
        if r.kind == "image":
            if r.label is None or r.split not in split:
                raise ValueError(f"image {r.path} needs a label and a train/test split")
            split[r.split][0].append(read_pgm(root / r.path))
            split[r.split][1].append(r.label)
        else:
            frames = sorted((root / r.path).glob("frame_*.pgm"))
            if not frames:
                raise FileNotFoundError(f"no frames under {root / r.path}")
            videos.append(np.stack([read_pgm(f) for f in frames]))
    labels = split["train"][1] + split["test"][1]
    n_classes = max(labels) + 1 if labels else 1

    def stack(xs):
        return np.stack(xs) if xs else np.zeros((0, 1, 1))

    return Corpus(
        stack(split["train"][0]),
        np.array(split["train"][1], dtype=np.int64),
        stack(split["test"][0]),
        np.array(split["test"][1], dtype=np.int64),
        np.stack(videos) if videos else np.zeros((0, 1, 1, 1)),
        np.full(len(videos), -1),
        n_classes,
    )

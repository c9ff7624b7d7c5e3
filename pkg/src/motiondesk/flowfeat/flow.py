"""Coarse-to-fine Horn-Schunck optical flow on grayscale frames."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

# Horn-Schunck neighbourhood average (weights sum to 1, centre excluded)
_HS_KERNEL = np.array(
    [[1 / 12, 1 / 6, 1 / 12], [1 / 6, 0.0, 1 / 6], [1 / 12, 1 / 6, 1 / 12]]
)


@dataclass
class FlowField:
    dx: np.ndarray
    dy: np.ndarray

    def __post_init__(self):
        if self.dx.shape != self.dy.shape or self.dx.ndim != 2:
            raise ValueError("dx and dy must be 2-D arrays of equal shape")
        if not (np.isfinite(self.dx).all() and np.isfinite(self.dy).all()):
            raise ValueError("flow contains non-finite displacements")

    @property
    def height(self) -> int:
        return self.dx.shape[0]

    @property
    def width(self) -> int:
        return self.dx.shape[1]

    def entries(self) -> np.ndarray:
        """(H*W, 2) array of (dx, dy) in row-major pixel order."""
        return np.stack([self.dx.ravel(), self.dy.ravel()], axis=1)

    def magnitudes(self) -> np.ndarray:
        return np.hypot(self.dx, self.dy).ravel()


def _pyramid(img: np.ndarray, levels: int) -> list[np.ndarray]:
    pyr = [img]
    for _ in range(levels - 1):
        pyr.append(ndimage.gaussian_filter(pyr[-1], sigma=1.0, mode="nearest")[::2, ::2])
    return pyr


def _upsample(flow: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    zoom = (shape[0] / flow.shape[0], shape[1] / flow.shape[1])
    up = ndimage.zoom(flow, zoom, order=1, mode="nearest", grid_mode=True)
    return up[: shape[0], : shape[1]] * 2.0


def _warp(img: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    rows, cols = np.mgrid[0 : img.shape[0], 0 : img.shape[1]].astype(np.float64)
    return ndimage.map_coordinates(img, [rows + v, cols + u], order=1, mode="nearest")


def _refine(a, b, u0, v0, alpha2: float, iterations: int):
    bw = _warp(b, u0, v0)
    gya, gxa = np.gradient(a)
    gyb, gxb = np.gradient(bw)
    ix = 0.5 * (gxa + gxb)
    iy = 0.5 * (gya + gyb)
    it = bw - a
    denom = alpha2 + ix * ix + iy * iy
    u, v = u0.copy(), v0.copy()
    for _ in range(iterations):
        ua = ndimage.convolve(u, _HS_KERNEL, mode="nearest")
        va = ndimage.convolve(v, _HS_KERNEL, mode="nearest")
        # linearised brightness constancy around (u0, v0)
        r = (ix * (ua - u0) + iy * (va - v0) + it) / denom
        u = ua - ix * r
        v = va - iy * r
    return u, v


def compute_flow(
    frame_a: np.ndarray,
    frame_b: np.ndarray,
    levels: int = 3,
    smoothness_weight: float = 0.1,
    iterations: int = 50,
) -> FlowField:
    """Displacement (dx, dy) per pixel such that frame_b(p + d) ~ frame_a(p)."""
    a = np.asarray(frame_a, dtype=np.float64)
    b = np.asarray(frame_b, dtype=np.float64)
    if a.ndim != 2 or a.shape != b.shape:
        raise ValueError(f"frames must be 2-D with equal shape, got {a.shape} and {b.shape}")
    if min(a.shape) < 16:
        raise ValueError(f"frames must be at least 16x16, got {a.shape}")
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if min(a.shape) < 2**levels:
        raise ValueError(f"frame size {a.shape} is smaller than 2**levels={2 ** levels}")

    pa, pb = _pyramid(a, levels), _pyramid(b, levels)
    u = np.zeros(pa[-1].shape)
    v = np.zeros(pa[-1].shape)
    for lvl in range(levels - 1, -1, -1):
        shape = pa[lvl].shape
        if u.shape != shape:
            u, v = _upsample(u, shape), _upsample(v, shape)
        u, v = _refine(pa[lvl], pb[lvl], u, v, smoothness_weight, iterations)
    return FlowField(u, v)

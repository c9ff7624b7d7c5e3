from __future__ import annotations

import numpy as np


def otsu_threshold(magnitudes, n_bins: int = 256) -> float:
    """Histogram Otsu threshold over [0, max(magnitudes)].

    Candidates are the left bin edges ``i * max / n_bins`` for i in [0, n_bins);
    class 0 holds the values strictly below the candidate.  Class means use the
    exact per-bin sums rather than bin centres.  Ties go to the lowest edge and a
    histogram with no positive between-class variance yields 0.0.
    """
    x = np.asarray(magnitudes, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("otsu_threshold needs at least one magnitude")
    if not np.isfinite(x).all() or (x < 0).any():
        raise ValueError("magnitudes must be finite and non-negative")
    top = float(x.max())
    if top <= 0.0:
        return 0.0
    width = top / n_bins
    bins = np.minimum((x / width).astype(np.int64), n_bins - 1)
    counts = np.bincount(bins, minlength=n_bins).astype(np.float64)
    sums = np.bincount(bins, weights=x, minlength=n_bins)

    n0 = np.concatenate([[0.0], np.cumsum(counts)[:-1]])
    s0 = np.concatenate([[0.0], np.cumsum(sums)[:-1]])
    n1 = x.size - n0
    s1 = sums.sum() - s0
    with np.errstate(invalid="ignore", divide="ignore"):
        mu0 = np.where(n0 > 0, s0 / n0, 0.0)
        mu1 = np.where(n1 > 0, s1 / n1, 0.0)
    between = np.where((n0 > 0) & (n1 > 0), n0 * n1 * (mu0 - mu1) ** 2, 0.0) / (x.size * x.size)
    best = int(np.argmax(between))
    if between[best] <= 0.0:
        return 0.0
    return best * width

"""Sample-quality metrics on raw coordinates."""
from __future__ import annotations

import numpy as np

__all__ = ["frechet_2d", "mode_coverage"]

_JITTER = 1e-9


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((m + m.T) / 2)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def frechet_2d(real, fake) -> float:
    """Frechet distance between Gaussian fits of two sample clouds.

    ``tr(S1 S2)^(1/2)`` is computed as ``tr(A S2 A)^(1/2)`` with ``A = S1^(1/2)``,
    which keeps every square root on a symmetric matrix.
    """
    a = np.asarray(real, dtype=np.float64)
    b = np.asarray(fake, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if b.ndim == 1:
        b = b.reshape(-1, 1)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    k = a.shape[1]
    if min(a.shape[0], b.shape[0]) < k + 1:
        raise ValueError(f"need at least {k + 1} samples per set")
    mu = a.mean(axis=0) - b.mean(axis=0)
    eye = _JITTER * np.eye(k)
    s1 = np.atleast_2d(np.cov(a, rowvar=False)) + eye
    s2 = np.atleast_2d(np.cov(b, rowvar=False)) + eye
    root = _psd_sqrt(s1)
    cross = np.sqrt(np.clip(np.linalg.eigvalsh(root @ s2 @ root), 0.0, None)).sum()
    value = float(mu @ mu + np.trace(s1) + np.trace(s2) - 2.0 * cross)
    return max(value, 0.0)


def mode_coverage(fake, centers, sigma: float, threshold: float = 0.01):
    """Return (covered count, nearest-center histogram).

    A center is covered when at least ``threshold`` of the samples lie
    within ``3 sigma`` of it.
    """
    x = np.asarray(fake, dtype=np.float64)
    c = np.asarray(centers, dtype=np.float64)
    if c.ndim == 1:
        c = c.reshape(-1, 1)
    if c.shape[0] == 0:
        raise ValueError("centers must be nonempty")
    if x.ndim == 1:
        x = x.reshape(-1, c.shape[1])
    if x.shape[0] == 0:
        return 0, np.zeros(c.shape[0], dtype=np.int64)
    dist = np.sqrt(((x[:, None, :] - c[None, :, :]) ** 2).sum(axis=-1))
    hist = np.bincount(dist.argmin(axis=1), minlength=c.shape[0])
    near = (dist <= 3.0 * sigma).mean(axis=0)
    return int((near >= threshold).sum()), hist

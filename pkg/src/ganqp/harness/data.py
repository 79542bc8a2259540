"""Toy distributions for desk-scale experiments."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "KINDS",
    "ToyDistribution",
    "dirac",
    "dirac_pair",
    "gaussian",
    "ring8",
    "grid25",
    "discrete",
    "sample",
]

KINDS = ("dirac", "gaussian", "ring8", "grid25", "discrete")


def _vec(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=np.float64)).ravel()


@dataclass(frozen=True, eq=False)
class ToyDistribution:
    """A samplable law on R^k.

    ``centers`` holds the Dirac point, the mixture centers or the discrete
    support; ``sigma`` is the per-component noise scale (0 for atoms).
    """
    kind: str
    centers: np.ndarray
    probs: np.ndarray
    sigma: float = 0.0
    cov: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown distribution kind {self.kind!r}; expected one of {KINDS}")
        if self.centers.ndim != 2 or self.centers.shape[0] != self.probs.shape[0]:
            raise ValueError("centers must be (m, k) with one probability per center")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")

    def __eq__(self, other) -> bool:
        if not isinstance(other, ToyDistribution):
            return NotImplemented
        same_cov = (self.cov is None) == (other.cov is None) and (
            self.cov is None or np.array_equal(self.cov, other.cov))
        return (self.kind == other.kind and self.sigma == other.sigma and same_cov
                and np.array_equal(self.centers, other.centers) and np.array_equal(self.probs, other.probs))

    __hash__ = None

    @property
    def dimension(self) -> int:
        return self.centers.shape[1]

    @property
    def is_discrete(self) -> bool:
        return self.kind in ("dirac", "discrete")

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return sample(self, n, rng)


def dirac(point) -> ToyDistribution:
    p = _vec(point)
    return ToyDistribution("dirac", p.reshape(1, -1), np.ones(1))


def dirac_pair(alpha, beta) -> tuple[ToyDistribution, ToyDistribution]:
    """The point masses (delta_alpha, delta_beta)."""
    p, q = dirac(alpha), dirac(beta)
    if p.dimension != q.dimension:
        raise ValueError("alpha and beta differ in dimension")
    return p, q


def gaussian(mean, cov=None) -> ToyDistribution:
    mu = _vec(mean)
    c = np.eye(mu.size) if cov is None else np.asarray(cov, dtype=np.float64).reshape(mu.size, mu.size)
    if not np.allclose(c, c.T):
        raise ValueError("covariance must be symmetric")
    if np.linalg.eigvalsh(c).min() < 0:
        raise ValueError("covariance must be positive semidefinite")
    return ToyDistribution("gaussian", mu.reshape(1, -1), np.ones(1), cov=c)


def ring8(radius: float = 2.0, sigma: float = 0.02) -> ToyDistribution:
    if radius <= 0:
        raise ValueError("radius must be positive")
    angles = 2.0 * np.pi * np.arange(8) / 8
    centers = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return ToyDistribution("ring8", centers, np.full(8, 1 / 8), sigma)


def grid25(spacing: float = 1.0, sigma: float = 0.01) -> ToyDistribution:
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    ticks = spacing * np.arange(-2, 3)
    centers = np.array([(a, b) for a in ticks for b in ticks], dtype=np.float64)
    return ToyDistribution("grid25", centers, np.full(25, 1 / 25), sigma)


def discrete(points, probs) -> ToyDistribution:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    pr = _vec(probs)
    if pr.shape[0] != pts.shape[0]:
        raise ValueError("need one probability per support point")
    if np.any(pr < 0) or abs(pr.sum() - 1.0) > 1e-9:
        raise ValueError("probabilities must be nonnegative and sum to 1")
    return ToyDistribution("discrete", pts, pr / pr.sum())


def sample(dist: ToyDistribution, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` points, shape (n, k)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not isinstance(dist, ToyDistribution):
        raise TypeError(f"cannot sample from {type(dist).__name__}")
    k = dist.dimension
    if dist.kind == "dirac":
        return np.repeat(dist.centers, n, axis=0)
    if dist.kind == "gaussian":
        return rng.multivariate_normal(dist.centers[0], dist.cov, size=n, method="eigh")
    idx = rng.choice(dist.centers.shape[0], size=n, p=dist.probs)
    out = dist.centers[idx]
    if dist.sigma > 0:
        out = out + dist.sigma * rng.standard_normal((n, k))
    return out

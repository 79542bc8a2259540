"""Critic-only divergence estimation between two fixed distributions."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import autograd as ag
from .. import objectives as obj
from .. import oracle
from ..nets import MLP, MlpSpec
from ..optim import Adam
from ..rng import stream
from . import data as toy

__all__ = ["ESTIMATORS", "EstimateConfig", "Estimate", "evaluate_neural_divergence", "shared_support",
           "exact_value"]

ESTIMATORS = ("qp", "sgan", "lsgan", "wgan_sn", "wgan_gp", "sgan_qp")


@dataclass(frozen=True)
class EstimateConfig:
    lam: float = 1.0
    distance: str = "L1"
    critic_form: str = "single"
    hidden: tuple = (128, 128)
    hidden_activation: str = "relu"
    init_scale: float = 0.05
    lr: float = 1e-3
    batch_size: int = 256
    max_steps: int = 5000
    window: int = 200
    tol: float = 1e-4
    eval_pairs: int = 10000
    gp_weight: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if self.distance not in obj.DISTANCES:
            raise ValueError(f"distance must be one of {obj.DISTANCES}")
        if self.critic_form not in ("single", "pairwise"):
            raise ValueError("critic_form must be 'single' or 'pairwise'")
        for name in ("batch_size", "max_steps", "window", "eval_pairs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not (self.lr > 0 and self.tol > 0 and self.init_scale > 0):
            raise ValueError("lr, tol and init_scale must be positive")


@dataclass
class Estimate:
    value: float
    converged: bool
    steps: int
    trace: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))

    def __float__(self) -> float:
        return self.value


def _losses(kind: str, critic, real, fake, cfg: EstimateConfig, rng, training: bool) -> tuple:
    """(loss to minimize, reported divergence value)."""
    if kind == "qp":
        pair = obj.gan_qp_losses(critic, real, fake, obj.QpConfig(cfg.lam, cfg.distance, cfg.critic_form))
        return pair.critic_loss, pair.critic_objective
    if kind == "sgan":
        pair = obj.sgan_losses(critic, real, fake)
        return pair.critic_loss, pair.critic_objective
    if kind == "lsgan":
        # 2 - loss is the triangular discrimination at the optimum, 0 when p = q
        pair = obj.lsgan_losses(critic, real, fake)
        return pair.critic_loss, 2.0 - float(pair.critic_loss.data)
    if kind == "wgan_sn":
        pair = obj.wgan_losses(critic, real, fake, "spectral_norm")
        return pair.critic_loss, pair.diagnostics["wasserstein"]
    if kind == "wgan_gp":
        pair = obj.wgan_losses(critic, real, fake, "gradient_penalty", cfg.gp_weight, rng=rng,
                               with_penalty=training)
        return pair.critic_loss, pair.diagnostics["wasserstein"]
    pair = obj.sgan_qp_losses(critic, real, fake, cfg.lam, cfg.distance)
    return pair.critic_loss, pair.critic_objective


def evaluate_neural_divergence(kind: str, p: toy.ToyDistribution, q: toy.ToyDistribution,
                               config: EstimateConfig | None = None) -> Estimate:
    """Train a critic alone to maximize the ``kind`` objective between fixed p and q.

    Training stops once the mean objective of consecutive ``window``-step
    blocks changes by less than ``tol``; the value is then the objective on
    a fresh batch of ``eval_pairs`` pairs.  ``converged`` is False when the
    step budget ran out first.
    """
    cfg = config or EstimateConfig()
    if kind not in ESTIMATORS:
        raise ValueError(f"objective must be one of {ESTIMATORS}, got {kind!r}")
    if p.dimension != q.dimension:
        raise ValueError(f"p and q live in different dimensions ({p.dimension} vs {q.dimension})")
    width = p.dimension * (2 if cfg.critic_form == "pairwise" and kind == "qp" else 1)
    spec = MlpSpec((width, *cfg.hidden, 1), hidden_activation=cfg.hidden_activation,
                   spectral_norm=kind == "wgan_sn", init_scale=cfg.init_scale)
    critic = MLP(spec, cfg.seed, "init.critic")
    opt = Adam(critic.parameters, lr=cfg.lr)
    rng_p, rng_q = stream(cfg.seed, "data.p"), stream(cfg.seed, "data.q")
    rng_pen = stream(cfg.seed, "penalty")

    trace = []
    converged = False
    previous = None
    for step in range(1, cfg.max_steps + 1):
        real = toy.sample(p, cfg.batch_size, rng_p)
        fake = toy.sample(q, cfg.batch_size, rng_q)
        if spec.spectral_norm:
            critic.power_iterate()
        loss, _ = _losses(kind, critic, real, fake, cfg, rng_pen, training=True)
        opt.step(ag.grad(loss, critic.parameters))
        trace.append(-float(loss.data))
        if step % cfg.window == 0:
            block = float(np.mean(trace[-cfg.window:]))
            if previous is not None and abs(block - previous) < cfg.tol:
                converged = True
                break
            previous = block

    real = toy.sample(p, cfg.eval_pairs, stream(cfg.seed, "eval.p"))
    fake = toy.sample(q, cfg.eval_pairs, stream(cfg.seed, "eval.q"))
    _, value = _losses(kind, critic, real, fake, cfg, rng_pen, training=False)
    return Estimate(float(value), converged, len(trace), np.asarray(trace))


def shared_support(p: toy.ToyDistribution, q: toy.ToyDistribution):
    """Probability vectors of two atomic laws over the union of their atoms."""
    if not (p.is_discrete and q.is_discrete):
        raise ValueError("both distributions must be atomic")
    points = np.unique(np.concatenate([p.centers, q.centers]), axis=0)

    def probs(dist):
        out = np.zeros(points.shape[0])
        for c, m in zip(dist.centers, dist.probs):
            out[np.flatnonzero((points == c).all(axis=1))[0]] += m
        return out

    return probs(p), probs(q), points


def exact_value(kind: str, p: toy.ToyDistribution, q: toy.ToyDistribution,
                config: EstimateConfig | None = None) -> float | None:
    """Oracle value of what ``evaluate_neural_divergence`` estimates, or None
    when either law is not atomic."""
    cfg = config or EstimateConfig()
    if not (p.is_discrete and q.is_discrete):
        return None
    pv, qv, points = shared_support(p, q)
    if kind == "qp":
        return oracle.qp_div_exact(pv, qv, oracle.distance_table(points, cfg.distance), cfg.lam)
    if kind == "sgan":
        return oracle.js_exact(pv, qv)
    if kind == "lsgan":
        return oracle.triangular_exact(pv, qv)
    if kind in ("wgan_sn", "wgan_gp"):
        # both critics are constrained in the Euclidean norm
        return oracle.wasserstein_exact(pv, qv, oracle.distance_table(points, "L2"))
    if kind == "sgan_qp":
        return oracle.maximize_tabular("sgan_qp", pv, qv, oracle.distance_table(points, cfg.distance), cfg.lam)[0]
    raise ValueError(f"unknown objective {kind!r}")

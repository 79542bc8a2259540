"""Adversarial objectives as differentiable loss constructors.

Every constructor returns a :class:`LossPair`.  ``critic_loss`` is the
negated critic objective (optimizers minimize); ``generator_loss`` is what
the generator minimizes.  Real and fake batches are paired index-wise: the
i-th real row and the i-th fake row form one draw of (x_r, x_f) ~ p x q.

Critics are callables mapping a (batch, k) tensor to (batch, 1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import Tensor, stop_gradient

__all__ = [
    "DISTANCES",
    "EPS_D",
    "SIGMA_CLAMP",
    "LSGAN_TARGETS",
    "LossPair",
    "QpConfig",
    "pair_distance",
    "default_lambda",
    "default_guides",
    "qp_objective",
    "sgan_losses",
    "lsgan_losses",
    "wgan_losses",
    "gradient_penalty",
    "gan_qp_losses",
    "bigan_qp_losses",
    "sgan_qp_losses",
]

DISTANCES = ("L1", "L2")
EPS_D = 1e-8
SIGMA_CLAMP = 1e-12
LOG2 = math.log(2.0)
# (fake target, real target, generator target)
LSGAN_TARGETS = (-1.0, 1.0, 1.0)


@dataclass
class LossPair:
    critic_loss: Tensor
    generator_loss: Tensor
    diagnostics: dict = field(default_factory=dict)

    @property
    def critic_objective(self) -> float:
        return -float(self.critic_loss.data)


@dataclass(frozen=True)
class QpConfig:
    lam: float
    distance: str = "L1"
    critic_form: str = "single"
    eps_d: float = EPS_D

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.distance not in DISTANCES:
            raise ValueError(f"distance must be one of {DISTANCES}")
        if self.critic_form not in ("single", "pairwise"):
            raise ValueError("critic_form must be 'single' or 'pairwise'")
        if self.eps_d < 0:
            raise ValueError("eps_d must be >= 0")


def pair_distance(a, b, kind: str = "L1") -> np.ndarray:
    """Row-wise distance between two (n, k) arrays; a constant, never differentiated."""
    a = a.data if isinstance(a, Tensor) else np.asarray(a, dtype=np.float64)
    b = b.data if isinstance(b, Tensor) else np.asarray(b, dtype=np.float64)
    diff = a - b
    if kind == "L1":
        return np.abs(diff).sum(axis=-1)
    if kind == "L2":
        return np.sqrt((diff * diff).sum(axis=-1))
    raise ValueError(f"unknown distance {kind!r}")


def default_lambda(dim: int, distance: str = "L1") -> float:
    """10/n for L1 and 10/sqrt(n) for L2, n the total input dimension."""
    if distance == "L1":
        return 10.0 / dim
    if distance == "L2":
        return 10.0 / math.sqrt(dim)
    raise ValueError(f"unknown distance {distance!r}")


def default_guides(dim_z: int, dim_x: int) -> tuple[float, float]:
    return 4.0 / dim_z, 6.0 / dim_x


def _check_pairs(real: Tensor, fake: Tensor) -> None:
    if real.shape[0] != fake.shape[0]:
        raise ag.ShapeError(f"batch size mismatch: {real.shape[0]} real vs {fake.shape[0]} fake")
    if real.shape[1:] != fake.shape[1:]:
        raise ag.ShapeError(f"dimension mismatch: {real.shape} vs {fake.shape}")


def _critic_both(critic, real: Tensor, fake: Tensor) -> tuple[Tensor, Tensor]:
    # one pass over the stacked batch
    n = real.shape[0]
    out = ag.reshape(critic(ag.concatenate([real, fake], axis=0)), (2 * n,))
    return ag.slice_axis(out, 0, 0, n), ag.slice_axis(out, 0, n, 2 * n)


def _log_sigmoid(t: Tensor) -> Tensor:
    return ag.log(ag.clip(ag.sigmoid(t), SIGMA_CLAMP, 1.0 - SIGMA_CLAMP))


def _log_one_minus_sigmoid(t: Tensor) -> Tensor:
    return ag.log(ag.clip(1.0 - ag.sigmoid(t), SIGMA_CLAMP, 1.0 - SIGMA_CLAMP))


def _diagnostics(delta_t: Tensor, d: np.ndarray, lam: float, eps_d: float = EPS_D, **extra) -> dict:
    ratio = np.abs(delta_t.data) / (lam * (d + eps_d))
    out = {
        "delta_t_mean": float(np.mean(delta_t.data)),
        "lipschitz_ratio_mean": float(np.mean(ratio)),
    }
    out.update(extra)
    return out


def qp_objective(delta_t, distances, lam: float, eps_d: float = EPS_D) -> Tensor:
    """Mean over pairs of dT - dT^2 / (2 lam (d + eps_d))."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    dt = ag.as_tensor(delta_t)
    denom = np.asarray(distances.data if isinstance(distances, Tensor) else distances, dtype=np.float64) + eps_d
    if np.any(denom <= 0):
        raise ValueError("distance plus guard must be positive")
    denom = np.broadcast_to(denom, dt.shape)
    return ag.mean(dt - ag.square(dt) / (2.0 * lam * denom))


def sgan_losses(critic, real, fake, generator_form: str = "non_saturating") -> LossPair:
    """JS dual: critic maximizes 1/2 E_p log s(T) + 1/2 E_q log(1 - s(T)) + log 2.

    ``generator_form="non_saturating"`` gives the generator -E_q log s(T(fake));
    ``"minimax"`` has it minimize the critic objective itself.
    """
    real, fake = ag.as_tensor(real), ag.as_tensor(fake)
    _check_pairs(real, fake)
    t_real, t_fake = _critic_both(critic, real, fake)
    fake_term = 0.5 * ag.mean(_log_one_minus_sigmoid(t_fake))
    objective = 0.5 * ag.mean(_log_sigmoid(t_real)) + fake_term + LOG2
    if generator_form == "non_saturating":
        gen = -ag.mean(_log_sigmoid(t_fake))
    elif generator_form == "minimax":
        gen = fake_term
    else:
        raise ValueError(f"unknown generator form {generator_form!r}")
    d = pair_distance(real, fake, "L2")
    return LossPair(-objective, gen, _diagnostics(t_real - t_fake, d, 1.0, objective=float(objective.data)))


def lsgan_losses(critic, real, fake, targets=LSGAN_TARGETS) -> LossPair:
    a, b, c = targets
    real, fake = ag.as_tensor(real), ag.as_tensor(fake)
    _check_pairs(real, fake)
    t_real, t_fake = _critic_both(critic, real, fake)
    loss = ag.mean(ag.square(t_real - b)) + ag.mean(ag.square(t_fake - a))
    gen = ag.mean(ag.square(t_fake - c))
    d = pair_distance(real, fake, "L2")
    return LossPair(loss, gen, _diagnostics(t_real - t_fake, d, 1.0, objective=-float(loss.data)))


def gradient_penalty(critic, real: Tensor, fake: Tensor, rng: np.random.Generator) -> Tensor:
    """E (||grad_x T(x_hat)||_2 - 1)^2 at per-sample random interpolates."""
    u = rng.uniform(size=(real.shape[0], 1))
    x_hat = Tensor(u * real.data + (1.0 - u) * fake.data, requires_grad=True)
    g = ag.input_gradient(critic(x_hat), x_hat)
    norms = ag.l2_norm(g, axis=1, eps=1e-12)
    return ag.mean(ag.square(norms - 1.0))


def wgan_losses(critic, real, fake, enforcement: str = "spectral_norm", gp_weight: float = 10.0,
                rng: np.random.Generator | None = None, with_penalty: bool = True) -> LossPair:
    """Wasserstein dual E_p T - E_q T.

    ``enforcement`` is ``"spectral_norm"`` (the critic must already be
    spectrally normalized; nothing is added here) or ``"gradient_penalty"``.
    ``with_penalty=False`` skips the penalty graph when only the generator
    loss is wanted.
    """
    real, fake = ag.as_tensor(real), ag.as_tensor(fake)
    _check_pairs(real, fake)
    t_real, t_fake = _critic_both(critic, real, fake)
    objective = ag.mean(t_real) - ag.mean(t_fake)
    extra = {"wasserstein": float(objective.data)}
    if enforcement == "gradient_penalty" and with_penalty:
        if rng is None:
            raise ValueError("gradient penalty needs an rng for the interpolation weights")
        penalty = gradient_penalty(critic, real.detach(), fake.detach(), rng)
        extra["gradient_penalty"] = float(penalty.data)
        objective = objective - gp_weight * penalty
    elif enforcement not in ("spectral_norm", "gradient_penalty"):
        raise ValueError(f"unknown Lipschitz enforcement {enforcement!r}")
    d = pair_distance(real, fake, "L2")
    extra["objective"] = float(objective.data)
    return LossPair(-objective, -ag.mean(t_fake), _diagnostics(t_real - t_fake, d, 1.0, **extra))


def _delta_t(critic, real: Tensor, fake: Tensor, form: str) -> Tensor:
    if form == "single":
        t_real, t_fake = _critic_both(critic, real, fake)
        return t_real - t_fake
    forward = ag.concatenate([real, fake], axis=1)
    backward = ag.concatenate([fake, real], axis=1)
    t_fwd, t_bwd = _critic_both(critic, forward, backward)
    return t_fwd - t_bwd


def gan_qp_losses(critic, real, fake, config: QpConfig) -> LossPair:
    """Critic maximizes the quadratic-potential objective; generator minimizes mean dT.

    The generator loss deliberately carries neither the quadratic term nor
    the distance.
    """
    real, fake = ag.as_tensor(real), ag.as_tensor(fake)
    _check_pairs(real, fake)
    dt = _delta_t(critic, real, fake, config.critic_form)
    d = pair_distance(real, fake, config.distance)
    objective = qp_objective(dt, d, config.lam, config.eps_d)
    return LossPair(-objective, ag.mean(dt),
                    _diagnostics(dt, d, config.lam, config.eps_d, objective=float(objective.data)))


def bigan_qp_losses(critic, generator, encoder, real, noise, config: QpConfig,
                    beta1_guide: float | None = None, beta2_guide: float | None = None,
                    stop_guides: bool = True) -> LossPair:
    """GAN-QP on joint pairs (x, E(x)) vs (G(z), z) plus reconstruction guides.

    Generator/encoder loss: dT + b1 ||z - E(G_ng(z))||^2 + b2 ||x - G(E_ng(x))||^2,
    where ``_ng`` blocks the gradient at that network's output.  With
    ``stop_guides=False`` the guides are plain E(G(z)) and G(E(x)).
    """
    real, noise = ag.as_tensor(real), ag.as_tensor(noise)
    if real.shape[0] != noise.shape[0]:
        raise ag.ShapeError("real and noise batches differ in size")
    dim_x, dim_z = real.shape[1], noise.shape[1]
    b1_default, b2_default = default_guides(dim_z, dim_x)
    b1 = b1_default if beta1_guide is None else beta1_guide
    b2 = b2_default if beta2_guide is None else beta2_guide

    encoded = encoder(real)
    if encoded.shape[1] != dim_z:
        raise ag.ShapeError(f"encoder outputs {encoded.shape[1]} dims, noise has {dim_z}")
    generated = generator(noise)
    if generated.shape[1] != dim_x:
        raise ag.ShapeError(f"generator outputs {generated.shape[1]} dims, data has {dim_x}")
    joint_real = ag.concatenate([real, encoded], axis=1)
    joint_fake = ag.concatenate([generated, noise], axis=1)
    dt = _delta_t(critic, joint_real, joint_fake, config.critic_form)
    d = pair_distance(joint_real, joint_fake, config.distance)
    objective = qp_objective(dt, d, config.lam, config.eps_d)

    if stop_guides:
        z_rec = encoder(stop_gradient(generated))
        x_rec = generator(stop_gradient(encoded))
    else:
        z_rec = encoder(generated)
        x_rec = generator(encoded)
    rec_z = ag.mean(ag.tsum(ag.square(noise - z_rec), axis=1))
    rec_x = ag.mean(ag.tsum(ag.square(real - x_rec), axis=1))
    gen = ag.mean(dt) + b1 * rec_z + b2 * rec_x
    diag = _diagnostics(dt, d, config.lam, config.eps_d, objective=float(objective.data),
                        recon_z=float(rec_z.data), recon_x=float(rec_x.data))
    return LossPair(-objective, gen, diag)


def sgan_qp_losses(critic, real, fake, lam: float, distance: str = "L1", eps_d: float = EPS_D) -> LossPair:
    """SGAN term f per pair, penalized by f^2 / (2 lam d); generator minimizes E f."""
    real, fake = ag.as_tensor(real), ag.as_tensor(fake)
    _check_pairs(real, fake)
    if not lam > 0:
        raise ValueError("lambda must be positive")
    t_real, t_fake = _critic_both(critic, real, fake)
    f = 0.5 * _log_sigmoid(t_real) + 0.5 * _log_one_minus_sigmoid(t_fake) + LOG2
    d = pair_distance(real, fake, distance)
    objective = qp_objective(f, d, lam, eps_d)
    return LossPair(-objective, ag.mean(f),
                    _diagnostics(t_real - t_fake, d, lam, eps_d, objective=float(objective.data)))

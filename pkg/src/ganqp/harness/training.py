"""Adversarial training loop, run history and critic-only divergence estimation."""
from __future__ import annotations

import csv
import dataclasses
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .. import autograd as ag
from .. import objectives as obj
from ..autograd import NonFiniteError, Tensor
from ..nets import MLP, MlpSpec, PointGenerator
from ..optim import Adam
from ..rng import stream
from . import data as toy
from .metrics import frechet_2d, mode_coverage

__all__ = [
    "OBJECTIVES",
    "HISTORY_HEADER",
    "TrainConfig",
    "HistoryRow",
    "RunHistory",
    "TrainResult",
    "TrainingAborted",
    "build_distribution",
    "train",
    "generator_gradient_norm",
    "write_samples",
]

OBJECTIVES = ("gan_qp", "sgan", "sgan_sn", "lsgan_sn", "wgan_sn", "wgan_gp", "bigan_qp", "sgan_qp")
SPECTRAL = ("sgan_sn", "lsgan_sn", "wgan_sn")
HISTORY_HEADER = ("step", "critic_loss", "gen_loss", "delta_t_mean", "lipschitz_ratio_mean",
                  "frechet2d", "mode_coverage", "wall_seconds")
AUTO = "auto"
LR_SCHEDULES = ("constant", "linear")


class TrainingAborted(RuntimeError):
    """A loss went non-finite; ``step`` is the generator step being computed."""

    def __init__(self, step: int, phase: str, history: "RunHistory", cause: Exception):
        super().__init__(f"non-finite value at generator step {step} ({phase}): {cause}")
        self.step = step
        self.phase = phase
        self.history = history


@dataclass
class TrainConfig:
    objective: str = "gan_qp"
    # data
    data: str = "ring8"
    radius: float = 2.0
    spacing: float = 1.0
    sigma: float | str = AUTO
    mean: tuple = (0.0, 0.0)
    cov: tuple = ()
    alpha: tuple = (0.0,)
    beta: tuple = (3.0,)
    support: tuple = ()
    probs: tuple = ()
    data_dim: int = 2
    # objective
    lam: float | str = AUTO
    distance: str = "L1"
    critic_form: str = "single"
    gp_weight: float = 10.0
    beta1_guide: float | str = AUTO
    beta2_guide: float | str = AUTO
    stop_guides: bool = True
    # schedule and optimizer
    critic_steps: int = 2
    batch_size: int = 256
    total_gen_steps: int = 20000
    lr: float = 2e-4
    lr_schedule: str = "constant"
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    eval_every: int = 1000
    eval_samples: int = 10000
    # networks
    generator: str = AUTO
    critic_hidden: tuple = (128, 128)
    generator_hidden: tuple = (128, 128)
    encoder_hidden: tuple | None = None
    hidden_activation: str = "relu"
    init_scale: float = 0.05
    power_iterations: int = 1
    z_dim: int = 2

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if self.data not in toy.KINDS:
            raise ValueError(f"data must be one of {toy.KINDS}, got {self.data!r}")
        for name in ("critic_steps", "batch_size", "eval_every", "eval_samples", "z_dim",
                     "power_iterations", "data_dim"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.total_gen_steps < 0:
            raise ValueError("total_gen_steps must be >= 0")
        for name in ("radius", "spacing", "lr", "adam_eps", "init_scale"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.gp_weight < 0:
            raise ValueError("gp_weight must be >= 0")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")
        for name in ("lam", "sigma", "beta1_guide", "beta2_guide"):
            v = getattr(self, name)
            if v != AUTO and not (isinstance(v, (int, float)) and v >= 0):
                raise ValueError(f"{name} must be a nonnegative number or 'auto'")
        if self.lam != AUTO and not self.lam > 0:
            raise ValueError("lam must be positive")
        if self.distance not in obj.DISTANCES:
            raise ValueError(f"distance must be one of {obj.DISTANCES}")
        if self.critic_form not in ("single", "pairwise"):
            raise ValueError("critic_form must be 'single' or 'pairwise'")
        if self.generator not in (AUTO, "mlp", "point"):
            raise ValueError("generator must be 'mlp', 'point' or 'auto'")
        if self.lr_schedule not in LR_SCHEDULES:
            raise ValueError(f"lr_schedule must be one of {LR_SCHEDULES}")
        if self.hidden_activation not in ("relu", "tanh"):
            raise ValueError("hidden_activation must be 'relu' or 'tanh'")
        if self.objective == "bigan_qp":
            if not self.encoder_hidden:
                raise ValueError("bigan_qp needs an encoder spec (encoder_hidden)")
            if self.resolved_generator() == "point":
                raise ValueError("bigan_qp needs an MLP generator")
        for name in ("critic_hidden", "generator_hidden", "encoder_hidden"):
            widths = getattr(self, name)
            if widths is not None and any(int(w) < 1 for w in widths):
                raise ValueError(f"{name} widths must be positive")
        self.distribution()

    def resolved_generator(self) -> str:
        if self.generator != AUTO:
            return self.generator
        return "point" if self.data == "dirac" else "mlp"

    def distribution(self) -> toy.ToyDistribution:
        return build_distribution(self)

    @property
    def joint_dim(self) -> int:
        dim = self.distribution().dimension
        return dim + self.z_dim if self.objective == "bigan_qp" else dim

    def resolved(self) -> "TrainConfig":
        """Copy with every 'auto' replaced by its effective value."""
        dist = self.distribution()
        lam = self.lam
        if lam == AUTO:
            lam = obj.default_lambda(self.joint_dim * (2 if self.critic_form == "pairwise" else 1), self.distance)
        sigma = self.sigma
        if sigma == AUTO:
            sigma = dist.sigma
        b1, b2 = obj.default_guides(self.z_dim, dist.dimension)
        return dataclasses.replace(
            self, lam=float(lam), sigma=float(sigma),
            beta1_guide=float(b1 if self.beta1_guide == AUTO else self.beta1_guide),
            beta2_guide=float(b2 if self.beta2_guide == AUTO else self.beta2_guide),
            generator=self.resolved_generator())


def build_distribution(cfg: TrainConfig) -> toy.ToyDistribution:
    kind = cfg.data
    if kind == "ring8":
        return toy.ring8(cfg.radius, 0.02 if cfg.sigma == AUTO else cfg.sigma)
    if kind == "grid25":
        return toy.grid25(cfg.spacing, 0.01 if cfg.sigma == AUTO else cfg.sigma)
    if kind == "dirac":
        return toy.dirac(cfg.alpha)
    if kind == "gaussian":
        dim = len(cfg.mean)
        cov = np.asarray(cfg.cov, dtype=np.float64).reshape(dim, dim) if len(cfg.cov) else None
        return toy.gaussian(cfg.mean, cov)
    pts = np.asarray(cfg.support, dtype=np.float64)
    if pts.size == 0 or pts.size % cfg.data_dim:
        raise ValueError("discrete data needs a support whose length is a multiple of data_dim")
    return toy.discrete(pts.reshape(-1, cfg.data_dim), cfg.probs)


@dataclass
class HistoryRow:
    step: int
    critic_loss: float
    gen_loss: float
    delta_t_mean: float
    lipschitz_ratio_mean: float
    frechet2d: float
    mode_coverage: float
    wall_seconds: float

    def as_tuple(self) -> tuple:
        return dataclasses.astuple(self)


@dataclass
class RunHistory:
    rows: list = field(default_factory=list)
    # per-row norm of the generator-loss gradient at the fake samples; not in the CSV
    gen_grad_norms: list = field(default_factory=list)
    # per-row extras such as the critic objective and reconstruction errors
    extras: list = field(default_factory=list)

    def append(self, row: HistoryRow, gen_grad_norm: float = float("nan"), **extra) -> None:
        if self.rows and row.step <= self.rows[-1].step:
            raise ValueError("history steps must be strictly increasing")
        values = row.as_tuple()
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"non-finite history entry at step {row.step}")
        self.rows.append(row)
        self.gen_grad_norms.append(gen_grad_norm)
        self.extras.append(dict(extra))

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=np.float64)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(HISTORY_HEADER)
            for r in self.rows:
                w.writerow([r.step] + [repr(float(v)) for v in r.as_tuple()[1:]])

    @classmethod
    def from_csv(cls, path) -> "RunHistory":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader))
            if header != HISTORY_HEADER:
                raise ValueError(f"{path}: unexpected header {header}")
            hist = cls()
            for rec in reader:
                hist.append(HistoryRow(int(rec[0]), *(float(v) for v in rec[1:])))
        return hist


@dataclass
class TrainResult:
    config: TrainConfig
    history: RunHistory
    critic: MLP
    generator: object
    encoder: MLP | None = None

    def sample(self, n: int, seed: int | None = None) -> np.ndarray:
        rng = stream(self.config.seed if seed is None else seed, "sample")
        return self.generator(rng.standard_normal((n, self.config.z_dim))).data


def _mlp(widths, cfg: TrainConfig, spectral: bool, name: str) -> MLP:
    spec = MlpSpec(tuple(widths), hidden_activation=cfg.hidden_activation, spectral_norm=spectral,
                   init_scale=cfg.init_scale, power_iterations=cfg.power_iterations)
    return MLP(spec, cfg.seed, f"init.{name}")


class _Run:
    """Models, optimizers and loss plumbing for one resolved config."""

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.dist = cfg.distribution()
        dim = self.dist.dimension
        critic_in = cfg.joint_dim * (2 if cfg.critic_form == "pairwise" else 1)
        self.critic = _mlp((critic_in, *cfg.critic_hidden, 1), cfg, cfg.objective in SPECTRAL, "critic")
        if cfg.generator == "point":
            self.generator = PointGenerator(cfg.beta)
            if self.generator.position.shape[1] != dim:
                raise ValueError("beta and alpha differ in dimension")
        else:
            self.generator = _mlp((cfg.z_dim, *cfg.generator_hidden, dim), cfg, False, "generator")
        self.encoder = None
        gen_params = list(self.generator.parameters)
        if cfg.objective == "bigan_qp":
            self.encoder = _mlp((dim, *cfg.encoder_hidden, cfg.z_dim), cfg, False, "encoder")
            gen_params += self.encoder.parameters
        betas = (cfg.adam_beta1, cfg.adam_beta2)
        self.critic_opt = Adam(self.critic.parameters, cfg.lr, betas, cfg.adam_eps)
        self.gen_params = gen_params
        self.gen_opt = Adam(gen_params, cfg.lr, betas, cfg.adam_eps)
        self.qp = obj.QpConfig(cfg.lam, cfg.distance, cfg.critic_form)
        self.data_rng = stream(cfg.seed, "data")
        self.noise_rng = stream(cfg.seed, "noise")
        self.penalty_rng = stream(cfg.seed, "penalty")

    def draw(self, n: int, rng_data=None, rng_noise=None):
        real = toy.sample(self.dist, n, rng_data or self.data_rng)
        noise = (rng_noise or self.noise_rng).standard_normal((n, self.cfg.z_dim))
        return real, noise

    def losses(self, real, noise, phase: str, fake_leaf: Tensor | None = None) -> obj.LossPair:
        cfg = self.cfg
        kind = cfg.objective
        if kind == "bigan_qp":
            return obj.bigan_qp_losses(self.critic, self.generator, self.encoder, real, noise, self.qp,
                                       cfg.beta1_guide, cfg.beta2_guide, cfg.stop_guides)
        fake = fake_leaf if fake_leaf is not None else self.generator(noise)
        if phase == "critic":
            fake = fake.detach()
        if kind == "gan_qp":
            return obj.gan_qp_losses(self.critic, real, fake, self.qp)
        if kind == "sgan":
            return obj.sgan_losses(self.critic, real, fake, generator_form="minimax")
        if kind == "sgan_sn":
            return obj.sgan_losses(self.critic, real, fake)
        if kind == "lsgan_sn":
            return obj.lsgan_losses(self.critic, real, fake)
        if kind == "wgan_sn":
            return obj.wgan_losses(self.critic, real, fake, "spectral_norm")
        if kind == "wgan_gp":
            return obj.wgan_losses(self.critic, real, fake, "gradient_penalty", cfg.gp_weight,
                                   rng=self.penalty_rng, with_penalty=phase == "critic")
        return obj.sgan_qp_losses(self.critic, real, fake, cfg.lam, cfg.distance)

    def set_progress(self, step: int) -> None:
        """Apply the learning-rate schedule before generator step ``step`` (1-based)."""
        if self.cfg.lr_schedule == "linear":
            lr = self.cfg.lr * (1.0 - (step - 1) / self.cfg.total_gen_steps)
            self.critic_opt.state.learning_rate = lr
            self.gen_opt.state.learning_rate = lr

    def critic_step(self) -> None:
        real, noise = self.draw(self.cfg.batch_size)
        if self.critic.spec.spectral_norm:
            self.critic.power_iterate()
        loss = self.losses(real, noise, "critic").critic_loss
        self.critic_opt.step(ag.grad(loss, self.critic.parameters))

    def generator_step(self) -> None:
        real, noise = self.draw(self.cfg.batch_size)
        loss = self.losses(real, noise, "generator").generator_loss
        self.gen_opt.step(ag.grad(loss, self.gen_params))


def generator_gradient_norm(run: _Run, real, noise) -> float:
    """Mean per-sample norm of d(generator loss)/d(fake sample), rescaled by the batch size.

    For a point generator every fake sample is the same point, so this equals
    the norm of the gradient with respect to the generator's position.
    """
    n = real.shape[0]
    if run.cfg.objective == "bigan_qp":
        encoded = run.encoder(real).data
        joint_real = np.concatenate([real, encoded], axis=1)
        leaf = Tensor(np.concatenate([run.generator(noise).data, noise], axis=1), requires_grad=True)
        loss = obj.gan_qp_losses(run.critic, joint_real, leaf, run.qp).generator_loss
    else:
        leaf = Tensor(run.generator(noise).data, requires_grad=True)
        loss = run.losses(real, noise, "generator", fake_leaf=leaf).generator_loss
    (g,) = ag.grad(loss, [leaf])
    return float(np.mean(np.linalg.norm(n * g.data, axis=1)))


def _evaluate(run: _Run, step: int, started: float, rng_data, rng_noise) -> tuple[HistoryRow, float, dict]:
    cfg = run.cfg
    real, noise = run.draw(cfg.eval_samples, rng_data, rng_noise)
    pair = run.losses(real, noise, "eval")
    fake = run.generator(noise).data
    fid = frechet_2d(real, fake) if fake.shape[0] > fake.shape[1] else 0.0
    coverage = 0.0
    if run.dist.kind in ("ring8", "grid25"):
        coverage = mode_coverage(fake, run.dist.centers, run.dist.sigma)[0] / run.dist.centers.shape[0]
    d = pair.diagnostics
    row = HistoryRow(step, float(pair.critic_loss.data), float(pair.generator_loss.data),
                     d["delta_t_mean"], d["lipschitz_ratio_mean"], fid, float(coverage),
                     time.perf_counter() - started)
    extra = {k: v for k, v in d.items() if k not in ("delta_t_mean", "lipschitz_ratio_mean")}
    if cfg.generator == "point":
        extra["position"] = run.generator.position.data.ravel().tolist()
    return row, generator_gradient_norm(run, real[:1000], noise[:1000]), extra


def train(config: TrainConfig, callback=None) -> TrainResult:
    """Run the alternating loop: ``critic_steps`` critic updates, then one generator update.

    A history row is recorded before training and after every ``eval_every``
    generator steps.  Raises :class:`TrainingAborted`
    when a loss or gradient goes non-finite.
    """
    cfg = config.resolved()
    run = _Run(cfg)
    history = RunHistory()
    started = time.perf_counter()

    def record(step):
        rng_data = stream(cfg.seed, f"eval.data.{step}")
        rng_noise = stream(cfg.seed, f"eval.noise.{step}")
        row, gnorm, extra = _evaluate(run, step, started, rng_data, rng_noise)
        history.append(row, gnorm, **extra)
        if callback is not None:
            callback(row)

    phase = "evaluation"
    step = 0
    try:
        record(0)
        for step in range(1, cfg.total_gen_steps + 1):
            run.set_progress(step)
            phase = "critic"
            for _ in range(cfg.critic_steps):
                run.critic_step()
            phase = "generator"
            run.generator_step()
            if step % cfg.eval_every == 0:
                phase = "evaluation"
                record(step)
    except (NonFiniteError, FloatingPointError, ValueError) as exc:
        if isinstance(exc, ValueError) and "non-finite" not in str(exc):
            raise
        raise TrainingAborted(step, phase, history, exc) from exc
    return TrainResult(cfg, history, run.critic, run.generator, run.encoder)


def write_samples(path, points) -> None:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i}" for i in range(pts.shape[1])])
        for row in pts:
            w.writerow([repr(float(v)) for v in row])

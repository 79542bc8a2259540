"""scikit-learn style wrappers around the training loop and the divergence estimator.

    >>> model = GanQP(n_steps=2000).fit(X)          # doctest: +SKIP
    >>> fake = model.sample(1000)                   # doctest: +SKIP
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .harness import data as toy
from .harness.estimation import EstimateConfig, evaluate_neural_divergence
from .harness.metrics import frechet_2d
from .harness.training import TrainConfig, train
from .rng import stream

__all__ = ["GanQP", "BiGanQP", "QPDivergence"]


def _empirical(X: np.ndarray) -> toy.ToyDistribution:
    return toy.discrete(X, np.full(X.shape[0], 1.0 / X.shape[0]))


class _TrainedGenerator(BaseEstimator):

    def _config(self, X: np.ndarray, objective: str, **extra) -> TrainConfig:
        return TrainConfig(
            objective=objective, data="discrete", support=tuple(X.ravel()),
            probs=tuple(np.full(X.shape[0], 1.0 / X.shape[0])), data_dim=X.shape[1],
            lam=self.lam, distance=self.distance, critic_steps=self.critic_steps,
            batch_size=self.batch_size, total_gen_steps=self.n_steps, lr=self.lr,
            seed=self.random_state, eval_every=max(self.n_steps, 1),
            eval_samples=min(self.eval_samples, 10 * X.shape[0]) if self.eval_samples else X.shape[0],
            critic_hidden=tuple(self.hidden), generator_hidden=tuple(self.hidden),
            z_dim=self.z_dim, init_scale=self.init_scale, generator="mlp", **extra)

    def _fit(self, X, objective: str, **extra):
        X = check_array(X, ensure_min_samples=2)
        self.n_features_in_ = X.shape[1]
        result = train(self._config(X, objective, **extra))
        self.critic_ = result.critic
        self.generator_ = result.generator
        self.encoder_ = result.encoder
        self.history_ = result.history
        self.config_ = result.config
        return self

    def sample(self, n_samples: int = 1, random_state: int | None = None) -> np.ndarray:
        check_is_fitted(self, "generator_")
        if n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        rng = stream(self.random_state if random_state is None else random_state, "sample")
        return self.generator_(rng.standard_normal((n_samples, self.z_dim))).data

    def score(self, X, y=None) -> float:
        """Negative Frechet distance between ``X`` and as many generated samples."""
        X = check_array(X, ensure_min_samples=3)
        return -frechet_2d(X, self.sample(X.shape[0]))


class GanQP(_TrainedGenerator):
    """Generator trained adversarially on the rows of ``X``.

    ``objective`` selects GAN-QP (default) or one of the baselines
    ``sgan_sn``, ``lsgan_sn``, ``wgan_sn``, ``wgan_gp``, ``sgan_qp``.
    """

    def __init__(self, objective: str = "gan_qp", lam="auto", distance: str = "L1", critic_steps: int = 2,
                 batch_size: int = 256, n_steps: int = 20000, lr: float = 2e-4, hidden=(128, 128),
                 z_dim: int = 2, init_scale: float = 0.05, eval_samples: int = 10000, random_state: int = 0):
        self.objective = objective
        self.lam = lam
        self.distance = distance
        self.critic_steps = critic_steps
        self.batch_size = batch_size
        self.n_steps = n_steps
        self.lr = lr
        self.hidden = hidden
        self.z_dim = z_dim
        self.init_scale = init_scale
        self.eval_samples = eval_samples
        self.random_state = random_state

    def fit(self, X, y=None):
        if self.objective == "bigan_qp":
            raise ValueError("use BiGanQP for the bidirectional model")
        return self._fit(X, self.objective)


class BiGanQP(TransformerMixin, _TrainedGenerator):
    """Bidirectional GAN-QP: ``transform`` encodes, ``inverse_transform`` decodes."""

    def __init__(self, lam="auto", distance: str = "L1", critic_steps: int = 2, batch_size: int = 256,
                 n_steps: int = 20000, lr: float = 2e-4, hidden=(128, 128), z_dim: int = 2,
                 beta1_guide="auto", beta2_guide="auto", stop_guides: bool = True, init_scale: float = 0.05,
                 eval_samples: int = 10000, random_state: int = 0):
        self.lam = lam
        self.distance = distance
        self.critic_steps = critic_steps
        self.batch_size = batch_size
        self.n_steps = n_steps
        self.lr = lr
        self.hidden = hidden
        self.z_dim = z_dim
        self.beta1_guide = beta1_guide
        self.beta2_guide = beta2_guide
        self.stop_guides = stop_guides
        self.init_scale = init_scale
        self.eval_samples = eval_samples
        self.random_state = random_state

    def fit(self, X, y=None):
        return self._fit(X, "bigan_qp", encoder_hidden=tuple(self.hidden), beta1_guide=self.beta1_guide,
                         beta2_guide=self.beta2_guide, stop_guides=self.stop_guides)

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "encoder_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return self.encoder_(X).data

    def inverse_transform(self, Z) -> np.ndarray:
        check_is_fitted(self, "generator_")
        Z = check_array(Z)
        if Z.shape[1] != self.z_dim:
            raise ValueError(f"Z has {Z.shape[1]} columns, expected {self.z_dim}")
        return self.generator_(Z).data


class QPDivergence(BaseEstimator):
    """Neural estimate of a divergence between the row distributions of two samples.

    ``fit(X, Y)`` trains a critic with X as the p-sample and Y as the
    q-sample; the estimate is stored in ``divergence_``.
    """

    def __init__(self, objective: str = "qp", lam: float = 1.0, distance: str = "L1",
                 critic_form: str = "single", hidden=(128, 128), lr: float = 1e-3, batch_size: int = 256,
                 max_steps: int = 5000, eval_pairs: int = 10000, random_state: int = 0):
        self.objective = objective
        self.lam = lam
        self.distance = distance
        self.critic_form = critic_form
        self.hidden = hidden
        self.lr = lr
        self.batch_size = batch_size
        self.max_steps = max_steps
        self.eval_pairs = eval_pairs
        self.random_state = random_state

    def fit(self, X, Y):
        X = check_array(X)
        Y = check_array(Y)
        if X.shape[1] != Y.shape[1]:
            raise ValueError(f"X and Y differ in feature count ({X.shape[1]} vs {Y.shape[1]})")
        self.n_features_in_ = X.shape[1]
        cfg = EstimateConfig(lam=self.lam, distance=self.distance, critic_form=self.critic_form,
                             hidden=tuple(self.hidden), lr=self.lr, batch_size=self.batch_size,
                             max_steps=self.max_steps, eval_pairs=self.eval_pairs, seed=self.random_state)
        est = evaluate_neural_divergence(self.objective, _empirical(X), _empirical(Y), cfg)
        self.divergence_ = est.value
        self.converged_ = est.converged
        self.n_iter_ = est.steps
        return self

    def score(self, X=None, Y=None) -> float:
        check_is_fitted(self, "divergence_")
        return self.divergence_

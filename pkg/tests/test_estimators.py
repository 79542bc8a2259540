import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from ganqp.estimators import BiGanQP, GanQP, QPDivergence

FAST = dict(n_steps=10, hidden=(8,), batch_size=16, eval_samples=100)


@pytest.fixture(scope="module")
def X():
    return np.random.default_rng(0).normal(size=(200, 2))


def test_get_params_and_clone():
    est = GanQP(lam=2.0, hidden=(32, 32))
    params = est.get_params()
    assert params["lam"] == 2.0 and params["hidden"] == (32, 32)
    twin = clone(est)
    assert twin.get_params() == params and twin is not est
    est.set_params(n_steps=5)
    assert est.n_steps == 5


def test_ganqp_fit_sample_score(X):
    est = GanQP(**FAST).fit(X)
    assert est.n_features_in_ == 2
    assert est.sample(7).shape == (7, 2)
    np.testing.assert_array_equal(est.sample(5, random_state=3), est.sample(5, random_state=3))
    assert np.isfinite(est.score(X)) and est.score(X) <= 0
    assert len(est.history_) == 2


def test_ganqp_is_deterministic(X):
    a = GanQP(**FAST, random_state=4).fit(X).sample(20)
    b = GanQP(**FAST, random_state=4).fit(X).sample(20)
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("objective", ["sgan_sn", "wgan_gp"])
def test_ganqp_baselines(X, objective):
    assert GanQP(objective=objective, **FAST).fit(X).sample(3).shape == (3, 2)


def test_ganqp_input_validation(X):
    with pytest.raises(ValueError):
        GanQP(**FAST).fit(np.array([[0.0, np.nan], [1.0, 1.0]]))
    with pytest.raises(ValueError):
        GanQP(**FAST).fit(X[:1])
    with pytest.raises(ValueError):
        GanQP(objective="bigan_qp", **FAST).fit(X)
    with pytest.raises(ValueError):
        GanQP(objective="nope", **FAST).fit(X)
    with pytest.raises(NotFittedError):
        GanQP().sample(3)
    with pytest.raises(ValueError):
        GanQP(**FAST).fit(X).sample(0)


def test_bigan_transform_round_trip_shapes(X):
    est = BiGanQP(**FAST).fit(X)
    z = est.transform(X[:9])
    assert z.shape == (9, 2)
    assert est.inverse_transform(z).shape == (9, 2)
    assert est.fit_transform(X).shape == (200, 2)


def test_bigan_validation(X):
    with pytest.raises(NotFittedError):
        BiGanQP().transform(X)
    est = BiGanQP(**FAST).fit(X)
    with pytest.raises(ValueError):
        est.transform(np.ones((3, 3)))
    with pytest.raises(ValueError):
        est.inverse_transform(np.ones((3, 5)))


def test_divergence_estimator_between_shifted_clouds():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(300, 1)) * 0.01
    est = QPDivergence(hidden=(32, 32), max_steps=1500).fit(X, X + 3.0)
    # nearly point masses 3 apart: lam d / 2 = 1.5
    assert est.score() == pytest.approx(1.5, rel=0.05)
    assert est.n_iter_ <= 1500


def test_divergence_estimator_validation():
    with pytest.raises(ValueError):
        QPDivergence().fit(np.ones((4, 2)), np.ones((4, 3)))
    with pytest.raises(NotFittedError):
        QPDivergence().score()
    with pytest.raises(ValueError):
        QPDivergence(objective="kl", max_steps=5).fit(np.ones((4, 1)), np.zeros((4, 1)))

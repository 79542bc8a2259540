import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ganqp import autograd as ag
from ganqp import objectives as obj
from ganqp.nets import MlpSpec, build_mlp

LOG2 = math.log(2.0)


def constant(c):
    """Critic that returns c everywhere but still depends on its input."""
    return lambda x: ag.add(ag.mul(ag.tsum(x, axis=1, keepdims=True), 0.0), c)


def linear(w, b=0.0):
    w = np.asarray(w, dtype=np.float64).reshape(-1, 1)
    return lambda x: ag.add(ag.matmul(x, w), b)


ONES = np.ones((4, 1))
ZEROS = np.zeros((4, 1))


def test_qp_objective_substitution():
    assert obj.qp_objective([1.0], [1.0], 1.0, eps_d=0.0).item() == 0.5
    assert obj.qp_objective(np.zeros(5), np.ones(5), 3.0).item() == 0.0


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 10), st.floats(0.01, 10))
def test_qp_objective_peak_is_half_lambda_d(lam, d):
    value = obj.qp_objective([lam * d], [d], lam, eps_d=0.0).item()
    assert value == pytest.approx(lam * d / 2, rel=1e-12)
    # any other dT scores lower
    assert obj.qp_objective([0.9 * lam * d], [d], lam, eps_d=0.0).item() < value


def test_qp_objective_rejects_bad_lambda():
    with pytest.raises(ValueError):
        obj.qp_objective([1.0], [1.0], 0.0)


def test_default_lambda_and_guides():
    assert obj.default_lambda(2, "L1") == 5.0
    assert obj.default_lambda(4, "L2") == 5.0
    assert obj.default_guides(2, 2) == (2.0, 3.0)


def test_sgan_zero_critic_objective_zero():
    pair = obj.sgan_losses(constant(0.0), ONES, ZEROS)
    assert pair.critic_objective == pytest.approx(0.0, abs=1e-15)


def test_sgan_separated_critic_approaches_log2():
    pair = obj.sgan_losses(linear([60.0], -30.0), ONES, ZEROS)
    assert pair.critic_objective == pytest.approx(LOG2, abs=1e-10)


def test_sgan_minimax_gradient_vanishes_when_saturated():
    fake = ag.Tensor(ZEROS, requires_grad=True)
    pair = obj.sgan_losses(linear([60.0], -30.0), ONES, fake, generator_form="minimax")
    (g,) = ag.grad(pair.generator_loss, [fake])
    assert np.abs(g.data).max() < 1e-10
    with pytest.raises(ValueError):
        obj.sgan_losses(constant(0.0), ONES, ZEROS, generator_form="other")


def test_lsgan_values():
    assert obj.lsgan_losses(constant(0.0), ONES, ZEROS).critic_loss.item() == 2.0
    perfect = obj.lsgan_losses(linear([2.0], -1.0), ONES, ZEROS)
    assert perfect.critic_loss.item() == 0.0
    assert obj.lsgan_losses(constant(1.0), ONES, ZEROS).generator_loss.item() == 0.0


def test_wgan_zero_critic_and_linear_dirac():
    assert obj.wgan_losses(constant(0.0), ONES, ZEROS).critic_objective == 0.0
    # unit-slope linear critic between Diracs at 3 and 0 attains d = 3
    pair = obj.wgan_losses(linear([1.0]), 3 * ONES, ZEROS)
    assert pair.diagnostics["wasserstein"] == 3.0


def test_wgan_gp_linear_critic_penalty():
    rng = np.random.default_rng(0)
    pair = obj.wgan_losses(linear([3.0]), ONES, ZEROS, "gradient_penalty", gp_weight=1.0, rng=rng)
    assert pair.diagnostics["gradient_penalty"] == pytest.approx(4.0)
    with pytest.raises(ValueError):
        obj.wgan_losses(linear([3.0]), ONES, ZEROS, "gradient_penalty")
    with pytest.raises(ValueError):
        obj.wgan_losses(linear([3.0]), ONES, ZEROS, "clipping")


def test_gan_qp_identical_batches_are_zero():
    x = np.random.default_rng(0).normal(size=(16, 2))
    critic = build_mlp(MlpSpec((2, 8, 1)), 0)
    pair = obj.gan_qp_losses(critic, x, x, obj.QpConfig(1.0))
    assert pair.critic_loss.item() == 0.0
    assert pair.generator_loss.item() == 0.0


@pytest.mark.parametrize("form", ["single", "pairwise"])
def test_gan_qp_dirac_optimum(form):
    # with dT = lam * d exactly the objective is lam d / 2
    lam, d = 1.0, 3.0
    width = 1 if form == "single" else 2
    w = [lam] if form == "single" else [lam / 2, -lam / 2]
    pair = obj.gan_qp_losses(linear(w[:width]), d * ONES, ZEROS, obj.QpConfig(lam, critic_form=form))
    assert pair.critic_objective == pytest.approx(lam * d / 2, rel=1e-8)
    assert pair.diagnostics["lipschitz_ratio_mean"] == pytest.approx(1.0, rel=1e-8)


def test_gan_qp_generator_gradient_points_toward_real():
    fake = ag.Tensor(ZEROS, requires_grad=True)
    pair = obj.gan_qp_losses(linear([1.0]), 3 * ONES, fake, obj.QpConfig(1.0))
    (g,) = ag.grad(pair.generator_loss, [fake])
    # loss decreases as the fake moves up toward 3
    assert np.all(g.data < 0)


def test_gan_qp_batch_mismatch():
    with pytest.raises(ag.ShapeError):
        obj.gan_qp_losses(constant(0.0), np.ones((3, 1)), np.ones((4, 1)), obj.QpConfig(1.0))


@pytest.mark.parametrize("kw", [dict(lam=0.0), dict(lam=1.0, distance="L3"), dict(lam=1.0, critic_form="x")])
def test_qp_config_validation(kw):
    with pytest.raises(ValueError):
        obj.QpConfig(**kw)


def test_sgan_qp_zero_critic_and_substitution():
    pair = obj.sgan_qp_losses(constant(0.0), ONES, ZEROS, 1.0)
    assert pair.critic_objective == pytest.approx(0.0, abs=1e-15)
    assert obj.qp_objective([0.3], [1.0], 1.0, eps_d=0.0).item() == pytest.approx(0.255, abs=1e-15)


# -- BiGAN-QP --------------------------------------------------------------

def _bigan_nets(seed=0):
    gen = build_mlp(MlpSpec((2, 8, 2), init_scale=1.0), seed, "init.generator")
    enc = build_mlp(MlpSpec((2, 8, 2), init_scale=1.0), seed, "init.encoder")
    return gen, enc


def test_bigan_guide_is_stopped_at_generator_output():
    gen, enc = _bigan_nets()
    rng = np.random.default_rng(0)
    x, z = rng.normal(size=(8, 2)), rng.normal(size=(8, 2))
    zero_critic = constant(0.0)
    # beta1 term only: its gradient must not reach G
    pair = obj.bigan_qp_losses(zero_critic, gen, enc, x, z, obj.QpConfig(1.0), beta1_guide=1.0, beta2_guide=0.0)
    grads = ag.grad(pair.generator_loss, gen.parameters)
    assert all(np.all(g.data == 0.0) for g in grads)
    # beta2 term only: its gradient must not reach E
    pair = obj.bigan_qp_losses(zero_critic, gen, enc, x, z, obj.QpConfig(1.0), beta1_guide=0.0, beta2_guide=1.0)
    grads = ag.grad(pair.generator_loss, enc.parameters)
    assert all(np.all(g.data == 0.0) for g in grads)


def test_bigan_unstopped_guides_do_reach_both():
    gen, enc = _bigan_nets()
    rng = np.random.default_rng(0)
    x, z = rng.normal(size=(8, 2)), rng.normal(size=(8, 2))
    pair = obj.bigan_qp_losses(constant(0.0), gen, enc, x, z, obj.QpConfig(1.0), 1.0, 0.0, stop_guides=False)
    grads = ag.grad(pair.generator_loss, gen.parameters)
    assert any(np.any(g.data) for g in grads)


def test_bigan_perfect_inverse_has_zero_guides():
    def identity(x):
        return ag.mul(x, 1.0)

    x = np.random.default_rng(1).normal(size=(8, 2))
    pair = obj.bigan_qp_losses(constant(0.0), identity, identity, x, x.copy(), obj.QpConfig(1.0))
    assert pair.diagnostics["recon_z"] == 0.0
    assert pair.diagnostics["recon_x"] == 0.0


def test_bigan_default_guides_used():
    gen, enc = _bigan_nets()
    rng = np.random.default_rng(0)
    x, z = rng.normal(size=(8, 2)), rng.normal(size=(8, 2))
    pair = obj.bigan_qp_losses(constant(0.0), gen, enc, x, z, obj.QpConfig(1.0))
    d = pair.diagnostics
    assert pair.generator_loss.item() == pytest.approx(2.0 * d["recon_z"] + 3.0 * d["recon_x"])

import numpy as np
import pytest

from ganqp import autograd as ag
from ganqp.nets import MLP, MlpSpec, PointGenerator, SpectralState, build_mlp, load_mlp, save_mlp, spectral_normalize


def test_forced_linear_net():
    net = build_mlp(MlpSpec((2, 1)))
    net.set_flat([np.array([[1.0], [1.0]]), np.zeros(1)])
    assert net(np.array([[3.0, 4.0]])).item() == 7.0


def test_same_seed_same_parameters():
    spec = MlpSpec((2, 16, 16, 1))
    for a, b in zip(build_mlp(spec, 4).get_flat(), build_mlp(spec, 4).get_flat()):
        np.testing.assert_array_equal(a, b)
    assert not np.array_equal(build_mlp(spec, 4).get_flat()[0], build_mlp(spec, 5).get_flat()[0])


def test_stream_name_separates_models():
    spec = MlpSpec((2, 8, 1))
    a = build_mlp(spec, 0, "init.critic").get_flat()[0]
    b = build_mlp(spec, 0, "init.generator").get_flat()[0]
    assert not np.array_equal(a, b)


def test_init_respects_scale_bound():
    w = build_mlp(MlpSpec((16, 32, 1), init_scale=0.5)).get_flat()[0]
    assert np.abs(w).max() <= 0.5 / 4.0
    assert np.all(build_mlp(MlpSpec((16, 32, 1))).get_flat()[1] == 0)


@pytest.mark.parametrize("kw", [
    dict(layer_widths=(3,)),
    dict(layer_widths=(2, 0, 1)),
    dict(layer_widths=(2, 1), hidden_activation="gelu"),
    dict(layer_widths=(2, 1), output_activation="relu"),
    dict(layer_widths=(2, 1), init_scale=0.0),
])
def test_invalid_specs(kw):
    with pytest.raises(ValueError):
        MlpSpec(**kw)


def test_wrong_input_width():
    with pytest.raises(ag.ShapeError):
        build_mlp(MlpSpec((3, 1)))(np.ones((4, 2)))


def test_output_tanh_is_bounded():
    net = build_mlp(MlpSpec((2, 8, 1), output_activation="tanh", init_scale=5.0))
    out = net(np.random.default_rng(0).normal(size=(50, 2)) * 10).data
    assert np.all(np.abs(out) <= 1)


def test_save_load_round_trip(tmp_path):
    net = build_mlp(MlpSpec((2, 5, 3), hidden_activation="tanh", spectral_norm=False), 3)
    save_mlp(tmp_path / "m.qpm", net)
    back = load_mlp(tmp_path / "m.qpm")
    assert back.spec == net.spec
    x = np.random.default_rng(0).normal(size=(4, 2))
    np.testing.assert_array_equal(back(x).data, net(x).data)


def test_load_rejects_garbage(tmp_path):
    (tmp_path / "bad.qpm").write_bytes(b"nope")
    with pytest.raises(ValueError):
        load_mlp(tmp_path / "bad.qpm")
    net = build_mlp(MlpSpec((2, 1)))
    save_mlp(tmp_path / "m.qpm", net)
    (tmp_path / "cut.qpm").write_bytes((tmp_path / "m.qpm").read_bytes()[:-4])
    with pytest.raises(ValueError):
        load_mlp(tmp_path / "cut.qpm")


# -- spectral normalization ---------------------------------------------------

def _state(shape, iters=1, seed=0):
    return SpectralState.init(shape, np.random.default_rng(seed), iters)


def test_diag_top_singular_value_after_20_iterations():
    w = np.diag([3.0, 1.0])
    out, _ = spectral_normalize(w, _state((2, 2), iters=20))
    assert np.linalg.svd(out.data, compute_uv=False)[0] == pytest.approx(1.0, abs=1e-3)


def test_orthogonal_matrix_unchanged():
    q, _ = np.linalg.qr(np.random.default_rng(3).normal(size=(4, 4)))
    state = _state((4, 4), iters=5)
    out, _ = spectral_normalize(q, state)
    np.testing.assert_allclose(out.data, q, atol=1e-6)


def test_scale_invariance():
    w = np.random.default_rng(1).normal(size=(3, 5))
    a, _ = spectral_normalize(w, _state((3, 5), iters=30))
    b, _ = spectral_normalize(7.5 * w, _state((3, 5), iters=30))
    np.testing.assert_allclose(a.data, b.data, atol=1e-12)


def test_zero_matrix_is_an_error():
    with pytest.raises(ValueError):
        spectral_normalize(np.zeros((2, 2)), _state((2, 2)))


def test_spectral_critic_is_roughly_one_lipschitz():
    net = build_mlp(MlpSpec((2, 32, 32, 1), spectral_norm=True, init_scale=1.0), 0)
    net.power_iterate(50)
    for w in net.effective_weights():
        assert np.linalg.svd(w.data, compute_uv=False)[0] == pytest.approx(1.0, abs=1e-3)


def test_spectral_gradient_flows_through_sigma():
    w0 = np.random.default_rng(2).normal(size=(3, 2))
    state = _state((3, 2), iters=30)
    spectral_normalize(w0, state)
    u, v = state.u.copy(), state.v.copy()

    def f(w):
        s = SpectralState(u=u.copy(), v=v.copy())
        out, _ = spectral_normalize(w, s, update=False)
        return ag.tsum(ag.square(out))

    assert ag.grad_check(f, [w0]) < 1e-6


def test_point_generator_repeats_position():
    g = PointGenerator([3.0])
    out = g(np.zeros((5, 2)))
    np.testing.assert_array_equal(out.data, np.full((5, 1), 3.0))
    (grad,) = ag.grad(ag.mean(out), g.parameters)
    assert grad.item() == 1.0


def test_stop_gradient_on_generator_output_gives_zero_parameter_gradient():
    gen = build_mlp(MlpSpec((2, 8, 2)), 0)
    enc = build_mlp(MlpSpec((2, 8, 2)), 1)
    z = ag.Tensor(np.random.default_rng(0).normal(size=(6, 2)))
    loss = ag.mean(ag.square(z - enc(ag.stop_gradient(gen(z)))))
    grads = ag.grad(loss, gen.parameters + enc.parameters)
    assert all(not np.any(g.data) for g in grads[:len(gen.parameters)])
    assert any(np.any(g.data) for g in grads[len(gen.parameters):])


def test_mlp_matches_manual_forward():
    net = MLP(MlpSpec((2, 3, 1), hidden_activation="tanh"), 7)
    w1, b1, w2, b2 = net.get_flat()
    x = np.array([[0.1, -0.4], [2.0, 1.0]])
    np.testing.assert_allclose(net(x).data, np.tanh(x @ w1 + b1) @ w2 + b2)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rpsae.nn import (BiLSTM, ClusterState, Conv1D, Crop1D, Deconv1D, Dense, MaxPool1D, Network, TrainConfig,
                      TrainingDivergence, UpSample1D, build_autoencoder, grad_check, load_network,
                      reconstruction_loss, save_network, train)


def rng(seed=0):
    return np.random.default_rng(seed)


def input_grad_error(layer, x, eps=1e-6):
    """Max relative error of d(sum(out * w))/dx against central differences."""
    out = layer.forward(x)
    w = rng(7).standard_normal(out.shape)
    layer.zero_grad()
    analytic = layer.backward(w)
    worst = 0.0
    flat = x.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        lp = float((layer.forward(x) * w).sum())
        flat[i] = old - eps
        lm = float((layer.forward(x) * w).sum())
        flat[i] = old
        num = (lp - lm) / (2 * eps)
        a = analytic.reshape(-1)[i]
        worst = max(worst, abs(a - num) / max(1e-8, abs(a) + abs(num)))
    return worst


LAYERS = {
    "conv1d": lambda: (Conv1D(2, 3, 4, rng(1)), (2, 9, 2)),
    "conv1d_odd_kernel": lambda: (Conv1D(1, 2, 3, rng(2)), (2, 7, 1)),
    "maxpool": lambda: (MaxPool1D(3), (2, 8, 2)),
    "dense": lambda: (Dense(3, 2, rng(3)), (2, 5, 3)),
    "bilstm": lambda: (BiLSTM(2, 3, rng(4)), (2, 5, 2)),
    "upsample": lambda: (UpSample1D(3), (2, 4, 2)),
    "crop": lambda: (Crop1D(5), (2, 7, 2)),
    "deconv1d": lambda: (Deconv1D(3, 1, 4, rng(5)), (2, 6, 3)),
    "deconv1d_stride2": lambda: (Deconv1D(2, 2, 4, rng(6), stride=2), (2, 5, 2)),
}


@pytest.mark.parametrize("name", list(LAYERS))
def test_layer_gradients(name):
    layer, shape = LAYERS[name]()
    x = rng(11).standard_normal(shape)
    assert input_grad_error(layer, x.copy()) <= 1e-4
    if layer.params:
        net = Network([layer])
        assert grad_check(net, x) <= 1e-4


def test_linear_network_gradients_exact():
    net = Network([Dense(1, 3, rng(1)), Dense(3, 1, rng(2))])
    assert grad_check(net, rng(3).standard_normal((3, 6, 1))) <= 1e-7


def test_grad_check_rejects_zero_eps():
    with pytest.raises(ValueError):
        grad_check(Network([Dense(1, 1, rng())]), np.ones((1, 2, 1)), eps=0.0)


def test_toy_stack_gradients():
    net = build_autoencoder(16, 4, filters=4, kernel=10, lstm_units=4, seed=0)
    assert net.n_parameters() <= 5000
    assert grad_check(net, rng(1).standard_normal((3, 16))) <= 1e-4


@pytest.mark.parametrize("length,k", [(4032, 8), (64, 4), (30, 4), (17, 3)])
def test_shape_contract(length, k):
    net = build_autoencoder(length, k, filters=4, lstm_units=3, seed=0)
    x = rng().standard_normal((2, length))
    z = net.encode(x)
    assert z.shape == (2, -(-length // k))
    assert net.latent_length() == z.shape[1]
    assert net.decode(z).shape == x.shape


def test_full_size_latent():
    net = build_autoencoder(4032, 8, seed=0)
    z = net.encoder_forward(rng().standard_normal((2, 4032, 1)))
    assert z.shape == (2, 504, 1)


def test_zero_parameters_output_bias():
    net = build_autoencoder(24, 4, filters=3, lstm_units=2, seed=0)
    for _, _, p, _ in net.parameters():
        p[...] = 0.0
    net.layers[-1].params["b"][...] = 0.75
    out = net.forward(rng().standard_normal((2, 24, 1)))
    np.testing.assert_array_equal(out, 0.75)


def test_zero_upstream_gradient():
    net = build_autoencoder(16, 4, filters=3, lstm_units=2, seed=0)
    x = rng().standard_normal((2, 16, 1))
    out = net.forward(x)
    net.zero_grad()
    net.backward(np.zeros_like(out))
    assert np.all(net.gradient_vector() == 0)


def test_duplicated_sample_doubles_gradient():
    net = build_autoencoder(16, 4, filters=3, lstm_units=2, seed=0)
    x = rng().standard_normal((1, 16, 1))
    g = rng(1).standard_normal((1, 16, 1))
    net.forward(x)
    net.zero_grad()
    net.backward(g)
    single = net.gradient_vector().copy()
    net.forward(np.concatenate([x, x]))
    net.zero_grad()
    net.backward(np.concatenate([g, g]))
    np.testing.assert_allclose(net.gradient_vector(), 2 * single, rtol=1e-10, atol=1e-12)


def identity_net(bias=0.0):
    d = Dense(1, 1, rng())
    d.params["W"][...] = 1.0
    d.params["b"][...] = bias
    return Network([d], n_encoder=1)


def test_reconstruction_loss_definitions():
    x = rng().standard_normal((3, 10))
    assert reconstruction_loss(identity_net(), x) == 0.0
    assert reconstruction_loss(identity_net(1.0), x[:1]) == pytest.approx(10.0)
    net = build_autoencoder(10, 2, filters=3, lstm_units=2, seed=4)
    out = net.forward(x[:, :, None])[:, :, 0]
    assert reconstruction_loss(net, x) == pytest.approx(((out - x) ** 2).sum() / 3, rel=1e-10)


def test_maxpool_routes_to_first_maximum():
    pool = MaxPool1D(3)
    x = np.array([[[1.0], [5.0], [5.0], [2.0], [2.0], [2.0], [7.0]]])
    out = pool.forward(x)
    np.testing.assert_array_equal(out[0, :, 0], [5, 2, 7])
    g = pool.backward(np.ones_like(out))
    np.testing.assert_array_equal(g[0, :, 0], [0, 1, 0, 1, 0, 0, 1])


def test_bilstm_direction_symmetry():
    a = BiLSTM(2, 3, rng(1))
    b = BiLSTM(2, 3, rng(9))
    for p in ("W", "U", "b"):
        b.params[f"{p}_f"][...] = a.params[f"{p}_b"]
        b.params[f"{p}_b"][...] = a.params[f"{p}_f"]
    x = rng(2).standard_normal((2, 6, 2))
    out = a.forward(x)
    mirrored = b.forward(x[:, ::-1])[:, ::-1]
    np.testing.assert_allclose(mirrored, np.concatenate([out[:, :, 3:], out[:, :, :3]], axis=2), atol=1e-14)


def sinusoids(p=8, d=96, seed=0):
    r = rng(seed)
    t = np.arange(d)
    return np.array([np.sin(2 * np.pi * t / 24 + r.uniform(0, 2 * np.pi)) * r.uniform(0.5, 1.5) + 1.0
                     for _ in range(p)])


def test_training_reduces_loss_tenfold():
    x = sinusoids()
    net = build_autoencoder(x.shape[1], 4, seed=0)
    initial = reconstruction_loss(net, x)
    trained, trace = train(net, x, TrainConfig(epochs=200, seed=0))
    final = reconstruction_loss(trained, x)
    assert final <= 0.1 * initial
    assert final == pytest.approx(min(trace.loss + [final]), rel=1e-12)
    assert reconstruction_loss(net, x) == initial  # input network untouched


def test_training_deterministic():
    x = sinusoids(p=4, d=48)
    net = build_autoencoder(48, 4, filters=6, lstm_units=4, seed=3)
    cfg = TrainConfig(epochs=15, seed=5, batch_size=2)
    _, t1 = train(net, x, cfg)
    _, t2 = train(net, x, cfg)
    assert t1.loss == t2.loss


def test_gamma_zero_combined_equals_reconstruction():
    x = sinusoids(p=4, d=48)
    net = build_autoencoder(48, 4, filters=6, lstm_units=4, seed=3)
    z = net.encode(x)
    state = ClusterState(z[:2].copy(), np.array([0, 1, 0, 1]))
    _, a = train(net, x, TrainConfig(epochs=12, seed=1))
    _, b = train(net, x, TrainConfig(epochs=12, seed=1, loss="combined", gamma=0.0, cluster_restarts=2), state)
    np.testing.assert_allclose(a.loss, b.loss, rtol=0, atol=0)


def test_combined_needs_cluster_state():
    with pytest.raises(ValueError):
        train(identity_net(), np.ones((2, 3)), TrainConfig(loss="combined"))


def test_convex_probe_monotone():
    x = rng().standard_normal((5, 8))
    net = Network([Dense(1, 1, rng(2))], n_encoder=1)
    net.layers[0].params["W"][...] = 3.0
    net.layers[0].params["b"][...] = 2.0
    _, trace = train(net, x, TrainConfig(epochs=60, lr=1e-2, patience=100))
    assert all(b <= a + 1e-12 for a, b in zip(trace.loss, trace.loss[1:]))


def test_divergence_raises_with_trace():
    x = np.ones((2, 8))
    x[0, 3] = np.nan
    with pytest.raises(TrainingDivergence) as exc:
        train(build_autoencoder(8, 2, filters=2, lstm_units=2), x, TrainConfig(epochs=3))
    assert exc.value.trace is not None


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lr=0)
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)


def test_network_file_roundtrip(tmp_path):
    net = build_autoencoder(20, 4, filters=3, lstm_units=2, seed=8)
    path = save_network(net, tmp_path / "n.net", {"note": "x"})
    back, extra = load_network(path)
    x = rng().standard_normal((2, 20))
    assert extra == {"note": "x"}
    assert back.reconstruct(x).tobytes() == net.reconstruct(x).tobytes()
    (tmp_path / "bad.net").write_bytes(b"nope" * 10)
    with pytest.raises(ValueError):
        load_network(tmp_path / "bad.net")


@given(length=st.integers(8, 40), k=st.integers(1, 6))
@settings(max_examples=20, deadline=None)
def test_shape_contract_property(length, k):
    net = build_autoencoder(length, k, filters=2, kernel=3, lstm_units=2, seed=0)
    x = np.zeros((1, length))
    assert net.encode(x).shape == (1, -(-length // k))
    assert net.reconstruct(x).shape == (1, length)

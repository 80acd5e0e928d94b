import numpy as np
import pytest

from harmovid.diffusion import Adam, DenoiserConfig, DenoiserNet


def micro_net(seed=0, in_channels=7, out_channels=4):
    cfg = DenoiserConfig(in_channels=in_channels, out_channels=out_channels,
                         width=8, blocks=2, heads=2, temb_dim=8)
    return DenoiserNet(cfg, seed=seed)


def randomize_params(net, rng, scale=0.25):
    # the production head is zero-initialized; give every tensor mass so the
    # gradient check exercises all paths
    for k in net.params:
        net.params[k] = rng.normal(0.0, scale, net.params[k].shape)


class TestDenoiserForward:
    def test_output_shape_matches_target_channels(self):
        net = micro_net()
        x = np.random.default_rng(0).standard_normal((2, 3, 2, 4, 7))
        out = net.predict(x, np.array([5, 9]))
        assert out.shape == (2, 3, 2, 4, 4)

    def test_zero_head_predicts_zero(self):
        net = micro_net()
        x = np.random.default_rng(1).standard_normal((1, 2, 2, 2, 7))
        out = net.predict(x, np.array([3]))
        np.testing.assert_array_equal(out, 0.0)

    def test_rejects_wrong_channel_count(self):
        net = micro_net()
        x = np.zeros((1, 2, 2, 2, 5))
        with pytest.raises(ValueError, match="channels"):
            net.predict(x, np.array([1]))

    def test_batch_items_independent_and_order_equivariant(self):
        rng = np.random.default_rng(2)
        net = micro_net()
        randomize_params(net, rng)
        a = rng.standard_normal((1, 2, 2, 2, 7))
        b = rng.standard_normal((1, 2, 2, 2, 7))
        ts = np.array([4, 11])
        joint = net.predict(np.concatenate([a, b]), ts)
        swapped = net.predict(np.concatenate([b, a]), ts[::-1])
        np.testing.assert_array_equal(joint[0], swapped[1])
        np.testing.assert_array_equal(joint[1], swapped[0])
        solo = net.predict(a, ts[:1])
        np.testing.assert_allclose(joint[0], solo[0], atol=1e-12)

    def test_timestep_changes_output(self):
        rng = np.random.default_rng(3)
        net = micro_net()
        randomize_params(net, rng)
        x = rng.standard_normal((1, 2, 2, 2, 7))
        out1 = net.predict(x, np.array([1]))
        out2 = net.predict(x, np.array([40]))
        assert np.abs(out1 - out2).max() > 1e-8


class TestGradientCheck:
    def test_analytic_matches_central_differences(self):
        rng = np.random.default_rng(4)
        net = micro_net(in_channels=5, out_channels=3)
        randomize_params(net, rng)
        x = rng.standard_normal((2, 2, 2, 2, 5))
        ts = np.array([3, 47])
        target = rng.standard_normal((2, 2, 2, 2, 3))

        _, grads, _ = net.mse_and_grad(x, ts, target)

        def loss_at(params):
            saved = net.params
            net.params = params
            out = net.predict(x, ts)
            net.params = saved
            diff = out - target
            return float(np.mean(diff * diff))

        h = 1e-4
        worst = 0.0
        for name, g in grads.items():
            flat_param = net.params[name]
            it = np.ndindex(flat_param.shape)
            for idx in it:
                plus = {k: v.copy() for k, v in net.params.items()}
                minus = {k: v.copy() for k, v in net.params.items()}
                plus[name][idx] += h
                minus[name][idx] -= h
                fd = (loss_at(plus) - loss_at(minus)) / (2.0 * h)
                ga = g[idx]
                rel = abs(ga - fd) / max(abs(ga) + abs(fd), 1e-4)
                worst = max(worst, rel)
        assert worst < 1e-3


class TestAdam:
    def test_descends_on_quadratic(self):
        params = {"w": np.array([5.0, -3.0])}
        opt = Adam(lr=0.1)
        for _ in range(300):
            grads = {"w": 2.0 * params["w"]}
            opt.step(params, grads)
        assert np.abs(params["w"]).max() < 1e-2

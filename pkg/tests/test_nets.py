import numpy as np
import pytest

from gamp.nets import (
    AdamState,
    MlpGrads,
    MlpParams,
    adam_step,
    init_mlp,
    input_grad_penalty_backward,
    mlp_backward,
    mlp_forward,
)


def random_net(rng, hidden_act="tanh", out_act="identity", max_depth=3, max_width=16):
    depth = int(rng.integers(1, max_depth + 1))
    dims = [int(rng.integers(1, max_width + 1)) for _ in range(depth + 1)]
    net = init_mlp(dims, rng, hidden_act, out_act)
    # non-zero biases so their gradients are exercised away from zero
    for b in net.biases:
        b += rng.normal(scale=0.3, size=b.shape)
    return net


def fd_param_grads(params, x, upstream, h=1e-5):
    """Central finite differences of upstream.output w.r.t. every parameter."""
    def loss():
        return float(np.dot(upstream, mlp_forward(params, x)))

    grads = MlpGrads.zeros_like(params)
    for arrs, outs in ((params.weights, grads.weights), (params.biases, grads.biases)):
        for p, g in zip(arrs, outs):
            flat_p, flat_g = p.ravel(), g.ravel()
            for i in range(flat_p.size):
                orig = flat_p[i]
                flat_p[i] = orig + h
                up = loss()
                flat_p[i] = orig - h
                down = loss()
                flat_p[i] = orig
                flat_g[i] = (up - down) / (2 * h)
    return grads


def max_rel_err(a, b, floor=1e-6):
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


class TestForward:
    def test_zero_net_identity_output(self):
        net = MlpParams([3, 4, 2], [np.zeros((4, 3)), np.zeros((2, 4))], [np.zeros(4), np.zeros(2)])
        assert np.array_equal(mlp_forward(net, np.array([1.0, -2.0, 0.5])), np.zeros(2))

    def test_affine_by_hand(self):
        net = MlpParams([1, 1], [np.array([[2.0]])], [np.array([1.0])])
        assert mlp_forward(net, np.array([3.0]))[0] == pytest.approx(7.0)

    def test_sigmoid_output_in_open_interval(self):
        rng = np.random.default_rng(0)
        net = init_mlp([4, 8, 8, 1], rng, "tanh", "sigmoid")
        for _ in range(20):
            y = mlp_forward(net, rng.normal(size=4))
            assert 0.0 < y[0] < 1.0

    def test_dimension_mismatch_error(self):
        rng = np.random.default_rng(0)
        net = init_mlp([4, 3], rng)
        with pytest.raises(ValueError, match="input length 5, expected 4"):
            mlp_forward(net, np.zeros(5))

    def test_forward_is_pure(self):
        rng = np.random.default_rng(1)
        net = init_mlp([6, 8, 2], rng, "elu")
        x = rng.normal(size=6)
        a = mlp_forward(net, x)
        b = mlp_forward(net, x)
        assert np.array_equal(a, b)

    def test_batched_matches_per_sample(self):
        rng = np.random.default_rng(2)
        net = init_mlp([5, 7, 3], rng, "elu")
        xs = rng.normal(size=(11, 5))
        batched = mlp_forward(net, xs)
        for i, x in enumerate(xs):
            # BLAS may round gemm and gemv differently; semantics must agree
            assert np.allclose(batched[i], mlp_forward(net, x), atol=1e-13)


class TestBackward:
    def test_linear_case_by_hand(self):
        net = MlpParams([1, 1], [np.array([[2.0]])], [np.array([0.0])])
        grads, gx = mlp_backward(net, np.array([3.0]), np.array([1.0]))
        assert grads.weights[0][0, 0] == pytest.approx(3.0)
        assert gx[0] == pytest.approx(2.0)

    def test_zero_upstream_zero_grads(self):
        rng = np.random.default_rng(3)
        net = random_net(rng)
        x = rng.normal(size=net.layer_dims[0])
        grads, gx = mlp_backward(net, x, np.zeros(net.layer_dims[-1]))
        assert np.all(gx == 0.0)
        for g in grads.weights + grads.biases:
            assert np.all(g == 0.0)

    @pytest.mark.parametrize("hidden,out", [("tanh", "identity"), ("elu", "sigmoid"), ("tanh", "sigmoid")])
    def test_param_grads_match_finite_differences(self, hidden, out):
        rng = np.random.default_rng(4)
        for _ in range(5):
            net = random_net(rng, hidden, out, max_width=8)
            x = rng.normal(size=net.layer_dims[0])
            upstream = rng.normal(size=net.layer_dims[-1])
            grads, _ = mlp_backward(net, x, upstream)
            fd = fd_param_grads(net, x, upstream)
            for a, b in zip(grads.weights + grads.biases, fd.weights + fd.biases):
                assert max_rel_err(a, b) < 1e-5

    def test_input_grads_match_finite_differences(self):
        rng = np.random.default_rng(5)
        h = 1e-5
        for _ in range(10):
            net = random_net(rng, "tanh", "sigmoid")
            d = net.layer_dims[0]
            x = rng.normal(size=d)
            upstream = rng.normal(size=net.layer_dims[-1])
            _, gx = mlp_backward(net, x, upstream)
            fd = np.zeros(d)
            for i in range(d):
                e = np.zeros(d)
                e[i] = h
                fd[i] = (
                    np.dot(upstream, mlp_forward(net, x + e))
                    - np.dot(upstream, mlp_forward(net, x - e))
                ) / (2 * h)
            assert max_rel_err(gx, fd) < 1e-5

    def test_batched_accumulates_param_grads(self):
        rng = np.random.default_rng(6)
        net = random_net(rng, "elu")
        xs = rng.normal(size=(7, net.layer_dims[0]))
        ups = rng.normal(size=(7, net.layer_dims[-1]))
        grads, gxs = mlp_backward(net, xs, ups)
        acc = MlpGrads.zeros_like(net)
        for x, u in zip(xs, ups):
            g, gx1 = mlp_backward(net, x, u)
            acc.add_(g)
        for a, b in zip(grads.weights + grads.biases, acc.weights + acc.biases):
            assert np.allclose(a, b, atol=1e-12)
        assert gxs.shape == xs.shape

    def test_shape_mismatch_error(self):
        rng = np.random.default_rng(7)
        net = init_mlp([4, 2], rng)
        with pytest.raises(ValueError):
            mlp_backward(net, np.zeros(4), np.zeros(3))


class TestGradientPenalty:
    def test_penalty_value_matches_input_grad_norm(self):
        rng = np.random.default_rng(8)
        net = init_mlp([6, 8, 1], rng, "tanh", "sigmoid")
        x = rng.normal(size=6)
        _, gx = mlp_backward(net, x, np.array([1.0]))
        p, _ = input_grad_penalty_backward(net, x)
        assert p == pytest.approx(float(np.dot(gx, gx)), rel=1e-12)

    def test_penalty_param_grads_match_finite_differences(self):
        rng = np.random.default_rng(9)
        h = 1e-5
        for _ in range(4):
            dims = [int(rng.integers(2, 7)) for _ in range(int(rng.integers(1, 3)) + 1)] + [1]
            net = init_mlp(dims, rng, "tanh", "sigmoid")
            for b in net.biases:
                b += rng.normal(scale=0.2, size=b.shape)
            xs = rng.normal(size=(3, dims[0]))
            _, grads = input_grad_penalty_backward(net, xs)

            def penalty():
                total = 0.0
                for x in xs:
                    _, gx = mlp_backward(net, x, np.array([1.0]))
                    total += float(np.dot(gx, gx))
                return total / len(xs)

            for arrs, outs in ((net.weights, grads.weights), (net.biases, grads.biases)):
                for p, g in zip(arrs, outs):
                    flat = p.ravel()
                    gf = g.ravel()
                    for i in range(flat.size):
                        orig = flat[i]
                        flat[i] = orig + h
                        up = penalty()
                        flat[i] = orig - h
                        down = penalty()
                        flat[i] = orig
                        fd = (up - down) / (2 * h)
                        assert abs(gf[i] - fd) < 1e-6 * max(1.0, abs(fd))


class TestAdam:
    def test_zero_grad_leaves_params(self):
        rng = np.random.default_rng(10)
        net = random_net(rng)
        before = net.copy()
        state = AdamState.for_params(net, lr=0.1)
        adam_step(net, MlpGrads.zeros_like(net), state)
        for a, b in zip(net.weights, before.weights):
            assert np.array_equal(a, b)
        assert state.step == 1

    def test_first_step_hand_computed(self):
        # one scalar weight, g = 1, lr = 0.1: bias-corrected step is
        # lr * 1 / (1 + eps) ~ 0.1
        net = MlpParams([1, 1], [np.array([[0.5]])], [np.array([0.0])])
        state = AdamState.for_params(net, lr=0.1)
        g = MlpGrads([np.array([[1.0]])], [np.array([0.0])])
        adam_step(net, g, state)
        expected = 0.5 - 0.1 * 1.0 / (1.0 + state.eps)
        assert net.weights[0][0, 0] == pytest.approx(expected, abs=1e-12)

    def test_second_step_matches_recurrence(self):
        net = MlpParams([1, 1], [np.array([[0.5]])], [np.array([0.0])])
        state = AdamState.for_params(net, lr=0.1)
        g = MlpGrads([np.array([[1.0]])], [np.array([0.0])])
        adam_step(net, g, state)
        adam_step(net, g, state)
        # hand-evaluate the two-step Adam recurrence for constant unit grads
        m = v = 0.0
        p = 0.5
        for t in (1, 2):
            m = 0.9 * m + 0.1 * 1.0
            v = 0.999 * v + 0.001 * 1.0
            p -= 0.1 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + state.eps)
        assert net.weights[0][0, 0] == pytest.approx(p, abs=1e-14)
        assert state.step == 2

    def test_non_finite_grad_names_layer(self):
        rng = np.random.default_rng(11)
        net = init_mlp([3, 4, 2], rng)
        state = AdamState.for_params(net)
        g = MlpGrads.zeros_like(net)
        g.weights[1][0, 0] = np.nan
        with pytest.raises(ValueError, match="layer 1"):
            adam_step(net, g, state)

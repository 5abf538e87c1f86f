import numpy as np
import pytest

from metaprior import graph, net
from metaprior.data import Batch
from metaprior.meta import Architecture, GeneratedWeights


def make_weights(layers):
    return GeneratedWeights([(graph.const(w), graph.const(b)) for w, b in layers])


class TestForward:
    def test_all_zero_weights_give_zero(self):
        arch = Architecture([2, 3, 1], "tanh")
        w = make_weights([(np.zeros((3, 2)), np.zeros(3)),
                          (np.zeros((1, 3)), np.zeros(1))])
        x = np.random.default_rng(0).uniform(-3, 3, (5, 2))
        np.testing.assert_array_equal(net.forward(arch, w, x).value, np.zeros((5, 1)))

    def test_identity_chain_at_zero(self):
        arch = Architecture([1, 1, 1], "tanh")
        w = make_weights([(np.ones((1, 1)), np.zeros(1)),
                          (np.ones((1, 1)), np.zeros(1))])
        assert net.forward(arch, w, np.zeros((1, 1))).value[0, 0] == 0.0

    def test_matches_scalar_loop_oracle(self):
        rng = np.random.default_rng(1)
        arch = Architecture([2, 3, 1], "tanh")
        w1, b1 = rng.uniform(-1, 1, (3, 2)), rng.uniform(-1, 1, 3)
        w2, b2 = rng.uniform(-1, 1, (1, 3)), rng.uniform(-1, 1, 1)
        x = rng.uniform(-2, 2, (6, 2))

        # naive per-unit evaluation, no matrix ops
        def oracle(xrow):
            h = []
            for i in range(3):
                pre = b1[i]
                for j in range(2):
                    pre += w1[i, j] * xrow[j]
                h.append(np.tanh(pre))
            out = b2[0]
            for i in range(3):
                out += w2[0, i] * h[i]
            return out

        got = net.forward(arch, make_weights([(w1, b1), (w2, b2)]), x).value
        want = np.array([[oracle(r)] for r in x])
        np.testing.assert_allclose(got, want, atol=1e-12)

    def test_single_affine_layer_is_linear_in_x(self):
        # with no hidden layer and zero bias the map is exactly linear
        arch = Architecture([3, 2], "tanh")
        rng = np.random.default_rng(2)
        w = make_weights([(rng.uniform(-1, 1, (2, 3)), np.zeros(2))])
        a, b = rng.uniform(-1, 1, (4, 3)), rng.uniform(-1, 1, (4, 3))
        lhs = net.forward(arch, w, a + b).value
        rhs = net.forward(arch, w, a).value + net.forward(arch, w, b).value
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_shape_mismatch(self):
        arch = Architecture([2, 3, 1], "tanh")
        w = make_weights([(np.zeros((3, 2)), np.zeros(3)),
                          (np.zeros((1, 3)), np.zeros(1))])
        with pytest.raises(graph.ShapeError):
            net.forward(arch, w, np.zeros((5, 3)))


class TestPredictive:
    def test_single_sample_equals_forward(self):
        arch = Architecture([1, 2, 1], "tanh")
        rng = np.random.default_rng(3)
        layers = [(rng.uniform(-1, 1, (2, 1)), rng.uniform(-1, 1, 2)),
                  (rng.uniform(-1, 1, (1, 2)), rng.uniform(-1, 1, 1))]
        w = make_weights(layers)
        x = rng.uniform(-2, 2, (5, 1))
        pred = net.predictive(arch, lambda s: w, x, 1, "gaussian", obs_sigma=0.5)
        np.testing.assert_allclose(pred.mean, net.forward(arch, w, x).value,
                                   atol=1e-12)
        np.testing.assert_allclose(pred.std, 0.5 * np.ones_like(pred.mean),
                                   atol=1e-12)

    def test_identical_samples_fold_obs_noise_only(self):
        arch = Architecture([1, 2, 1], "tanh")
        w = make_weights([(np.ones((2, 1)), np.zeros(2)),
                          (np.ones((1, 2)), np.zeros(1))])
        pred = net.predictive(arch, lambda s: w, np.ones((3, 1)), 7,
                              "gaussian", obs_sigma=1.3)
        np.testing.assert_allclose(pred.std, 1.3, atol=1e-12)

    def test_mixture_closer_to_uniform_than_either_draw(self):
        """Two sign-flipped weight draws: the averaged class probabilities sit
        nearer 1/2 than either component."""
        arch = Architecture([1, 1, 2], "tanh")
        w_pos = make_weights([(np.ones((1, 1)), np.zeros(1)),
                              (np.array([[3.0], [-3.0]]), np.zeros(2))])
        w_neg = make_weights([(np.ones((1, 1)), np.zeros(1)),
                              (np.array([[-3.0], [3.0]]), np.zeros(2))])
        draws = [w_pos, w_neg]
        x = np.ones((1, 1))
        pred = net.predictive(arch, lambda s: draws[s % 2], x, 2, "categorical")
        single = net.predictive(arch, lambda s: w_pos, x, 1, "categorical")
        assert abs(pred.probs[0, 0] - 0.5) < abs(single.probs[0, 0] - 0.5)
        np.testing.assert_allclose(pred.probs[0, 0], 0.5, atol=1e-12)

    def test_probs_rows_sum_to_one(self):
        arch = Architecture([2, 3, 4], "relu")
        rng = np.random.default_rng(4)

        def sampler(s):
            r = np.random.default_rng(s)
            return make_weights([(r.uniform(-2, 2, (3, 2)), r.uniform(-1, 1, 3)),
                                 (r.uniform(-2, 2, (4, 3)), r.uniform(-1, 1, 4))])

        pred = net.predictive(arch, sampler, rng.uniform(-2, 2, (9, 2)), 5,
                              "categorical")
        np.testing.assert_allclose(pred.probs.sum(axis=1), 1.0, atol=1e-12)

    def test_needs_at_least_one_sample(self):
        arch = Architecture([1, 2], "tanh")
        with pytest.raises(ValueError):
            net.predictive(arch, lambda s: None, np.zeros((1, 1)), 0, "gaussian")


class TestLoglik:
    def test_batch_loglik_dispatch(self):
        arch = Architecture([2, 2], "tanh")
        w = make_weights([(np.zeros((2, 2)), np.zeros(2))])
        reg = net.batch_loglik(arch, w, Batch(np.zeros((3, 2)), np.zeros((3, 2))),
                               "gaussian", 1.0)
        assert reg.value == pytest.approx(6 * -0.9189385332046727, rel=1e-12)
        cls = net.batch_loglik(arch, w,
                               Batch(np.zeros((3, 2)), np.array([0, 1, 0])),
                               "categorical")
        assert cls.value == pytest.approx(-3 * np.log(2.0), rel=1e-12)

    def test_nll_helpers(self):
        arch = Architecture([1, 2], "tanh")
        w = make_weights([(np.zeros((2, 1)), np.zeros(2))])
        pred = net.predictive(arch, lambda s: w, np.zeros((4, 1)), 3, "categorical")
        assert net.classification_nll(pred, np.array([0, 1, 0, 1])) == pytest.approx(
            np.log(2.0), rel=1e-12)
        predr = net.predictive(arch, lambda s: make_weights(
            [(np.zeros((1, 1)), np.zeros(1))]),
            np.zeros((4, 1)), 3, "gaussian", obs_sigma=1.0)
        assert net.regression_nll(predr, np.zeros((4, 1)), 1.0) == pytest.approx(
            0.9189385332046727, rel=1e-12)

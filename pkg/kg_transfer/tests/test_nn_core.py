import numpy as np
from django.test import SimpleTestCase

from kg_transfer.exceptions import ShapeError, StateError, TrainingError
from kg_transfer.nn_core import (
    Activation,
    AdamState,
    DenseLayer,
    DenseNet,
    InitScheme,
    SparseRowAdam,
    adam_step,
    build_dense_net,
    init_dense,
)

from .helpers import FD_TOLERANCE, numerical_gradient, relative_error, seeded_draws


def linear(weight, bias=None, activation=Activation.NONE, **kwargs):
    weight = np.asarray(weight, dtype=np.float64)
    bias = np.zeros(weight.shape[0]) if bias is None else np.asarray(bias, dtype=np.float64)
    return DenseLayer(weight, bias, activation, **kwargs)


class ForwardTests(SimpleTestCase):

    def test_identity_layer(self):
        net = DenseNet([linear(np.eye(2))])
        np.testing.assert_array_equal(net([1.0, 2.0]), [1.0, 2.0])

    def test_leaky_relu(self):
        net = DenseNet([linear(np.eye(2), activation=Activation.LEAKY_RELU, slope=0.01)])
        np.testing.assert_allclose(net([-1.0, 2.0]), [-0.01, 2.0])

    def test_sigmoid(self):
        net = DenseNet([linear([[1.0]], activation=Activation.SIGMOID)])
        np.testing.assert_allclose(net([0.0]), [0.5])

    def test_batch_rows_match_single_vectors(self):
        net = build_dense_net([3, 5, 2], [Activation.LEAKY_RELU, Activation.NONE], np.random.default_rng(0),
                              layer_norms=[True, False])
        batch = np.random.default_rng(1).normal(size=(4, 3))
        out = net(batch)
        for row, expected in zip(batch, out):
            np.testing.assert_allclose(net(row), expected, rtol=0, atol=1e-12)

    def test_layer_norm_zero_variance_gives_shift(self):
        layer = linear(np.zeros((3, 2)), activation=Activation.NONE, layer_norm=True)
        layer.shift = np.array([0.1, 0.2, 0.3])
        net = DenseNet([layer])
        np.testing.assert_allclose(net([5.0, -1.0]), [0.1, 0.2, 0.3])

    def test_input_width_mismatch(self):
        net = DenseNet([linear(np.eye(2))])
        with self.assertRaises(ShapeError):
            net([1.0, 2.0, 3.0])

    def test_layers_must_chain(self):
        with self.assertRaises(ShapeError):
            DenseNet([linear(np.eye(2)), linear(np.eye(3))])


class BackwardTests(SimpleTestCase):

    def test_linear_weight_gradient(self):
        net = DenseNet([linear([[0.5, -0.5]])])
        _, cache = net.forward([1.0, 2.0])
        grads, dx = net.backward(cache, np.array([1.0]))
        np.testing.assert_array_equal(grads['0.weight'], [[1.0, 2.0]])
        np.testing.assert_array_equal(grads['0.bias'], [1.0])
        np.testing.assert_array_equal(dx, [0.5, -0.5])

    def test_gradients_match_finite_differences(self):
        configurations = [
            ([3, 6, 4], [Activation.LEAKY_RELU, Activation.NONE], [False, False]),
            ([4, 4, 1], [Activation.LEAKY_RELU, Activation.SIGMOID], [True, False]),
            ([5, 3], [Activation.SIGMOID], [True]),
        ]
        for case, (dims, activations, norms) in enumerate(configurations):
            for draw, rng in seeded_draws(100 + case):
                with self.subTest(dims=dims, draw=draw):
                    net = build_dense_net(dims, activations, rng, layer_norms=norms)
                    for layer in net.layers:
                        if layer.layer_norm:
                            layer.gain = rng.uniform(0.5, 1.5, size=layer.out_dim)
                            layer.shift = rng.normal(size=layer.out_dim)
                    x = rng.normal(size=(3, dims[0]))
                    upstream = rng.normal(size=(3, dims[-1]))

                    def f():
                        return float((net(x) * upstream).sum())

                    _, cache = net.forward(x)
                    grads, dx = net.backward(cache, upstream)
                    for name, value in net.parameters().items():
                        self.assertLess(relative_error(grads[name], numerical_gradient(f, value)), FD_TOLERANCE,
                                        name)
                    self.assertLess(relative_error(dx, numerical_gradient(f, x)), FD_TOLERANCE)

    def test_stale_cache_is_rejected(self):
        net = DenseNet([linear(np.eye(2))])
        other = DenseNet([linear(np.ones((3, 2)))])
        _, cache = other.forward([1.0, 1.0])
        with self.assertRaises(StateError):
            net.backward(cache, np.ones(3))

    def test_output_gradient_shape_is_checked(self):
        net = DenseNet([linear(np.eye(2))])
        _, cache = net.forward(np.ones((2, 2)))
        with self.assertRaises(StateError):
            net.backward(cache, np.ones((3, 2)))


class InitTests(SimpleTestCase):

    def test_orthogonal_square(self):
        w = init_dense((4, 4), InitScheme.ORTHOGONAL, np.random.default_rng(0))
        self.assertLess(np.abs(w.T @ w - np.eye(4)).max(), 1e-6)

    def test_orthogonal_tall(self):
        w = init_dense((6, 3), InitScheme.ORTHOGONAL, np.random.default_rng(0))
        self.assertLess(np.abs(w.T @ w - np.eye(3)).max(), 1e-6)

    def test_orthogonal_wide(self):
        w = init_dense((3, 6), InitScheme.ORTHOGONAL, np.random.default_rng(0))
        self.assertEqual(w.shape, (3, 6))
        self.assertLess(np.abs(w @ w.T - np.eye(3)).max(), 1e-6)

    def test_fan_uniform_bound(self):
        w = init_dense((100, 100), InitScheme.FAN_UNIFORM, np.random.default_rng(0))
        self.assertLessEqual(np.abs(w).max(), np.sqrt(6 / 100))

    def test_same_seed_same_weights(self):
        first = init_dense((5, 3), 'orthogonal', np.random.default_rng(9))
        second = init_dense((5, 3), 'orthogonal', np.random.default_rng(9))
        np.testing.assert_array_equal(first, second)


class AdamTests(SimpleTestCase):

    def test_first_step_magnitude_is_lr(self):
        params = {'w': np.array([1.0, -2.0, 3.0])}
        state = AdamState.for_params(params)
        adam_step(params, {'w': np.array([0.5, -4.0, 1e-3])}, state, lr=0.1)
        np.testing.assert_allclose(params['w'], [0.9, -1.9, 2.9], atol=1e-4)
        self.assertEqual(state.step_count, 1)

    def test_zero_gradient_leaves_params(self):
        params = {'w': np.array([1.0, 2.0])}
        adam_step(params, {'w': np.zeros(2)}, AdamState.for_params(params), lr=0.1)
        np.testing.assert_array_equal(params['w'], [1.0, 2.0])

    def test_identical_optimizers_agree(self):
        rng = np.random.default_rng(3)
        start = rng.normal(size=(2, 3))
        first = {'w': start.copy()}
        second = {'w': start.copy()}
        first_state, second_state = AdamState.for_params(first), AdamState.for_params(second)
        for _ in range(5):
            grad = rng.normal(size=(2, 3))
            adam_step(first, {'w': grad}, first_state, 0.01)
            adam_step(second, {'w': grad}, second_state, 0.01)
        np.testing.assert_array_equal(first['w'], second['w'])

    def test_non_finite_gradient_names_tensor(self):
        params = {'D.0.weight': np.zeros(2)}
        with self.assertRaises(TrainingError) as cm:
            adam_step(params, {'D.0.weight': np.array([np.nan, 0.0])}, AdamState.for_params(params), 0.1)
        self.assertIn('D.0.weight', str(cm.exception))
        np.testing.assert_array_equal(params['D.0.weight'], [0.0, 0.0])


class SparseRowAdamTests(SimpleTestCase):

    def test_untouched_rows_stay_fixed(self):
        matrix = np.ones((4, 2))
        optimizer = SparseRowAdam(matrix.shape, 'entities')
        optimizer.step(matrix, np.array([1, 3]), np.array([[1.0, -1.0], [2.0, 0.0]]), lr=0.1)
        np.testing.assert_array_equal(matrix[[0, 2]], np.ones((2, 2)))
        np.testing.assert_allclose(matrix[1], [0.9, 1.1], atol=1e-6)
        np.testing.assert_allclose(matrix[3], [0.9, 1.0], atol=1e-6)

    def test_matches_dense_adam_when_every_row_is_touched(self):
        rng = np.random.default_rng(8)
        start = rng.normal(size=(3, 2))
        sparse = start.copy()
        dense = {'m': start.copy()}
        optimizer = SparseRowAdam(sparse.shape, 'm')
        state = AdamState.for_params(dense)
        for _ in range(4):
            grad = rng.normal(size=(3, 2))
            optimizer.step(sparse, np.arange(3), grad, 0.05)
            adam_step(dense, {'m': grad}, state, 0.05)
        np.testing.assert_allclose(sparse, dense['m'], rtol=0, atol=1e-12)

    def test_gradient_shape_checked(self):
        optimizer = SparseRowAdam((3, 2), 'relations')
        with self.assertRaises(ShapeError):
            optimizer.step(np.zeros((3, 2)), np.array([0]), np.zeros((2, 2)), 0.1)


class LayerNormPropertyTests(SimpleTestCase):

    def test_unit_gain_output_is_standardized(self):
        for draw, rng in seeded_draws(50):
            with self.subTest(draw=draw):
                net = build_dense_net([5, 7], [Activation.LEAKY_RELU], rng, layer_norms=[True])
                out = net(rng.normal(size=(16, 5)) * rng.uniform(0.5, 5.0))
                np.testing.assert_allclose(out.mean(axis=1), 0.0, atol=1e-10)
                np.testing.assert_allclose(out.var(axis=1), 1.0, atol=1e-8)

import numpy as np
from django.test import SimpleTestCase

from kg_transfer.adversarial import (
    Discriminator,
    Generator,
    build_discriminator,
    build_generator,
    consistency_weights,
    discriminate,
    discriminate_batch,
    discriminator_loss,
    generator_loss,
    sample_noise,
    sample_noise_batch,
)
from kg_transfer.exceptions import ShapeError
from kg_transfer.nn_core import Activation, DenseLayer, DenseNet
from kg_transfer.transfer import build_transition_network

from .helpers import FD_TOLERANCE, identity_transition, numerical_gradient, relative_error, seeded_draws


def logit(p):
    return float(np.log(p / (1.0 - p)))


def first_coordinate_discriminator(scale=1.0):
    """D(e, c) = sigmoid(scale * e) on one-dimensional pairs"""
    return Discriminator(DenseNet([DenseLayer(np.array([[scale, 0.0]]), np.zeros(1), Activation.SIGMOID)]))


def flat_discriminator(n, rng):
    D = build_discriminator(n, rng)
    D.net.layers[-1].weight[:] = 0.0
    D.net.layers[-1].bias[:] = 0.0
    return D


class LowestDraw:
    """Stands in for a Generator whose uniform() returns its lower bound"""

    def uniform(self, low, high, size):
        return np.full(size, low, dtype=np.float64)


def linear_generator(matrix):
    n = matrix.shape[0]
    weight = np.concatenate([matrix, np.zeros((n, n))], axis=1)
    return Generator(DenseNet([DenseLayer(weight, np.zeros(n), Activation.NONE)]))


class ModuleShapeTests(SimpleTestCase):

    def test_generator_and_discriminator_widths(self):
        rng = np.random.default_rng(0)
        G = build_generator(3, rng)
        D = build_discriminator(3, rng)
        self.assertEqual(G.net.signature(), ((6, 6), (3, 6)))
        self.assertEqual(D.net.signature(), ((3, 6), (1, 3)))
        self.assertTrue(D.net.layers[0].layer_norm)
        self.assertEqual(D.n, 3)

    def test_noise_range_and_determinism(self):
        first = sample_noise(50, np.random.default_rng(1))
        np.testing.assert_array_equal(first, sample_noise(50, np.random.default_rng(1)))
        self.assertTrue(np.all(first > -1.0) and np.all(first < 1.0))

    def test_noise_lower_end_excludes_minus_one(self):
        smallest = sample_noise(3, LowestDraw())
        self.assertTrue(np.all(smallest > -1.0))
        self.assertTrue(np.all(sample_noise_batch(2, 3, LowestDraw()) > -1.0))

    def test_noise_mean_is_near_zero(self):
        draws = sample_noise_batch(1000, 100, np.random.default_rng(11))
        self.assertLess(abs(float(draws.mean())), 0.02)
        self.assertTrue(np.all(np.abs(draws) < 1.0))

    def test_discriminator_output_in_open_interval(self):
        rng = np.random.default_rng(2)
        D = build_discriminator(4, rng)
        outputs = discriminate_batch(D, rng.normal(size=(20, 4)), rng.normal(size=(20, 4)))
        self.assertTrue(np.all(outputs > 0.0) and np.all(outputs < 1.0))

    def test_zeroed_final_layer_gives_one_half(self):
        rng = np.random.default_rng(3)
        self.assertEqual(discriminate(flat_discriminator(4, rng), rng.normal(size=4), rng.normal(size=4)), 0.5)

    def test_pair_width_mismatch(self):
        D = build_discriminator(4, np.random.default_rng(0))
        with self.assertRaises(ShapeError):
            discriminate(D, np.ones(4), np.ones(3))


class DiscriminatorLossTests(SimpleTestCase):

    def test_undecided_discriminator(self):
        rng = np.random.default_rng(0)
        D = flat_discriminator(3, rng)
        W = build_transition_network(4, 3, rng)
        result = discriminator_loss(D, W, rng.normal(size=(5, 4)), rng.normal(size=(5, 3)),
                                    rng.normal(size=(7, 3)), rng.normal(size=(7, 3)))
        self.assertAlmostEqual(result.loss, 2 * np.log(2))

    def test_hand_evaluated_probabilities(self):
        D = first_coordinate_discriminator()
        result = discriminator_loss(D, identity_transition(1), np.array([[0.4]]), np.array([[logit(0.8)]]),
                                    np.array([[logit(0.3)]]), np.array([[1.0]]))
        self.assertAlmostEqual(result.loss, -np.log(0.8) - np.log(0.7))
        self.assertAlmostEqual(result.loss, 0.5798, places=4)

    def test_perfect_discriminator_is_clamped(self):
        D = first_coordinate_discriminator(scale=100.0)
        result = discriminator_loss(D, identity_transition(1), np.array([[0.0]]), np.array([[1.0]]),
                                    np.array([[-1.0]]), np.array([[0.0]]))
        self.assertGreater(result.loss, 0.0)
        self.assertLess(result.loss, 1e-6)
        for grad in result.grads.values():
            self.assertFalse(np.any(grad))

    def test_gradients_match_finite_differences(self):
        for draw, rng in seeded_draws(5):
            with self.subTest(draw=draw):
                D = build_discriminator(3, rng)
                W = build_transition_network(4, 3, rng)
                teacher, real = rng.normal(size=(4, 4)), rng.normal(size=(4, 3))
                conditions, candidates = rng.normal(size=(6, 3)), rng.normal(size=(6, 3))
                result = discriminator_loss(D, W, teacher, real, conditions, candidates)

                def f():
                    return discriminator_loss(D, W, teacher, real, conditions, candidates).loss

                for name, value in D.net.parameters().items():
                    self.assertLess(relative_error(result.grads[name], numerical_gradient(f, value)), FD_TOLERANCE,
                                    name)
                for name, value in W.net.parameters().items():
                    self.assertLess(relative_error(result.w_grads[name], numerical_gradient(f, value)), FD_TOLERANCE,
                                    name)


class GeneratorLossTests(SimpleTestCase):

    def test_identity_generator_with_undecided_discriminator(self):
        rng = np.random.default_rng(0)
        G = linear_generator(np.eye(2))
        D = flat_discriminator(2, rng)
        result = generator_loss(G, D, rng.normal(size=(3, 2)), rng.normal(size=(3, 2)))
        self.assertAlmostEqual(result.loss, np.log(2))
        self.assertEqual(result.w_grads, {})

    def test_orthogonal_generator_adds_one(self):
        rng = np.random.default_rng(1)
        G = linear_generator(np.array([[0.0, -1.0], [1.0, 0.0]]))
        D = flat_discriminator(2, rng)
        result = generator_loss(G, D, rng.normal(size=(4, 2)), rng.normal(size=(4, 2)), lambda_g=1.0)
        self.assertAlmostEqual(result.loss, np.log(2) + 1.0)

    def test_gradients_match_finite_differences(self):
        for draw, rng in seeded_draws(7):
            with self.subTest(draw=draw):
                G = build_generator(3, rng)
                D = build_discriminator(3, rng)
                conditions, noises = rng.normal(size=(5, 3)), sample_noise_batch(5, 3, rng)
                result = generator_loss(G, D, conditions, noises, lambda_g=0.7)
                d_before = D.net.snapshot()

                def f():
                    return generator_loss(G, D, conditions, noises, lambda_g=0.7).loss

                self.assertEqual(set(result.grads), set(G.net.parameters()))
                for name, value in G.net.parameters().items():
                    self.assertLess(relative_error(result.grads[name], numerical_gradient(f, value)), FD_TOLERANCE,
                                    name)
                for name, value in D.net.parameters().items():
                    np.testing.assert_array_equal(value, d_before[name])


class ConsistencyWeightTests(SimpleTestCase):

    def test_untrained_flat_discriminator(self):
        rng = np.random.default_rng(0)
        weights = consistency_weights(flat_discriminator(3, rng), build_transition_network(2, 3, rng),
                                      rng.normal(size=(4, 2)), rng.normal(size=(4, 3)))
        np.testing.assert_array_equal(weights, np.full(4, 0.5))

    def test_identical_pairs_identical_weights(self):
        rng = np.random.default_rng(1)
        D, W = build_discriminator(3, rng), build_transition_network(2, 3, rng)
        teacher, target = rng.normal(size=(1, 2)), rng.normal(size=(1, 3))
        weights = consistency_weights(D, W, np.repeat(teacher, 3, axis=0), np.repeat(target, 3, axis=0))
        self.assertEqual(len(set(weights.tolist())), 1)
        self.assertTrue(0.0 < weights[0] < 1.0)

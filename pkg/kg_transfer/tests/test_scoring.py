import numpy as np
from django.test import SimpleTestCase

from kg_transfer.exceptions import ShapeError
from kg_transfer.scoring import (
    EmbeddingTable,
    ModelKind,
    project_constraints,
    score,
    score_batch,
    score_grad,
    score_grad_batch,
)

from .helpers import FD_TOLERANCE, numerical_gradient, random_table, relative_error, seeded_draws


class ScoreValueTests(SimpleTestCase):

    def test_transe_translation_is_zero(self):
        self.assertEqual(score(ModelKind.TRANSE, [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]), 0.0)
        self.assertEqual(score(ModelKind.TRANSE, [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], norm_p=2), 0.0)

    def test_transe_nonzero_off_translation(self):
        self.assertAlmostEqual(score(ModelKind.TRANSE, [1.0, 0.0], [0.0, 1.0], [0.0, 0.0]), 2.0)
        self.assertAlmostEqual(score(ModelKind.TRANSE, [1.0, 0.0], [0.0, 1.0], [0.0, 0.0], norm_p=2), np.sqrt(2))

    def test_distmult(self):
        self.assertAlmostEqual(score(ModelKind.DISTMULT, [1.0, 2.0], [1.0, 1.0], [1.0, 1.0]), -3.0)

    def test_complex(self):
        self.assertAlmostEqual(score(ModelKind.COMPLEX, [1.0, 0.0], [1.0, 0.0], [1.0, 0.0]), -1.0)

    def test_complex_uses_conjugate_tail(self):
        # h = i, r = 1, t = i: Re(i * 1 * conj(i)) = 1
        self.assertAlmostEqual(score(ModelKind.COMPLEX, [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]), -1.0)

    def test_rotate_identity_rotation(self):
        h = np.array([0.3, -0.2, 0.5, 0.1])
        self.assertEqual(score(ModelKind.ROTATE, h, [0.0, 0.0], h), 0.0)

    def test_rotate_half_turn(self):
        # rotating 1+0i by pi gives -1, so t = -1 scores 0
        self.assertAlmostEqual(score(ModelKind.ROTATE, [1.0, 0.0], [np.pi], [-1.0, 0.0]), 0.0)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(0)
        for kind in ModelKind:
            table = random_table(kind, 5, 2, 6, rng)
            triplets = np.array([[0, 1, 2], [3, 0, 4], [1, 1, 1]])
            batch = table.score_triplets(triplets)
            single = [score(kind, table.entities[h], table.relations[r], table.entities[t], table.norm_p)
                      for h, r, t in triplets]
            np.testing.assert_allclose(batch, single, rtol=0, atol=1e-12)

    def test_dimension_mismatch(self):
        with self.assertRaises(ShapeError):
            score(ModelKind.TRANSE, [1.0, 0.0], [1.0], [1.0, 0.0])
        with self.assertRaises(ShapeError):
            score(ModelKind.COMPLEX, [1.0, 0.0, 1.0], [1.0, 0.0, 1.0], [1.0, 0.0, 1.0])
        with self.assertRaises(ShapeError):
            score(ModelKind.ROTATE, [1.0, 0.0], [1.0, 0.0], [1.0, 0.0])

    def test_translation_identity_for_both_norms(self):
        rng = np.random.default_rng(3)
        h, r = rng.normal(size=8), rng.normal(size=8)
        for p in (1, 2):
            self.assertEqual(score(ModelKind.TRANSE, h, r, h + r, norm_p=p), 0.0)
            self.assertGreater(score(ModelKind.TRANSE, h, r, h + r + 0.1, norm_p=p), 0.0)


class ScoreGradientTests(SimpleTestCase):

    def test_transe_l2_gradient(self):
        _, grads = score_grad(ModelKind.TRANSE, [1.0, 0.0], [0.0, 0.0], [0.0, 0.0], norm_p=2)
        np.testing.assert_allclose(grads.d_head, [1.0, 0.0])

    def test_distmult_head_gradient(self):
        _, grads = score_grad(ModelKind.DISTMULT, [1.0, 2.0], [2.0, 3.0], [1.0, 1.0])
        np.testing.assert_allclose(grads.d_head, [-2.0, -3.0])

    def test_transe_l1_zero_residual_subgradient(self):
        _, grads = score_grad(ModelKind.TRANSE, [1.0, 0.0], [0.0, 1.0], [1.0, 0.0])
        np.testing.assert_array_equal(grads.d_head, [0.0, 1.0])

    def test_transe_l2_zero_residual_subgradient(self):
        _, grads = score_grad(ModelKind.TRANSE, [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], norm_p=2)
        np.testing.assert_array_equal(grads.d_head, [0.0, 0.0])

    def test_gradients_match_finite_differences(self):
        cases = [
            (ModelKind.TRANSE, 1), (ModelKind.TRANSE, 2), (ModelKind.DISTMULT, None),
            (ModelKind.COMPLEX, None), (ModelKind.ROTATE, 1), (ModelKind.ROTATE, 2),
        ]
        for case, (kind, p) in enumerate(cases):
            for draw, rng in seeded_draws(case):
                with self.subTest(kind=kind.value, norm=p, draw=draw):
                    dim = 6
                    h = rng.normal(size=dim)
                    t = rng.normal(size=dim)
                    r = rng.uniform(-np.pi, np.pi, size=kind.relation_dim(dim)) if kind is ModelKind.ROTATE \
                        else rng.normal(size=dim)
                    _, grads = score_grad(kind, h, r, t, norm_p=p)

                    def f():
                        return score(kind, h, r, t, norm_p=p)

                    self.assertLess(relative_error(grads.d_head, numerical_gradient(f, h)), FD_TOLERANCE)
                    self.assertLess(relative_error(grads.d_relation, numerical_gradient(f, r)), FD_TOLERANCE)
                    self.assertLess(relative_error(grads.d_tail, numerical_gradient(f, t)), FD_TOLERANCE)

    def test_need_grad_false_returns_scores_only(self):
        rng = np.random.default_rng(2)
        table = random_table(ModelKind.DISTMULT, 4, 1, 4, rng)
        scores, grads = score_grad_batch(ModelKind.DISTMULT, table.entities[:2], table.relations[[0, 0]],
                                         table.entities[2:], need_grad=False)
        self.assertIsNone(grads)
        np.testing.assert_array_equal(
            scores, score_batch(ModelKind.DISTMULT, table.entities[:2], table.relations[[0, 0]], table.entities[2:]),
        )


class ProjectConstraintTests(SimpleTestCase):

    def test_transe_rows_rescaled_to_unit_norm(self):
        table = EmbeddingTable(np.array([[3.0, 4.0], [0.5, 0.0]]), np.zeros((1, 2)), ModelKind.TRANSE, 2)
        self.assertEqual(project_constraints(table), 0)
        np.testing.assert_allclose(table.entities, [[0.6, 0.8], [1.0, 0.0]])

    def test_transe_zero_row_is_flagged(self):
        table = EmbeddingTable(np.array([[0.0, 0.0], [2.0, 0.0]]), np.zeros((1, 2)), ModelKind.TRANSE, 2)
        with self.assertLogs('kg_transfer.scoring', level='WARNING'):
            self.assertEqual(project_constraints(table), 1)
        np.testing.assert_array_equal(table.entities, [[0.0, 0.0], [1.0, 0.0]])

    def test_touched_rows_only(self):
        table = EmbeddingTable(np.array([[3.0, 4.0], [0.0, 2.0]]), np.zeros((1, 2)), ModelKind.TRANSE, 2)
        project_constraints(table, entity_rows=np.array([1]))
        np.testing.assert_array_equal(table.entities, [[3.0, 4.0], [0.0, 1.0]])

    def test_rotate_phase_wrapped(self):
        table = EmbeddingTable(np.zeros((1, 2)), np.array([[1.5 * np.pi]]), ModelKind.ROTATE, 2)
        project_constraints(table)
        self.assertAlmostEqual(table.relations[0, 0], -0.5 * np.pi)
        self.assertTrue(np.all(table.relations >= -np.pi) and np.all(table.relations < np.pi))

    def test_distmult_unchanged(self):
        table = random_table(ModelKind.DISTMULT, 4, 2, 4, np.random.default_rng(5))
        before = table.copy()
        project_constraints(table)
        np.testing.assert_array_equal(table.entities, before.entities)
        np.testing.assert_array_equal(table.relations, before.relations)


def rotate(x, phases):
    """x rotated coordinate-wise by the given phases, in the [real | imaginary] layout"""
    half = len(x) // 2
    turned = (x[:half] + 1j * x[half:]) * np.exp(1j * phases)
    return np.concatenate([turned.real, turned.imag])


class ScorePropertyTests(SimpleTestCase):

    def test_rotate_reversal_and_modulus(self):
        for draw, rng in seeded_draws(40):
            with self.subTest(draw=draw):
                h, x = rng.normal(size=8), rng.normal(size=8)
                r = rng.uniform(-np.pi, np.pi, size=4)
                t = rotate(h, r)
                np.testing.assert_allclose(np.hypot(t[:4], t[4:]), np.hypot(h[:4], h[4:]), atol=1e-12)
                for p in (1, 2):
                    self.assertAlmostEqual(score(ModelKind.ROTATE, h, r, t, norm_p=p), 0.0, places=12)
                    self.assertAlmostEqual(score(ModelKind.ROTATE, t, -r, h, norm_p=p), 0.0, places=12)
                    self.assertAlmostEqual(score(ModelKind.ROTATE, h, r, x, norm_p=p),
                                           score(ModelKind.ROTATE, x, -r, h, norm_p=p), places=10)

    def test_complex_conjugate_symmetry(self):
        for draw, rng in seeded_draws(41):
            with self.subTest(draw=draw):
                h, r, t = rng.normal(size=(3, 8))
                conjugate = np.concatenate([r[:4], -r[4:]])
                self.assertAlmostEqual(score(ModelKind.COMPLEX, h, r, t),
                                       score(ModelKind.COMPLEX, t, conjugate, h), places=10)
                real = np.concatenate([r[:4], np.zeros(4)])
                self.assertAlmostEqual(score(ModelKind.COMPLEX, h, real, t),
                                       score(ModelKind.COMPLEX, t, real, h), places=10)

"""
Adversarial adaptation module

A conditional generator G(e, z) and a consistency discriminator D(e, c) over
concatenated target-space pairs. D is trained with binary cross-entropy to
accept (e_s, W(e_t)) for aligned pairs and reject (e, G(e, z)); its output on
an aligned pair is the consistency weight of that pair's constraints.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from .exceptions import ShapeError
from .nn_core import Activation, DenseNet, InitScheme, build_dense_net
from .transfer import TransitionNetwork, cosine_distance_grad

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-7
PROB_CEIL = 1.0 - 1e-7


@dataclass
class Generator:
    """R^{2n} (entity, noise) -> R^n, LeakyReLU after the hidden layer"""

    net: DenseNet

    @property
    def n(self) -> int:
        return self.net.out_dim


@dataclass
class Discriminator:
    """R^{2n} pair -> (0, 1); hidden layer is linear + LeakyReLU + layer norm"""

    net: DenseNet

    @property
    def n(self) -> int:
        return self.net.in_dim // 2


def build_generator(n: int, rng: np.random.Generator, slope: float = 0.01) -> Generator:
    net = build_dense_net(
        [2 * n, 2 * n, n],
        [Activation.LEAKY_RELU, Activation.NONE],
        rng,
        scheme=InitScheme.FAN_UNIFORM,
        slope=slope,
    )
    return Generator(net)


def build_discriminator(n: int, rng: np.random.Generator, slope: float = 0.01) -> Discriminator:
    net = build_dense_net(
        [2 * n, n, 1],
        [Activation.LEAKY_RELU, Activation.SIGMOID],
        rng,
        scheme=InitScheme.FAN_UNIFORM,
        layer_norms=[True, False],
        slope=slope,
    )
    return Discriminator(net)


# uniform() draws from [low, high); lifting low one ulp keeps -1 out of the support
NOISE_LOW = float(np.nextafter(-1.0, 0.0))
NOISE_HIGH = 1.0


def sample_noise(n: int, rng: np.random.Generator) -> np.ndarray:
    """n i.i.d. draws from the open interval (-1, 1)"""
    return rng.uniform(NOISE_LOW, NOISE_HIGH, size=n)


def sample_noise_batch(batch: int, n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(NOISE_LOW, NOISE_HIGH, size=(batch, n))


def _pair(left: np.ndarray, right: np.ndarray, n: int) -> np.ndarray:
    left = np.atleast_2d(np.asarray(left, dtype=np.float64))
    right = np.atleast_2d(np.asarray(right, dtype=np.float64))
    if left.shape != right.shape or left.shape[1] != n:
        raise ShapeError(f"pair halves must both have width {n}, got {left.shape} and {right.shape}")
    return np.concatenate([left, right], axis=1)


def discriminate_batch(D: Discriminator, targets: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    return D.net(_pair(targets, candidates, D.n))[:, 0]


def discriminate(D: Discriminator, e_target: np.ndarray, candidate: np.ndarray) -> float:
    """Consistency score of one (target entity, candidate) pair"""
    return float(discriminate_batch(D, e_target, candidate)[0])


def _clamped_log_terms(probs: np.ndarray, positive: bool) -> Tuple[np.ndarray, np.ndarray]:
    """
    -log p (positive) or -log(1 - p) and its derivative wrt p

    The derivative is 0 where the clamp is active.
    """
    clamped = np.clip(probs, PROB_FLOOR, PROB_CEIL)
    inside = (probs >= PROB_FLOOR) & (probs <= PROB_CEIL)
    if positive:
        return -np.log(clamped), np.where(inside, -1.0 / clamped, 0.0)
    return -np.log1p(-clamped), np.where(inside, 1.0 / (1.0 - clamped), 0.0)


@dataclass
class AdversarialLoss:
    loss: float
    grads: Dict[str, np.ndarray]
    w_grads: Dict[str, np.ndarray]


def discriminator_loss(
    D: Discriminator,
    W: TransitionNetwork,
    teacher_vectors: np.ndarray,
    real_targets: np.ndarray,
    fake_conditions: np.ndarray,
    fake_candidates: np.ndarray,
) -> AdversarialLoss:
    """
    -mean log D(e_s, W(e_t)) - mean log(1 - D(e, G(e, z)))

    Fake candidates are constants. Gradients go to D and, through the real
    pairs, to W.
    """
    projected, w_cache = W.net.forward(np.atleast_2d(teacher_vectors))
    real_in = _pair(real_targets, projected, D.n)
    fake_in = _pair(fake_conditions, fake_candidates, D.n)

    real_out, real_cache = D.net.forward(real_in)
    fake_out, fake_cache = D.net.forward(fake_in)
    real_terms, real_slope = _clamped_log_terms(real_out[:, 0], positive=True)
    fake_terms, fake_slope = _clamped_log_terms(fake_out[:, 0], positive=False)
    loss = float(real_terms.mean() + fake_terms.mean())

    real_grads, d_real_in = D.net.backward(real_cache, (real_slope / len(real_in))[:, None])
    fake_grads, _ = D.net.backward(fake_cache, (fake_slope / len(fake_in))[:, None])
    d_grads = {name: real_grads[name] + fake_grads[name] for name in real_grads}
    w_grads, _ = W.net.backward(w_cache, d_real_in[:, D.n:])
    return AdversarialLoss(loss, d_grads, w_grads)


def generator_loss(
    G: Generator,
    D: Discriminator,
    conditions: np.ndarray,
    noises: np.ndarray,
    lambda_g: float = 1.0,
) -> AdversarialLoss:
    """
    mean[-log D(e, G(e, z)) + lambda_g * (1 - cos(e, G(e, z)))]

    Only G receives gradients; ``w_grads`` is always empty.
    """
    conditions = np.atleast_2d(np.asarray(conditions, dtype=np.float64))
    generated, g_cache = G.net.forward(_pair(conditions, noises, G.n))
    out, d_cache = D.net.forward(_pair(conditions, generated, D.n))
    adv_terms, adv_slope = _clamped_log_terms(out[:, 0], positive=True)
    distance, _, d_generated_cos, _ = cosine_distance_grad(conditions, generated)

    batch = len(conditions)
    loss = float(np.mean(adv_terms + lambda_g * distance))

    _, d_pair = D.net.backward(d_cache, (adv_slope / batch)[:, None])
    d_generated = d_pair[:, D.n:] + (lambda_g / batch) * d_generated_cos
    g_grads, _ = G.net.backward(g_cache, d_generated)
    return AdversarialLoss(loss, g_grads, {})


def consistency_weights(
    D: Discriminator,
    W: TransitionNetwork,
    teacher_vectors: np.ndarray,
    target_vectors: np.ndarray,
) -> np.ndarray:
    """D(e_s, W(e_t)) per aligned pair, with no caches kept"""
    return discriminate_batch(D, target_vectors, W.net(np.atleast_2d(teacher_vectors)))

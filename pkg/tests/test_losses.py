"""Tests for the generator objectives."""

import numpy as np
import pytest

from sign_latent_tools.autodiff import constant, tensor
from sign_latent_tools.config import VaeConfig
from sign_latent_tools.losses import kl_gaussians, latent_l1_components, latent_l1_loss, length_loss, length_targets, split_hand_other
from sign_latent_tools.pose import Articulator
from sign_latent_tools.vae import LatentDistribution, kl_to_standard_normal, latent_slices

SLICES = latent_slices(VaeConfig())
SAMPLES = 1_000_000


def _dist(mu: np.ndarray, logvar: np.ndarray, slices=None) -> LatentDistribution:
    return LatentDistribution(constant(mu), constant(logvar), slices if slices is not None else {})


def _log_normal(z: np.ndarray, mu: np.ndarray, logvar: np.ndarray) -> np.ndarray:
    return (-0.5 * (np.log(2 * np.pi) + logvar + (z - mu) ** 2 / np.exp(logvar))).sum(axis=-1)


class TestLatentL1:
    """Per-articulator L1 on predicted means and log-variances."""

    def test_zero_when_equal(self, rng):
        """Test identical moments give a zero loss."""
        dist = _dist(rng.standard_normal((2, 3, 80)), rng.standard_normal((2, 3, 80)), SLICES)
        assert latent_l1_loss(dist, dist).item() == 0.0

    def test_region_term(self):
        """Test a unit offset on the body mean costs exactly 1 in the body term."""
        target = _dist(np.zeros((1, 2, 80)), np.zeros((1, 2, 80)), SLICES)
        mu = np.zeros((1, 2, 80))
        mu[..., SLICES[Articulator.BODY]] = 1.0
        components = latent_l1_components(_dist(mu, np.zeros((1, 2, 80))), target)
        assert components[Articulator.BODY].item() == 1.0
        assert components[Articulator.FACE].item() == 0.0
        assert split_hand_other(components) == (0.0, 1.0)

    def test_weights(self):
        """Test region weights multiply the matching terms."""
        target = _dist(np.zeros((1, 1, 80)), np.zeros((1, 1, 80)), SLICES)
        pred = _dist(np.ones((1, 1, 80)), np.zeros((1, 1, 80)))
        weights = {Articulator.RIGHT_HAND: 3.0, Articulator.LEFT_HAND: 2.0, Articulator.FACE: 2.0, Articulator.BODY: 1.0}
        assert latent_l1_loss(pred, target, weights).item() == pytest.approx(8.0)

    def test_padding_ignored(self, rng):
        """Test padded frames never change the loss."""
        mu, logvar = rng.standard_normal((1, 4, 80)), rng.standard_normal((1, 4, 80))
        target = _dist(np.zeros((1, 4, 80)), np.zeros((1, 4, 80)), SLICES)
        mask = np.array([[True, True, False, False]])
        first = latent_l1_loss(_dist(mu, logvar), target, mask=mask).item()
        mu[0, 2:] = 1e6
        second = latent_l1_loss(_dist(mu, logvar), target, mask=mask).item()
        assert first == second


class TestKl:
    """Closed-form diagonal Gaussian KL divergences."""

    def test_zero_for_identical(self, rng):
        """Test KL(q || q) = 0."""
        mu, logvar = rng.standard_normal((3, 80)), rng.standard_normal((3, 80))
        assert kl_gaussians(_dist(mu, logvar), _dist(mu, logvar)).item() == pytest.approx(0.0, abs=1e-12)

    def test_one_dimensional_value(self):
        """Test KL(N(1, 1) || N(0, 1)) = 1/2."""
        assert kl_gaussians(_dist(np.ones((1, 1)), np.zeros((1, 1))), _dist(np.zeros((1, 1)), np.zeros((1, 1)))).item() == pytest.approx(0.5)

    def test_standard_normal_single_dim(self):
        """Test mu = 2, logvar = 0 in one dimension gives mu^2 / 2 = 2."""
        assert kl_to_standard_normal(_dist(np.array([[2.0]]), np.zeros((1, 1)))).item() == pytest.approx(2.0)

    def test_standard_normal_matches_general_form(self, rng):
        """Test the standard-normal KL agrees with KL against N(0, I)."""
        dist = _dist(rng.standard_normal((2, 5, 80)), rng.uniform(-1, 1, (2, 5, 80)))
        standard = _dist(np.zeros((2, 5, 80)), np.zeros((2, 5, 80)))
        assert kl_to_standard_normal(dist).item() == pytest.approx(kl_gaussians(dist, standard).item(), rel=1e-12)

    @pytest.mark.parametrize("case", range(20))
    def test_monte_carlo_standard_normal(self, case):
        """Test the closed form against a million-sample estimate within 1%."""
        rng = np.random.default_rng(100 + case)
        mu = rng.choice([-1.0, 1.0], size=(1, 2)) * rng.uniform(1.0, 2.0, size=(1, 2))
        logvar = rng.uniform(-0.5, 0.5, size=(1, 2))
        z = mu + np.exp(logvar / 2) * rng.standard_normal((SAMPLES, 2))
        estimate = np.mean(_log_normal(z, mu, logvar) - _log_normal(z, np.zeros(2), np.zeros(2)))
        closed = kl_to_standard_normal(_dist(mu, logvar)).item()
        assert abs(closed - estimate) / closed < 0.01

    @pytest.mark.parametrize("case", range(20))
    def test_monte_carlo_two_gaussians(self, case):
        """Test KL(q || p) between random diagonal Gaussians against sampling within 1%."""
        rng = np.random.default_rng(200 + case)
        mu_p = rng.standard_normal((1, 2))
        mu_q = mu_p + rng.choice([-1.0, 1.0], size=(1, 2)) * rng.uniform(1.0, 2.0, size=(1, 2))
        logvar_q, logvar_p = rng.uniform(-0.5, 0.5, size=(2, 1, 2))
        z = mu_q + np.exp(logvar_q / 2) * rng.standard_normal((SAMPLES, 2))
        estimate = np.mean(_log_normal(z, mu_q, logvar_q) - _log_normal(z, mu_p, logvar_p))
        closed = kl_gaussians(_dist(mu_q, logvar_q), _dist(mu_p, logvar_p)).item()
        assert abs(closed - estimate) / closed < 0.01


class TestLengthLoss:
    """Length-ratio supervision."""

    def test_targets(self):
        """Test targets are T / T_max."""
        np.testing.assert_allclose(length_targets([5, 10], 10), [0.5, 1.0])

    def test_mean_absolute_error(self):
        """Test the loss is the mean absolute ratio error."""
        loss = length_loss(tensor([0.5, 0.5]), [2, 10], 10)
        assert loss.item() == pytest.approx((0.3 + 0.5) / 2)

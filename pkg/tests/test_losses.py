import math

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from motionforge import losses
from motionforge.errors import TrainingDivergenceError

from helpers import double_leaf, finite_diff_max_rel_err


class TestTripletLoss:
    def test_degenerate_triplet_returns_margin(self):
        v = torch.ones(8)
        loss = losses.triplet_loss(v, v, v, margin=0.01)
        assert loss.item() == pytest.approx(0.01)

    def test_hinge_clamps_negative(self):
        a = torch.zeros(4)
        p = torch.tensor([0.5, 0.0, 0.0, 0.0])
        n = torch.tensor([1.0, 0.0, 0.0, 0.0])
        assert losses.triplet_loss(a, p, n, margin=0.01).item() == 0.0

    def test_active_hinge_value(self):
        a = torch.zeros(4)
        p = torch.tensor([1.0, 0.0, 0.0, 0.0])
        n = torch.tensor([0.2, 0.0, 0.0, 0.0])
        assert losses.triplet_loss(a, p, n, margin=0.01).item() == pytest.approx(0.81)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            losses.triplet_loss(torch.zeros(4), torch.zeros(5), torch.zeros(4))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_nonnegative_and_zero_condition(self, seed):
        g = torch.Generator().manual_seed(seed)
        a, p, n = (torch.randn(6, generator=g) for _ in range(3))
        margin = 0.01
        loss = losses.triplet_loss(a, p, n, margin)
        d_ap = torch.dist(a, p).item()
        d_an = torch.dist(a, n).item()
        assert loss.item() >= 0.0
        if d_ap + margin <= d_an:
            assert loss.item() == 0.0
        else:
            assert loss.item() > 0.0


class TestAamSoftmax:
    def test_zero_angle_target_logit(self):
        w = torch.eye(4, dtype=torch.float64)
        emb = torch.tensor([1.0, 0.0, 0.0, 0.0], dtype=torch.float64)
        mod = losses.AamSoftmax(4, 4, margin=0.2, scale=30.0, weight=w)
        logits = mod.logits(emb, torch.tensor([0]))
        assert logits[0, 0].item() == pytest.approx(30.0 * math.cos(0.2), abs=1e-4)

    def test_symmetric_two_class_is_ln2(self):
        s = math.sqrt(0.5)
        w = torch.tensor([[s, s], [s, -s]])
        emb = torch.tensor([1.0, 0.0])  # 45 degrees from both rows
        loss = losses.aam_softmax_loss(emb, w, 0, margin=1e-9, scale=30.0)
        assert loss.item() == pytest.approx(math.log(2.0), abs=1e-4)

    def test_loss_decreases_with_angle(self):
        w = torch.eye(3, dtype=torch.float64)
        prev = None
        for theta in (1.5, 1.2, 0.9, 0.6):
            emb = torch.tensor([math.cos(theta), math.sin(theta), 0.0], dtype=torch.float64)
            loss = losses.aam_softmax_loss(emb, w, 0).item()
            if prev is not None:
                assert loss < prev
            prev = loss

    def test_reduces_to_softmax_ce_when_unmargined(self):
        g = torch.Generator().manual_seed(3)
        w = torch.nn.functional.normalize(torch.randn(5, 8, generator=g), dim=-1)
        emb = torch.nn.functional.normalize(torch.randn(8, generator=g), dim=-1)
        loss = losses.aam_softmax_loss(emb, w, 2, margin=1e-12, scale=1.0)
        plain = torch.nn.functional.cross_entropy((emb @ w.T)[None], torch.tensor([2]))
        assert loss.item() == pytest.approx(plain.item(), abs=1e-5)

    def test_label_out_of_range(self):
        with pytest.raises(IndexError):
            losses.aam_softmax_loss(torch.ones(4), torch.eye(4), 7)


class _StubQ:
    """q with fixed mean/log-variance, ignoring its input."""

    def __init__(self, mu, logvar):
        self.mu = mu
        self.logvar = logvar

    def __call__(self, z_id):
        return self.mu, self.logvar


class TestClub:
    def test_zero_residual_nll(self):
        d = 6
        z_m = torch.randn(10, d)
        q = _StubQ(z_m.clone(), torch.zeros(10, d))
        nll = losses.club_q_nll(q, torch.zeros(10, 3), z_m)
        assert nll.item() == pytest.approx(d / 2 * math.log(2 * math.pi), abs=1e-6)

    def test_quadratic_term_scales(self):
        d = 4
        base = d / 2 * math.log(2 * math.pi)
        resid = torch.randn(8, d)
        q = _StubQ(torch.zeros(8, d), torch.zeros(8, d))
        n1 = losses.club_q_nll(q, torch.zeros(8, 2), resid) - base
        n2 = losses.club_q_nll(q, torch.zeros(8, 2), 2.0 * resid) - base
        assert n2.item() == pytest.approx(4.0 * n1.item(), rel=1e-6)

    def test_hand_computed_2d_nll(self):
        mu = torch.tensor([[0.3, -0.1]])
        logvar = torch.tensor([[0.5, -0.25]])
        z = torch.tensor([[1.0, 0.5]])
        q = _StubQ(mu, logvar)
        expected = 0.0
        for k in range(2):
            var = math.exp(logvar[0, k])
            expected += 0.5 * (
                (z[0, k] - mu[0, k]) ** 2 / var + logvar[0, k] + math.log(2 * math.pi)
            )
        nll = losses.club_q_nll(q, torch.zeros(1, 2), z)
        assert nll.item() == pytest.approx(float(expected), abs=1e-6)

    def test_single_sample_estimate_is_zero(self):
        q = losses.ClubEstimator(3, 2, hidden=8)
        z_id, z_m = torch.randn(1, 3), torch.randn(1, 2)
        for mode in ("full", "shuffled"):
            est = losses.club_mi_estimate(q, z_id, z_m, sampling=mode)
            assert est.item() == pytest.approx(0.0, abs=1e-9)

    def test_full_mode_permutation_invariant(self):
        q = losses.ClubEstimator(3, 2, hidden=8)
        g = torch.Generator().manual_seed(0)
        z_id, z_m = torch.randn(16, 3, generator=g), torch.randn(16, 2, generator=g)
        est = losses.club_mi_estimate(q, z_id, z_m, sampling="full")
        perm = torch.randperm(16, generator=g)
        est_p = losses.club_mi_estimate(q, z_id[perm], z_m[perm], sampling="full")
        assert est.item() == pytest.approx(est_p.item(), abs=1e-6)

    def test_batch_errors(self):
        q = losses.ClubEstimator(3, 2, hidden=8)
        with pytest.raises(ValueError):
            losses.club_mi_estimate(q, torch.randn(0, 3), torch.randn(0, 2))
        with pytest.raises(ValueError):
            losses.club_q_nll(q, torch.randn(4, 3), torch.randn(5, 2))

    def test_logvar_clamped(self):
        q = losses.ClubEstimator(3, 2, hidden=8)
        with torch.no_grad():
            q.logvar_head.bias.fill_(100.0)
        _, logvar = q(torch.randn(4, 3))
        assert logvar.max().item() <= losses.LOG_VAR_BOUND


class TestReconstructionLosses:
    def test_identical_images(self):
        x = torch.rand(1, 3, 16, 16)
        l_recon, l_percep = losses.reconstruction_losses(x, x)
        assert l_recon.item() == 0.0
        assert l_percep.item() == 0.0

    def test_constant_offset(self):
        x = torch.rand(1, 3, 16, 16)
        l_recon, _ = losses.reconstruction_losses(x + 0.1, x)
        assert l_recon.item() == pytest.approx(0.1, abs=1e-6)

    def test_checkerboard_vs_inverse(self):
        idx = torch.arange(64)
        board = ((idx[None, :] + idx[:, None]) % 2).float()
        a = board[None, None].expand(1, 3, 64, 64)
        l_recon, _ = losses.reconstruction_losses(a, 1.0 - a)
        assert l_recon.item() == pytest.approx(1.0)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            losses.reconstruction_losses(torch.rand(1, 3, 8, 8), torch.rand(1, 3, 16, 16))


class TestAdversarialLosses:
    def test_zero_logit_values(self):
        disc = lambda x: torch.zeros(x.shape[0], 1, 4, 4)
        real, fake = torch.rand(2, 3, 16, 16), torch.rand(2, 3, 16, 16)
        l_g, l_d = losses.adversarial_losses(disc, real, fake)
        assert l_g.item() == pytest.approx(math.log(2.0), abs=1e-6)
        assert l_d.item() == pytest.approx(2.0 * math.log(2.0), abs=1e-6)

    def test_perfect_discriminator_saturates(self):
        disc = lambda x: torch.full((x.shape[0], 1, 4, 4), 50.0) * (
            1.0 if x.mean() > 0.5 else -1.0
        )
        real = torch.ones(1, 3, 16, 16)
        fake = torch.zeros(1, 3, 16, 16)
        _, l_d = losses.adversarial_losses(disc, real, fake)
        assert l_d.item() < 1e-6

    def test_generator_gradient_matches_finite_differences(self):
        torch.manual_seed(0)
        disc = losses.PatchDiscriminator(base=4).double()
        fake = double_leaf(1, 3, 8, 8, seed=1, scale=0.3)
        err = finite_diff_max_rel_err(
            lambda: torch.nn.functional.softplus(-disc(fake)).mean(), [fake]
        )
        assert err < 1e-4


class TestMotionTotalLoss:
    @staticmethod
    def _parts(value):
        return {k: torch.tensor(value) for k in ("recon", "percep", "adv", "mi", "ml")}

    def test_default_weighting(self):
        total = losses.motion_total_loss(self._parts(1.0))
        assert total.item() == pytest.approx(2.3)

    def test_zero_parts(self):
        assert losses.motion_total_loss(self._parts(0.0)).item() == 0.0

    def test_nan_part_names_offender(self):
        parts = self._parts(1.0)
        parts["mi"] = torch.tensor(float("nan"))
        with pytest.raises(TrainingDivergenceError, match="mi"):
            losses.motion_total_loss(parts)

    def test_disabling_ml_mid_reduces_to_baseline(self):
        # The reconstruction+GAN configuration: MI and ML terms weighted to zero.
        weights = losses.LossWeights(mi=0.0, ml=0.0)
        parts = self._parts(1.0)
        total = losses.motion_total_loss(parts, weights)
        assert total.item() == pytest.approx(1.0 + 0.1 + 1.0)

    def test_default_weights_match_config(self):
        w = losses.LossWeights()
        assert (w.percep, w.adv, w.mi, w.ml) == (0.1, 1.0, 0.1, 0.1)

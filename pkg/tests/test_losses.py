import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from saldepth import Domain, LossWeights
from saldepth.losses import (DomainRoutingError, GeneratorLossParts, adversarial_loss,
                             bce_map_loss, discriminator_loss, l1_map_loss,
                             make_loss_record, total_discriminator_loss,
                             total_generator_loss)

LN2 = math.log(2)


def prob_maps(shape=(4, 4)):
    return arrays(np.float64, shape, elements=st.floats(1e-6, 1 - 1e-6))


def binary_maps(shape=(4, 4)):
    return arrays(np.float64, shape, elements=st.sampled_from([0.0, 1.0]))


class TestBceMapLoss:
    def test_half_prediction_gives_ln2(self):
        pred = torch.full((1, 8, 8), 0.5)
        target = (torch.rand(1, 8, 8) > 0.5).float()
        assert bce_map_loss(pred, target).item() == pytest.approx(LN2, rel=1e-6)

    def test_near_perfect_prediction_is_tiny(self):
        eps = 1e-6
        target = (torch.rand(1, 8, 8) > 0.5).double()
        pred = target.clamp(eps, 1 - eps)
        loss = bce_map_loss(pred, target).item()
        # direct formula: -ln(1 - 1e-6) per pixel
        assert loss == pytest.approx(-math.log(1 - eps), rel=1e-3)
        assert loss < 1.1e-5

    @given(pred=prob_maps(), target=binary_maps())
    @settings(max_examples=50, deadline=None)
    def test_complement_symmetry(self, pred, target):
        p = torch.from_numpy(pred)
        t = torch.from_numpy(target)
        assert bce_map_loss(p, t).item() == pytest.approx(
            bce_map_loss(1 - p, 1 - t).item(), rel=1e-9, abs=1e-12)

    def test_shape_mismatch_raises(self):
        with pytest.raises(ValueError):
            bce_map_loss(torch.rand(1, 4, 4), torch.rand(1, 5, 5))

    def test_out_of_range_prediction_raises(self):
        with pytest.raises(ValueError):
            bce_map_loss(torch.full((1, 2, 2), 1.5), torch.zeros(1, 2, 2))

    def test_saturated_values_are_clamped_not_infinite(self):
        loss = bce_map_loss(torch.zeros(1, 2, 2), torch.ones(1, 2, 2))
        assert math.isfinite(loss.item())


class TestL1MapLoss:
    def test_identity_is_zero(self):
        x = torch.rand(1, 6, 6)
        assert l1_map_loss(x, x).item() == 0.0

    def test_opposite_constants(self):
        assert l1_map_loss(torch.zeros(1, 3, 3), torch.ones(1, 3, 3)).item() == 1.0

    def test_elementwise_example(self):
        pred = torch.tensor([[0.0, 1.0], [1.0, 0.0]])
        target = torch.tensor([[0.0, 1.0], [0.0, 0.0]])
        assert l1_map_loss(pred, target).item() == pytest.approx(0.25)

    def test_shape_mismatch_raises(self):
        with pytest.raises(ValueError):
            l1_map_loss(torch.rand(2, 2), torch.rand(3, 3))


class TestDiscriminatorLoss:
    def test_zero_logits_give_two_ln2(self):
        z = torch.zeros(1, 4, 4)
        assert discriminator_loss(z, z).item() == pytest.approx(2 * LN2, rel=1e-6)

    def test_confident_correct_logits_drive_loss_to_zero(self):
        sup = torch.full((1, 4, 4), -30.0)
        unsup = torch.full((1, 4, 4), 30.0)
        assert discriminator_loss(sup, unsup).item() < 1e-9

    @given(arrays(np.float32, (3, 3), elements=st.floats(-10, 10, width=32)),
           arrays(np.float32, (3, 3), elements=st.floats(-10, 10, width=32)))
    @settings(max_examples=50, deadline=None)
    def test_label_swap_equals_argument_swap(self, a, b):
        ta, tb = torch.from_numpy(a), torch.from_numpy(b)
        swapped = discriminator_loss(tb, ta)
        # labeling convention flipped == arguments exchanged
        relabelled = (torch.nn.functional.binary_cross_entropy_with_logits(ta, torch.ones_like(ta))
                      + torch.nn.functional.binary_cross_entropy_with_logits(tb, torch.zeros_like(tb)))
        assert swapped.item() == pytest.approx(relabelled.item(), rel=1e-6)


class TestAdversarialLoss:
    def test_zero_logits_give_ln2(self):
        assert adversarial_loss(torch.zeros(2, 5)).item() == pytest.approx(LN2, rel=1e-6)

    def test_logits_minus_ten(self):
        expected = math.log1p(math.exp(-10))  # softplus(-10) ~ 4.54e-5
        logits = torch.full((1, 4, 4), -10.0, dtype=torch.float64)
        loss = adversarial_loss(logits).item()
        assert loss == pytest.approx(expected, rel=1e-9)
        assert loss == pytest.approx(4.5399e-5, rel=1e-4)
        # single precision agrees to within its rounding at this magnitude
        assert adversarial_loss(logits.float()).item() == pytest.approx(expected, rel=1e-2)

    @given(st.floats(-8, 8), st.floats(0.01, 2.0))
    @settings(max_examples=50, deadline=None)
    def test_decreasing_a_logit_strictly_decreases_loss(self, base, delta):
        x = torch.full((2, 2), float(base), dtype=torch.float64)
        lower = x.clone()
        lower[0, 0] -= delta
        assert adversarial_loss(lower).item() < adversarial_loss(x).item()


class TestTotals:
    def test_unit_components_with_default_weights(self):
        parts = GeneratorLossParts(init_s=1.0, init_d=1.0, fin_s=1.0, fin_d=1.0,
                                   adv_s=1.0, adv_d=1.0)
        total = total_generator_loss(parts, LossWeights())
        # 1.75 + 1.0 + 0.2*1.75 + 0.2*1.0 + 0.002 + 0.001
        assert total == pytest.approx(3.303, abs=1e-12)

    def test_zero_adversarial_weights_reduce_to_supervised_objective(self):
        parts = GeneratorLossParts(init_s=0.3, init_d=0.4, fin_s=0.5, fin_d=0.6,
                                   adv_s=123.0, adv_d=456.0)
        w = LossWeights(lambda_adv_s=0.0, lambda_adv_d=0.0)
        expected = 1.75 * 0.5 + 1.0 * 0.6 + 0.2 * 1.75 * 0.3 + 0.2 * 1.0 * 0.4
        assert total_generator_loss(parts, w) == pytest.approx(expected, abs=1e-12)

    @given(st.floats(0, 5), st.floats(0, 5))
    @settings(max_examples=30, deadline=None)
    def test_linear_in_each_component(self, a, b):
        w = LossWeights()
        base = GeneratorLossParts()
        with_a = GeneratorLossParts(fin_s=a)
        with_b = GeneratorLossParts(fin_s=b)
        with_ab = GeneratorLossParts(fin_s=a + b)
        lhs = total_generator_loss(with_ab, w) - total_generator_loss(base, w)
        rhs = (total_generator_loss(with_a, w) + total_generator_loss(with_b, w)
               - 2 * total_generator_loss(base, w))
        assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-12)

    def test_wrong_domain_provenance_raises(self):
        parts = GeneratorLossParts(init_s=1.0)
        parts.domains["init_s"] = Domain.RGBD_SOURCE
        with pytest.raises(DomainRoutingError):
            total_generator_loss(parts, LossWeights())

    def test_discriminator_total(self):
        assert total_discriminator_loss(2 * LN2, 2 * LN2) == pytest.approx(4 * LN2)
        assert total_discriminator_loss(0.0, 1.5) == 1.5
        assert total_discriminator_loss(0.7, 0.2) == total_discriminator_loss(0.2, 0.7)


class TestLossRecord:
    def test_recomposition_is_exact_in_double(self):
        parts = GeneratorLossParts(
            init_s=torch.tensor(0.71), init_d=torch.tensor(0.33),
            fin_s=torch.tensor(0.65), fin_d=torch.tensor(0.29),
            adv_s=torch.tensor(0.69), adv_d=torch.tensor(0.70))
        w = LossWeights()
        rec = make_loss_record(parts, torch.tensor(1.38), torch.tensor(1.40), w)
        recomposed = (w.lambda_s * rec.fin_s + w.lambda_d * rec.fin_d
                      + w.lambda_init * w.lambda_s * rec.init_s
                      + w.lambda_init * w.lambda_d * rec.init_d
                      + w.lambda_adv_s * rec.adv_s + w.lambda_adv_d * rec.adv_d)
        assert abs(rec.total_G - recomposed) <= 1e-10
        assert rec.total_D == rec.disc_s + rec.disc_d
        assert all(v >= 0 and math.isfinite(v) for v in rec.as_tuple())

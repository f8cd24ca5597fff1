import math

import numpy as np
import pytest

from xautoml.learners.losses import (FocalLossParams, LossSpec, sigmoid,
                                     loss_value_grad_hess)
from xautoml.errors import ConfigError


def _ce(y, z):
    p = sigmoid(z)
    value = -(y * np.log(p) + (1 - y) * np.log(1 - p))
    return value, p - y, p * (1 - p)


class TestCrossEntropyReduction:
    def test_gamma0_alpha1_equals_ce(self):
        """Focal with gamma=0, alpha=1 must reduce to plain cross-entropy
        to machine precision."""
        z = np.linspace(-8, 8, 100)
        for y_val in (0.0, 1.0):
            y = np.full_like(z, y_val)
            spec = LossSpec(name="focal",
                            focal=FocalLossParams(alpha=1.0, gamma=0.0))
            v, g, h = loss_value_grad_hess(spec, y, z, hess_floor=None)
            ev, eg, eh = _ce(y, z)
            assert np.max(np.abs(v - ev)) < 1e-12
            assert np.max(np.abs(g - eg)) < 1e-12
            assert np.max(np.abs(h - eh)) < 1e-12


class TestFocalValues:
    def test_frozen_value(self):
        # y=1, p=0.9, gamma=2, alpha=0.25:
        # -0.25 * (0.1)^2 * ln(0.9) = 2.634013...e-4
        z = np.array([math.log(9.0)])    # sigmoid(z) = 0.9
        y = np.array([1.0])
        spec = LossSpec(name="focal", focal=FocalLossParams(alpha=0.25, gamma=2.0))
        v, _, _ = loss_value_grad_hess(spec, y, z)
        assert v[0] == pytest.approx(2.634013e-4, rel=1e-5)

    def test_alpha_weights_only_positive_class_when_below_one(self):
        z = np.zeros(1)
        spec_lo = LossSpec(name="focal", focal=FocalLossParams(alpha=0.25, gamma=0.0))
        v_pos, _, _ = loss_value_grad_hess(spec_lo, np.ones(1), z)
        v_neg, _, _ = loss_value_grad_hess(spec_lo, np.zeros(1), z)
        # at z=0 both classes see the same base loss ln 2; the weights differ
        assert v_pos[0] == pytest.approx(0.25 * math.log(2))
        assert v_neg[0] == pytest.approx(0.75 * math.log(2))

    def test_easy_examples_downweighted_by_gamma(self):
        z = np.array([4.0])   # confident correct prediction for y=1
        y = np.ones(1)
        v0 = loss_value_grad_hess(
            LossSpec(name="focal", focal=FocalLossParams(alpha=1.0, gamma=0.0)),
            y, z)[0][0]
        v2 = loss_value_grad_hess(
            LossSpec(name="focal", focal=FocalLossParams(alpha=1.0, gamma=2.0)),
            y, z)[0][0]
        assert v2 < v0 * 0.01


class TestDerivatives:
    def test_gradient_and_hessian_match_finite_differences(self, rng):
        spec_draws = 250
        eps = 1e-5
        max_g_err = max_h_err = 0.0
        for _ in range(spec_draws):
            y = float(rng.integers(0, 2))
            z = float(rng.uniform(-6, 6))
            alpha = float(rng.uniform(0.05, 1.0))
            gamma = float(rng.uniform(0.0, 5.0))
            spec = LossSpec(name="focal",
                            focal=FocalLossParams(alpha=alpha, gamma=gamma))

            def val_grad(zz):
                v, g, _ = loss_value_grad_hess(
                    spec, np.array([y]), np.array([zz]), hess_floor=None)
                return v[0], g[0]

            _, g, h = loss_value_grad_hess(spec, np.array([y]), np.array([z]),
                                           hess_floor=None)
            vp, gp = val_grad(z + eps)
            vm, gm = val_grad(z - eps)
            # gradient against value differences; hessian against gradient
            # differences (second differences of the value lose ~10 digits
            # to cancellation, far above the tolerance checked here)
            fd_g = (vp - vm) / (2 * eps)
            fd_h = (gp - gm) / (2 * eps)
            max_g_err = max(max_g_err,
                            abs(g[0] - fd_g) / max(abs(fd_g), 1e-8))
            max_h_err = max(max_h_err,
                            abs(h[0] - fd_h) / max(abs(fd_h), 1e-8))
        assert max_g_err < 1e-4
        assert max_h_err < 1e-4

    def test_gradient_sign_pushes_toward_label(self):
        spec = LossSpec(name="focal", focal=FocalLossParams(alpha=0.5, gamma=2.0))
        z = np.linspace(-4, 4, 41)
        _, g_pos, _ = loss_value_grad_hess(spec, np.ones_like(z), z)
        _, g_neg, _ = loss_value_grad_hess(spec, np.zeros_like(z), z)
        assert np.all(g_pos <= 1e-12)    # positive label: push scores up
        assert np.all(g_neg >= -1e-12)


class TestHessianFloor:
    def test_default_floor_applied(self):
        spec = LossSpec(name="focal", focal=FocalLossParams(alpha=1.0, gamma=5.0))
        _, _, h = loss_value_grad_hess(spec, np.ones(1), np.array([-6.0]))
        assert h[0] >= 1e-16

    def test_raw_hessian_can_be_negative(self):
        # the focal hessian is genuinely negative for confident mistakes at
        # large gamma — the None escape hatch exposes it
        spec = LossSpec(name="focal", focal=FocalLossParams(alpha=1.0, gamma=5.0))
        _, _, h = loss_value_grad_hess(spec, np.ones(1), np.array([-6.0]),
                                       hess_floor=None)
        assert h[0] < 0


class TestSpecValidation:
    def test_alpha_gamma_ranges(self):
        with pytest.raises(ConfigError):
            FocalLossParams(alpha=0.0, gamma=1.0)
        with pytest.raises(ConfigError):
            FocalLossParams(alpha=1.2, gamma=1.0)
        with pytest.raises(ConfigError):
            FocalLossParams(alpha=0.5, gamma=-0.5)

    def test_loss_names(self):
        with pytest.raises(ConfigError):
            LossSpec(name="hinge")
        assert LossSpec(name="cross_entropy").focal is None

    def test_ce_branch_matches_oracle(self):
        z = np.linspace(-5, 5, 23)
        y = (np.arange(23) % 2).astype(float)
        v, g, h = loss_value_grad_hess(LossSpec(name="cross_entropy"), y, z,
                                       hess_floor=None)
        ev, eg, eh = _ce(y, z)
        assert np.allclose(v, ev, atol=1e-12)
        assert np.allclose(g, eg, atol=1e-12)
        assert np.allclose(h, eh, atol=1e-12)

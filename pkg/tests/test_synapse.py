"""Gating function, surrogate derivative, and F-type currents."""

import numpy as np
import pytest

from microsnn.synapse import (
    Gate,
    GatingParams,
    SynapseConfig,
    f_type_current,
    gating_B,
    gating_B_mirrored,
    surrogate_sigma_prime,
)

FIG_PARAMS = GatingParams()  # fitted defaults: g_max=109.45, k=1.18, n=124.33


class TestGatingB:
    def test_value_at_threshold(self):
        expected = 109.45 / (1 + 124.33)
        assert gating_B(1.0, FIG_PARAMS) == pytest.approx(expected)
        assert gating_B(1.0, FIG_PARAMS) == pytest.approx(0.87330, abs=1e-5)

    def test_vanishes_far_below(self):
        assert gating_B(-50.0, FIG_PARAMS) < 1e-20

    def test_bounded(self):
        u = np.linspace(-10, 10, 1000)
        b = gating_B(u, FIG_PARAMS)
        assert np.all(b > 0)
        assert np.all(b < FIG_PARAMS.g_max)

    def test_monotone_increasing(self):
        u = np.linspace(-5, 7, 1000)
        b = gating_B(u, FIG_PARAMS)
        assert np.all(np.diff(b) > 0)

    def test_param_validation(self):
        with pytest.raises(ValueError):
            GatingParams(g_max=0)


class TestGatingBMirrored:
    def test_reflection(self):
        assert gating_B_mirrored(1.2, FIG_PARAMS, theta=1.0) == pytest.approx(
            gating_B(0.8, FIG_PARAMS)
        )

    def test_fixed_point_at_theta(self):
        assert gating_B_mirrored(1.0, FIG_PARAMS, 1.0) == gating_B(1.0, FIG_PARAMS)

    def test_symmetry(self):
        xs = np.linspace(0, 3, 301)
        left = gating_B_mirrored(1.0 - xs, FIG_PARAMS, 1.0)
        right = gating_B_mirrored(1.0 + xs, FIG_PARAMS, 1.0)
        np.testing.assert_allclose(left, right, atol=1e-14)

    def test_peak_exactly_at_threshold(self):
        u = np.linspace(-1, 3, 2001)
        vals = gating_B_mirrored(u, FIG_PARAMS, 1.0)
        assert u[np.argmax(vals)] == pytest.approx(1.0)


class TestSurrogate:
    def test_reference_points(self):
        assert surrogate_sigma_prime(1.0) == 1.0
        assert surrogate_sigma_prime(2.0) == pytest.approx(0.25)
        assert surrogate_sigma_prime(0.0) == pytest.approx(0.25)

    def test_bounded_unit(self):
        u = np.linspace(-20, 20, 1000)
        s = surrogate_sigma_prime(u)
        assert np.all(s > 0) and np.all(s <= 1)

    def test_overlap_with_mirrored_gate(self):
        # the fitted gating tracks the surrogate within 0.2 on [0, 2]
        u = np.linspace(0, 2, 401)
        diff = np.abs(gating_B_mirrored(u, FIG_PARAMS, 1.0) - surrogate_sigma_prime(u))
        assert diff.max() < 0.2


class TestFTypeCurrent:
    def test_zero_weights(self):
        assert f_type_current(np.zeros(4), np.ones(4)) == 0.0

    def test_scalar_product(self):
        assert f_type_current(np.array([2.0]), np.array([0.05])) == pytest.approx(0.10)

    def test_matches_double_loop(self):
        rng = np.random.default_rng(2)
        w = rng.standard_normal((5, 7))
        a = rng.standard_normal(7)
        ref = np.array([sum(w[i, j] * a[j] for j in range(7)) for i in range(5)])
        np.testing.assert_allclose(f_type_current(w, a), ref, atol=1e-12)

    def test_linear_in_both_factors(self):
        rng = np.random.default_rng(4)
        w = rng.standard_normal((3, 6))
        a = rng.standard_normal(6)
        np.testing.assert_allclose(
            f_type_current(2.0 * w, a), 2.0 * f_type_current(w, a), atol=1e-12
        )
        np.testing.assert_allclose(
            f_type_current(w, 3.0 * a), 3.0 * f_type_current(w, a), atol=1e-12
        )

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            f_type_current(np.zeros((3, 4)), np.zeros(5))


class TestGateAndConfig:
    def test_modes(self):
        g_plain = Gate(FIG_PARAMS, mode="plain")
        g_mirr = Gate(FIG_PARAMS, mode="mirrored")
        g_sig = Gate(FIG_PARAMS, mode="sigma_prime")
        assert g_plain(0.5) == gating_B(0.5, FIG_PARAMS)
        assert g_mirr(1.5) == gating_B_mirrored(1.5, FIG_PARAMS, 1.0)
        assert g_sig(1.0) == 1.0
        with pytest.raises(ValueError):
            Gate(FIG_PARAMS, mode="nope")

    def test_synapse_config_invariants(self):
        assert SynapseConfig("F_type").e_syn_absorbed
        SynapseConfig("E_type", gating=FIG_PARAMS)
        with pytest.raises(ValueError):
            SynapseConfig("E_type")
        with pytest.raises(ValueError):
            SynapseConfig("weird")

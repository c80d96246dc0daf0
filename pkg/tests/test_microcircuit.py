"""Layer dynamics, error signals, and whole-network rollouts."""

import numpy as np
import pytest

from microsnn.microcircuit import (
    MODE_FEEDBACK_ALIGNMENT,
    MODE_TIED,
    MicrocircuitLayer,
    forward_step,
    hidden_error,
    output_error,
    run_inference,
    run_network,
    som_error,
)
from microsnn.neuron import NeuronParams
from microsnn.signals import Signal, make_grid
from microsnn.synapse import Gate, GatingParams, gating_B, surrogate_sigma_prime

SIGMA_GATE = Gate(mode="sigma_prime")
PLAIN_GATE = Gate(mode="plain")


def single_layer(w, w_predict=None, tau_m=2.0, tau_s=1.0, gate=SIGMA_GATE):
    w = np.atleast_2d(np.asarray(w, dtype=float))
    wp = w.copy() if w_predict is None else np.atleast_2d(np.asarray(w_predict, float))
    n_out, n_in = w.shape
    return MicrocircuitLayer(
        n_in,
        n_out,
        w,
        wp,
        w.T.copy(),
        w.T.copy(),
        neuron_params=NeuronParams(tau_m_ms=tau_m, tau_s_ms=tau_s),
        gate=gate,
    )


def random_net(sizes, rng, scale=0.5, bias=0.0, self_predicting=True, gate=SIGMA_GATE,
               tau_m=10.0, tau_s=5.0, mode=MODE_TIED):
    params = NeuronParams(tau_m_ms=tau_m, tau_s_ms=tau_s)
    return [
        MicrocircuitLayer.random(
            sizes[i], sizes[i + 1], rng, scale=scale, bias=bias,
            neuron_params=params, gate=gate, self_predicting=self_predicting,
            mode=mode,
        )
        for i in range(len(sizes) - 1)
    ]


def bernoulli_signals(grid, n, p, rng, gain=1.0):
    from microsnn.signals import SpikeTrain, epsilon_kernel, psc_from_spikes

    kernel = epsilon_kernel(5.0, grid)
    trains = [SpikeTrain(grid, rng.random(grid.n_steps) < p) for _ in range(n)]
    currents = [
        Signal(grid, gain * psc_from_spikes(t, kernel).values) for t in trains
    ]
    return trains, currents


class TestForwardStep:
    def test_zero_in_zero_out(self):
        layer = single_layer([[1.0]])
        pyr, som, a, a_som = forward_step(layer, np.zeros(1), 1.0)
        assert not pyr[0] and not som[0]
        assert a[0] == 0.0 and a_som[0] == 0.0

    def test_som_mirrors_pyramidal_when_weights_match(self):
        rng = np.random.default_rng(1)
        layer = MicrocircuitLayer.random(
            4, 3, rng, scale=1.0, self_predicting=True,
            neuron_params=NeuronParams(tau_m_ms=2, tau_s_ms=1),
        )
        for _ in range(20):
            pyr, som, a, a_som = forward_step(layer, rng.uniform(0, 2, 4), 1.0)
            np.testing.assert_array_equal(pyr, som)
            np.testing.assert_array_equal(a, a_som)

    def test_hand_computed_two_steps(self):
        # tau_m=2 (half-step mixing), tau_s=1: drive 3.0 through weight 1.
        layer = single_layer([[1.0]])
        pyr, _, a, _ = forward_step(layer, np.array([3.0]), 1.0)
        # u = 0 + 0.5*(-0 + 3) = 1.5 -> spike, u = 0.5; psc jumps to 1/tau_s
        assert pyr[0]
        assert layer.pyr_u[0] == pytest.approx(0.5)
        assert a[0] == pytest.approx(1.0)
        pyr, _, a, _ = forward_step(layer, np.array([3.0]), 1.0)
        # u = 0.5 + 0.5*(-0.5 + 3) = 1.75 -> spike, u = 0.75
        assert pyr[0]
        assert layer.pyr_u[0] == pytest.approx(0.75)
        assert a[0] == pytest.approx(1.0 * np.exp(-1.0) + 1.0)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            forward_step(single_layer([[1.0]]), np.zeros(3), 1.0)


class TestErrorOps:
    def test_output_error_fixed_point(self):
        a = np.array([0.3, 0.7])
        e = output_error(a, a, np.zeros(2), PLAIN_GATE)
        np.testing.assert_array_equal(e, 0.0)

    def test_output_error_plain_difference(self):
        e = output_error(
            np.array([0.5]), np.array([0.6]), np.array([999.0]), SIGMA_GATE
        )
        # sigma'(999) is tiny but positive; with gate == 1 at threshold:
        e_at_theta = output_error(
            np.array([0.5]), np.array([0.6]), np.array([1.0]), SIGMA_GATE
        )
        assert e_at_theta[0] == pytest.approx(0.1)
        assert 0 < e[0] < e_at_theta[0]

    def test_output_error_with_fitted_gate(self):
        gate = Gate(GatingParams(), mode="mirrored")
        e = output_error(np.array([0.5]), np.array([0.6]), np.array([1.0]), gate)
        assert e[0] == pytest.approx(0.1 * gating_B(1.0, GatingParams()))
        assert e[0] == pytest.approx(0.08733, rel=1e-3)

    def test_som_error(self):
        e = som_error(np.array([1.0]), np.array([0.0]), np.array([1.0]), SIGMA_GATE)
        assert e[0] == pytest.approx(1.0)
        zero = som_error(np.array([0.4]), np.array([0.4]), np.array([0.2]), PLAIN_GATE)
        assert zero[0] == 0.0

    def test_som_error_matches_elementwise_loop(self):
        rng = np.random.default_rng(2)
        a, ap, u = rng.random((3, 6))
        vec = som_error(a, ap, u, PLAIN_GATE)
        ref = [gating_B(u[i], PLAIN_GATE.params) * (a[i] - ap[i]) for i in range(6)]
        np.testing.assert_allclose(vec, ref, atol=1e-15)

    def test_hidden_error_matches_double_loop(self):
        rng = np.random.default_rng(3)
        layer = MicrocircuitLayer.random(3, 4, rng, scale=1.0)
        a, e, ap = rng.random((3, 4))
        u_prev = rng.random(3)
        got = hidden_error(layer, a, e, ap, u_prev, PLAIN_GATE)
        ref = np.zeros(3)
        for j in range(3):
            total = 0.0
            for i in range(4):
                total += layer.w_topdown[j, i] * (a[i] + e[i])
                total -= layer.w_topdown_predict[j, i] * ap[i]
            ref[j] = gating_B(u_prev[j], PLAIN_GATE.params) * total
        np.testing.assert_allclose(got, ref, atol=1e-12)

    def test_cancellation_in_self_predicting_state(self):
        # with matching SOM traces the top-down sum collapses to W^T e
        rng = np.random.default_rng(4)
        layer = MicrocircuitLayer.random(5, 7, rng, scale=0.7, self_predicting=True)
        a = rng.random(7)
        e = rng.standard_normal(7)
        u_prev = rng.random(5)
        got = hidden_error(layer, a, e, a, u_prev, SIGMA_GATE)
        expected = surrogate_sigma_prime(u_prev) * (layer.w_forward.T @ e)
        np.testing.assert_allclose(got, expected, atol=1e-12)

    def test_no_error_no_signal(self):
        rng = np.random.default_rng(5)
        layer = MicrocircuitLayer.random(5, 7, rng, self_predicting=True)
        a = rng.random(7)
        got = hidden_error(layer, a, np.zeros(7), a, rng.random(5), SIGMA_GATE)
        np.testing.assert_allclose(got, 0.0, atol=1e-14)


class TestRunNetwork:
    def test_all_zero(self):
        g = make_grid(10, 1)
        layers = [single_layer([[0.5]]), single_layer([[0.5]])]
        state = run_network(
            layers, [Signal.zeros(g)], [Signal.zeros(g)], mode=MODE_TIED
        )
        for tr in state.layers:
            for arr in (tr.a, tr.a_som, tr.u, tr.u_som, tr.e, tr.e_som):
                np.testing.assert_array_equal(arr, 0.0)

    def test_hand_rollout_three_steps(self):
        # 1-1-1 chain, tau_m=2, tau_s=1, constant drive 3.0, weights 1.0 / 0.6
        g = make_grid(3, 1)
        layers = [single_layer([[1.0]]), single_layer([[0.6]])]
        drive = Signal(g, np.full(3, 3.0))
        target = Signal(g, np.full(3, 0.5))
        state = run_network(layers, [drive], [target])
        decay = np.exp(-1.0)
        psc1 = [1.0, decay + 1.0, (decay + 1.0) * decay + 1.0]
        np.testing.assert_allclose(state.layers[0].a[0], psc1, atol=1e-12)
        np.testing.assert_allclose(state.layers[0].u[0], [0.5, 0.75, 0.875], atol=1e-12)
        # output layer: subthreshold Euler relaxation toward 0.6 * psc1
        u2 = np.zeros(3)
        u2[0] = 0.5 * 0.6 * psc1[0]
        u2[1] = u2[0] + 0.5 * (-u2[0] + 0.6 * psc1[1])
        u2[2] = u2[1] + 0.5 * (-u2[1] + 0.6 * psc1[2])
        np.testing.assert_allclose(state.layers[1].u[0], u2, atol=1e-12)
        np.testing.assert_array_equal(state.layers[1].s[0], False)
        # gate potentials lag the post-step trace by one step
        np.testing.assert_allclose(state.layers[1].u_gate[0], [0.0, u2[0], u2[1]])
        # errors: output uses sigma'(u_gate); hidden collapses to w^T e
        e2 = surrogate_sigma_prime(state.layers[1].u_gate[0]) * 0.5
        np.testing.assert_allclose(state.layers[1].e[0], e2, atol=1e-12)
        e1 = surrogate_sigma_prime(state.layers[0].u_gate[0]) * 0.6 * e2
        np.testing.assert_allclose(state.layers[0].e[0], e1, atol=1e-12)
        np.testing.assert_array_equal(state.layers[0].e_som[0], 0.0)

    def test_matches_forward_step_loop(self):
        rng = np.random.default_rng(6)
        g = make_grid(40, 1)
        layers = random_net([3, 5, 2], rng)
        _, currents = bernoulli_signals(g, 3, 0.3, rng, gain=8.0)
        state = run_network(layers, currents)
        # replay with the public per-step op
        replay = random_net([3, 5, 2], np.random.default_rng(6))
        x = np.array([c.values for c in currents])
        for layer in replay:
            layer.reset_state()
        for n in range(g.n_steps):
            prev = x[:, n]
            for k, layer in enumerate(replay):
                _, _, a, a_som = forward_step(layer, prev, g.dt_ms)
                np.testing.assert_array_equal(a, state.layers[k].a[:, n])
                np.testing.assert_array_equal(a_som, state.layers[k].a_som[:, n])
                prev = a

    def test_inference_only_pass_is_identical(self):
        rng = np.random.default_rng(7)
        g = make_grid(60, 1)
        layers = random_net([4, 6, 3], rng)
        trains, currents = bernoulli_signals(g, 4, 0.3, rng, gain=8.0)
        target = [Signal(g, rng.random(g.n_steps)) for _ in range(3)]
        full = run_network(layers, currents, target, input_spikes=trains)
        spikes = run_inference(layers, currents)
        for k in range(2):
            np.testing.assert_array_equal(spikes[k], full.layers[k].s)

    def test_som_trajectories_equal_pyramidal_when_self_predicting(self):
        rng = np.random.default_rng(8)
        g = make_grid(50, 1)
        layers = random_net([4, 6, 3], rng)
        _, currents = bernoulli_signals(g, 4, 0.3, rng, gain=8.0)
        state = run_network(layers, currents)
        for tr in state.layers:
            np.testing.assert_array_equal(tr.a, tr.a_som)
            np.testing.assert_array_equal(tr.s, tr.s_som)

    def test_fast_path_equals_honest_som_rollout(self):
        rng = np.random.default_rng(9)
        g = make_grid(50, 1)
        layers = random_net([4, 6, 3], rng)
        _, currents = bernoulli_signals(g, 4, 0.3, rng, gain=8.0)
        target = [Signal(g, rng.random(g.n_steps)) for _ in range(3)]
        honest = run_network(layers, currents, target)
        fast = run_network(layers, currents, target, assume_self_predicting=True)
        for a, b in zip(honest.layers, fast.layers):
            np.testing.assert_array_equal(a.a, b.a)
            np.testing.assert_array_equal(a.a_som, b.a_som)
            np.testing.assert_array_equal(a.e, b.e)
            np.testing.assert_array_equal(a.e_som, b.e_som)

    def test_tied_mode_detects_desync(self):
        rng = np.random.default_rng(10)
        g = make_grid(10, 1)
        layers = random_net([2, 2], rng)
        layers[0].w_topdown = layers[0].w_topdown + 0.5
        with pytest.raises(ValueError, match="out of sync"):
            run_network(layers, [Signal.zeros(g), Signal.zeros(g)])

    def test_feedback_alignment_layers_allowed(self):
        rng = np.random.default_rng(11)
        g = make_grid(20, 1)
        layers = random_net(
            [2, 3, 2], rng, self_predicting=False, mode=MODE_FEEDBACK_ALIGNMENT
        )
        _, currents = bernoulli_signals(g, 2, 0.3, rng, gain=8.0)
        target = [Signal.zeros(g), Signal.zeros(g)]
        state = run_network(layers, currents, target, mode=MODE_FEEDBACK_ALIGNMENT)
        assert state.layers[-1].e is not None

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(12)
        g = make_grid(10, 1)
        layers = random_net([3, 2], rng)
        with pytest.raises(ValueError):
            run_network(layers, [Signal.zeros(g)] * 2)

    def test_grid_mismatch(self):
        rng = np.random.default_rng(13)
        layers = random_net([2, 2], rng)
        a = Signal.zeros(make_grid(10, 1))
        b = Signal.zeros(make_grid(10, 0.5))
        with pytest.raises(ValueError):
            run_network(layers, [a, b])

    def test_determinism(self):
        rng = np.random.default_rng(14)
        g = make_grid(30, 1)
        layers = random_net([3, 4, 2], rng)
        _, currents = bernoulli_signals(g, 3, 0.3, rng, gain=8.0)
        target = [Signal(g, rng.random(g.n_steps)) for _ in range(2)]
        s1 = run_network(layers, currents, target)
        s2 = run_network(layers, currents, target)
        for a, b in zip(s1.layers, s2.layers):
            np.testing.assert_array_equal(a.e, b.e)
            np.testing.assert_array_equal(a.u, b.u)

    def test_psc_traces_equal_kernel_sum(self):
        # the in-loop decay recursion must reproduce spikes * epsilon
        from microsnn.signals import SpikeTrain, epsilon_kernel, psc_from_spikes

        rng = np.random.default_rng(17)
        g = make_grid(80, 1)
        layers = random_net([3, 5, 2], rng)
        _, currents = bernoulli_signals(g, 3, 0.3, rng, gain=8.0)
        state = run_network(layers, currents)
        kernel = epsilon_kernel(layers[0].neuron_params.tau_s_ms, g)
        for tr in state.layers:
            for i in range(tr.a.shape[0]):
                ref = psc_from_spikes(SpikeTrain(g, tr.s[i]), kernel).values
                np.testing.assert_allclose(tr.a[i], ref, atol=1e-12)

    def test_array_inputs_with_explicit_grid(self):
        rng = np.random.default_rng(18)
        g = make_grid(25, 1)
        layers = random_net([3, 4, 2], rng)
        _, currents = bernoulli_signals(g, 3, 0.3, rng, gain=8.0)
        target = [Signal(g, rng.random(g.n_steps)) for _ in range(2)]
        by_signal = run_network(layers, currents, target)
        x = np.array([c.values for c in currents])
        t = np.array([c.values for c in target])
        by_array = run_network(layers, x, t, grid=g)
        np.testing.assert_array_equal(by_signal.layers[-1].e, by_array.layers[-1].e)
        with pytest.raises(ValueError, match="explicit grid"):
            run_network(layers, x, t)


class TestLayerConstruction:
    def test_shape_validation(self):
        with pytest.raises(ValueError):
            MicrocircuitLayer(2, 3, np.zeros((3, 2)), np.zeros((3, 2)),
                              np.zeros((3, 2)), np.zeros((2, 3)))

    def test_self_predicting_invariant_after_construction(self):
        rng = np.random.default_rng(15)
        layer = MicrocircuitLayer.random(4, 5, rng, self_predicting=True)
        assert layer.is_self_predicting()
        np.testing.assert_array_equal(layer.w_topdown, layer.w_forward.T)

    def test_tied_construction_syncs_topdown_only(self):
        rng = np.random.default_rng(16)
        layer = MicrocircuitLayer.random(4, 5, rng, self_predicting=False)
        np.testing.assert_array_equal(layer.w_topdown, layer.w_forward.T)
        assert not layer.is_self_predicting()

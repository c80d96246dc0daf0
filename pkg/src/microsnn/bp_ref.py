"""Surrogate-gradient backprop reference used to validate the local rules.

Two flavors are implemented.  The default ("main_text") drops the temporal
dependency of the membrane potential: the output error is
``(target - output) * sigma'(u)``, hidden errors are
``sigma'(u) * (W^T e_next)``, and each weight accumulates
``eta * integral of e * (s_pre convolved with kappa_bp)`` where
``kappa_bp = eps * eps``.  The full-dependency variant keeps the smearing
through the synaptic and membrane kernels (time-reversed convolutions) and
uses ``kappa_bp = eps * eps * zeta``, for which a closed form exists.

All accumulators are reported in the *update* direction (the negative loss
gradient), so they are directly comparable with the local rules' forward
updates.  The oracle consumes the same rollout (NetworkState) as the
microcircuit, isolating the comparison to the learning rules themselves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .microcircuit import MODE_TIED, MicrocircuitLayer, NetworkState, run_network
from .plasticity import KERNEL_DISCRETE, LearnRates, local_updates
from .signals import (
    Signal,
    StdpParams,
    TimeGrid,
    convolve_causal,
    epsilon_kernel,
    zeta_kernel,
)
from .synapse import surrogate_sigma_prime

FORM_MAIN = "main_text"
FORM_FULL = "appendix_full"
FORM_DISCRETE = "discrete_delta"
FORMS = (FORM_MAIN, FORM_FULL, FORM_DISCRETE)


@dataclass
class BpKernel:
    """Sampled presynaptic kernel of the backprop rule.

    ``samples`` is None for the discrete identity kernel.  Both analytic
    forms vanish at t = 0 and have a single interior maximum.
    """

    form: str
    samples: Signal | None


def kappa_bp(
    form: str, tau_s_ms: float, tau_m_ms: float | None, grid: TimeGrid
) -> BpKernel:
    """Build the requested kernel form on the grid.

    main_text: ``(t / tau_s^2) exp(-t / tau_s)``, the synaptic kernel
    convolved with itself.  appendix_full additionally smears through the
    membrane kernel; its closed form has a pole at tau_s == tau_m, which is
    rejected.
    """
    if form not in FORMS:
        raise ValueError(f"unknown kernel form {form!r}; expected {FORMS}")
    if form == FORM_DISCRETE:
        return BpKernel(form, None)
    if tau_s_ms <= 0:
        raise ValueError("tau_s_ms must be positive")
    t = grid.times()
    if form == FORM_MAIN:
        return BpKernel(form, Signal(grid, t / tau_s_ms**2 * np.exp(-t / tau_s_ms)))
    if tau_m_ms is None or tau_m_ms <= 0:
        raise ValueError("appendix_full needs a positive tau_m_ms")
    if tau_m_ms == tau_s_ms:
        raise ValueError("appendix_full kernel is singular at tau_s == tau_m")
    d = tau_m_ms - tau_s_ms
    values = (
        tau_m_ms * (np.exp(-t / tau_m_ms) - np.exp(-t / tau_s_ms)) / d**2
        - t * np.exp(-t / tau_s_ms) / (tau_s_ms * d)
    )
    return BpKernel(form, Signal(grid, values))


def kappa_bp_numeric(tau_s_ms: float, tau_m_ms: float, grid: TimeGrid) -> Signal:
    """Independent numeric route for the full kernel: eps*eps*zeta by direct
    Riemann convolution.  Used to cross-check the closed form."""
    eps = epsilon_kernel(tau_s_ms, grid)
    return convolve_causal(convolve_causal(eps, eps), zeta_kernel(tau_m_ms, grid))


def _filter_rows_causal(x: np.ndarray, samples: np.ndarray) -> np.ndarray:
    n = x.shape[1]
    return np.stack([np.convolve(row, samples)[:n] for row in x])


def _filter_rows_anticausal(x: np.ndarray, samples: np.ndarray, dt: float) -> np.ndarray:
    """Time-reversed kernel over the finite window:
    ``y[t] = sum_{m >= t} x[m] * k[m - t] * dt`` (truncated at T)."""
    n = x.shape[1]
    return np.stack(
        [np.convolve(row[::-1], samples)[:n][::-1] for row in x]
    ) * dt


def _presyn_bp(state: NetworkState, k: int, kernel: BpKernel) -> np.ndarray:
    """Presynaptic factor of layer k filtered by the BP kernel.

    Hidden layers contribute their spike trains (impulse convention, no dt);
    a current-encoded input layer contributes the current itself (Riemann dt
    under an analytic kernel, identity under the discrete one).
    """
    if k > 0:
        x = state.layers[k - 1].s.astype(np.float64)
        is_spikes = True
    elif state.input_spikes is not None:
        x = state.input_spikes.astype(np.float64)
        is_spikes = True
    else:
        x = state.input_psc
        is_spikes = False
    if kernel.form == FORM_DISCRETE:
        return x.copy()
    out = _filter_rows_causal(x, kernel.samples.values)
    if not is_spikes:
        out *= state.grid.dt_ms
    return out


@dataclass
class BpGradState:
    """Per-layer gated errors and weight accumulators, update direction."""

    e: list[np.ndarray | None]
    updates: list[np.ndarray | None]
    d: list[np.ndarray | None] | None = None


def bp_output_grads(
    state: NetworkState,
    a_target: np.ndarray | None = None,
    kernel: BpKernel | None = None,
    eta: float = 1.0,
    theta: float = 1.0,
) -> BpGradState:
    """Output-layer error and weight update.

    For the van Rossum loss the negative loss derivative is simply
    ``target - output``; the gated error is that times the surrogate
    derivative at the gate potential.
    """
    if kernel is None:
        raise ValueError("a BpKernel is required")
    target = state.a_target if a_target is None else np.asarray(a_target)
    if target is None:
        raise ValueError("state has no target")
    top = state.layers[-1]
    if target.shape != top.a.shape:
        raise ValueError(f"target shape {target.shape} vs output {top.a.shape}")
    n_layers = len(state.layers)
    e = [None] * n_layers
    updates = [None] * n_layers
    e[-1] = (target - top.a) * surrogate_sigma_prime(top.u_gate, theta)
    pre = _presyn_bp(state, n_layers - 1, kernel)
    updates[-1] = eta * (e[-1] @ pre.T) * state.grid.dt_ms
    return BpGradState(e, updates)


def bp_hidden_grads(
    state: NetworkState,
    layers: list[MicrocircuitLayer],
    grads: BpGradState | None = None,
    kernel: BpKernel | None = None,
    eta: float = 1.0,
    theta: float = 1.0,
) -> BpGradState:
    """Propagate the output error down and fill every layer's update.

    Layer by layer: ``e_prev = sigma'(u_prev) * (W^T e_next)`` (the temporal
    dependency is dropped), then the same filtered-presynaptic integral as at
    the output.
    """
    if grads is None:
        grads = bp_output_grads(state, kernel=kernel, eta=eta, theta=theta)
    if grads.e[-1] is None:
        raise ValueError("output gradients must be computed first")
    for k in range(len(layers) - 2, -1, -1):
        tr = state.layers[k]
        back = layers[k + 1].w_forward.T @ grads.e[k + 1]
        grads.e[k] = surrogate_sigma_prime(tr.u_gate, theta) * back
        pre = _presyn_bp(state, k, kernel)
        grads.updates[k] = eta * (grads.e[k] @ pre.T) * state.grid.dt_ms
    return grads


def bp_gradients(
    state: NetworkState,
    layers: list[MicrocircuitLayer],
    kernel: BpKernel,
    eta: float = 1.0,
    theta: float = 1.0,
) -> BpGradState:
    """Full pass: output grads then hidden grads."""
    return bp_hidden_grads(state, layers, None, kernel=kernel, eta=eta, theta=theta)


def bp_full_dependency_grads(
    state: NetworkState,
    layers: list[MicrocircuitLayer],
    eta: float = 1.0,
    theta: float = 1.0,
) -> BpGradState:
    """Appendix chain with the temporal smearing kept.

    Per layer, with g the loss derivative on the PSC:
    ``dL/ds = g (x) reversed-eps``, ``dL/du = (dL/ds * sigma'(u)) (x)
    reversed-zeta`` (both truncated at the window end), the next layer down
    receives ``g_prev = W^T dL/du``, and the weight accumulator follows the
    separated closed form ``integral of (g * sigma'(u)) . (s_pre conv
    eps*eps*zeta)``.  Accumulators are negated into the update direction for
    comparability with :func:`bp_gradients`.
    """
    params = layers[0].neuron_params
    for layer in layers[1:]:
        if layer.neuron_params != params:
            raise ValueError("full-dependency chain assumes uniform neuron params")
    grid = state.grid
    eps = epsilon_kernel(params.tau_s_ms, grid).values
    zeta = zeta_kernel(params.tau_m_ms, grid).values
    kernel = kappa_bp(FORM_FULL, params.tau_s_ms, params.tau_m_ms, grid)
    if state.a_target is None:
        raise ValueError("state has no target")
    dt = grid.dt_ms
    n_layers = len(layers)
    g = [None] * n_layers
    e = [None] * n_layers
    updates = [None] * n_layers
    g[-1] = state.layers[-1].a - state.a_target
    for k in range(n_layers - 1, -1, -1):
        tr = state.layers[k]
        sig = surrogate_sigma_prime(tr.u_gate, theta)
        e[k] = g[k] * sig
        pre = _presyn_bp(state, k, kernel)
        updates[k] = -eta * (e[k] @ pre.T) * dt
        if k > 0:
            dl_ds = _filter_rows_anticausal(g[k], eps, dt)
            dl_du = _filter_rows_anticausal(dl_ds * sig, zeta, dt)
            g[k - 1] = layers[k].w_forward.T @ dl_du
    return BpGradState(e, updates, d=g)


@dataclass
class EquivalenceReport:
    """Outcome of one local-rule vs backprop comparison."""

    per_layer: list[float]
    max_deviation: float
    compared_entries: int
    self_predicting: bool
    gate_exact: bool
    notes: list[str]

    def passes(self, threshold: float) -> bool:
        """The exactness claim only applies when its preconditions held."""
        return (
            self.self_predicting
            and self.gate_exact
            and self.max_deviation < threshold
        )


def _relative_deviation(a: np.ndarray, b: np.ndarray, floor: float):
    mask = (np.abs(a) > floor) | (np.abs(b) > floor)
    if not mask.any():
        return 0.0, 0
    num = np.abs(a - b)[mask]
    den = np.maximum(np.abs(a), np.abs(b))[mask]
    return float(np.max(num / den)), int(mask.sum())


def equivalence_check(
    layers: list[MicrocircuitLayer],
    input_currents,
    a_target,
    input_spikes=None,
    eta: float = 1.0,
    kernel_mode: str = KERNEL_DISCRETE,
    stdp_params: StdpParams | None = None,
    mode: str = MODE_TIED,
    abs_floor: float = 1e-12,
    grid: TimeGrid | None = None,
) -> EquivalenceReport:
    """Run one rollout and compare the local forward-weight updates with the
    backprop reference on the same trajectories.

    Entries below ``abs_floor`` on both sides are excluded from the relative
    deviation.  Precondition violations (network not self-predicting, gate
    not the exact surrogate) are reported, not silently ignored; the
    comparison is still performed for informational use.
    """
    notes = []
    self_predicting = all(layer.is_self_predicting() for layer in layers)
    if not self_predicting:
        notes.append("network is not in the self-predicting state")
    gate_exact = all(layer.gate.mode == "sigma_prime" for layer in layers)
    if not gate_exact:
        notes.append("gating is not the exact surrogate derivative")
    if kernel_mode != KERNEL_DISCRETE:
        notes.append("continuous kernels differ between the two rules by design")
    state = run_network(
        layers,
        input_currents,
        a_target,
        mode=mode,
        input_spikes=input_spikes,
        grid=grid,
    )
    params = stdp_params or StdpParams(a_plus=1.0, a_minus=0.0)
    micro = local_updates(
        state, layers, LearnRates(eta, eta, eta), params, kernel_mode
    )
    form = FORM_DISCRETE if kernel_mode == KERNEL_DISCRETE else FORM_MAIN
    np0 = layers[0].neuron_params
    kernel = kappa_bp(form, np0.tau_s_ms, np0.tau_m_ms, state.grid)
    bp = bp_gradients(state, layers, kernel, eta=eta, theta=np0.theta)
    per_layer = []
    compared = 0
    for dw_local, dw_bp in zip(micro.d_forward, bp.updates):
        dev, n = _relative_deviation(dw_local, dw_bp, abs_floor)
        per_layer.append(dev)
        compared += n
    return EquivalenceReport(
        per_layer=per_layer,
        max_deviation=max(per_layer) if per_layer else 0.0,
        compared_entries=compared,
        self_predicting=self_predicting,
        gate_exact=gate_exact,
        notes=notes,
    )

"""Layers of paired pyramidal/SOM cells, the forward rollout, and the error
signals that flow back through the top-down connections.

Each layer owns four weight matrices:

* ``w_forward`` (n_out, n_in): pyramidal drive, the only weights needed for
  inference;
* ``w_predict`` (n_out, n_in): drive of the SOM cells that mimic their
  paired pyramidal cells;
* ``w_topdown`` (n_in, n_out): feedback from this layer's pyramidal cells
  onto the previous layer's apical dendrites;
* ``w_topdown_predict`` (n_in, n_out): feedback from this layer's SOM cells,
  which cancels the pyramidal part and leaves only error.

SOM output currents carry a minus sign; it is applied at the two summation
sites (SOM error and apical-dendrite error), so SOM PSCs are stored
positive.

Error signals are learning/propagation quantities only: they never enter
the membrane integration, so an inference-only pass produces identical
spikes.  The gate B is evaluated at the pre-integration membrane potential
of each step (the ``u_gate`` traces), keeping errors independent of
same-step spikes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .neuron import NeuronParams, lif_step_array
from .signals import Signal, SpikeTrain, TimeGrid
from .synapse import Gate, f_type_current

MODE_TIED = "tied_weights"
MODE_FEEDBACK_ALIGNMENT = "feedback_alignment"
MODES = (MODE_TIED, MODE_FEEDBACK_ALIGNMENT)


@dataclass
class MicrocircuitLayer:
    n_in: int
    n_out: int
    w_forward: np.ndarray
    w_predict: np.ndarray
    w_topdown: np.ndarray
    w_topdown_predict: np.ndarray
    neuron_params: NeuronParams = field(default_factory=NeuronParams)
    gate: Gate = field(default_factory=Gate)
    # population state, advanced by forward_step
    pyr_u: np.ndarray = None
    som_u: np.ndarray = None
    pyr_psc: np.ndarray = None
    som_psc: np.ndarray = None

    def __post_init__(self):
        for name, shape in (
            ("w_forward", (self.n_out, self.n_in)),
            ("w_predict", (self.n_out, self.n_in)),
            ("w_topdown", (self.n_in, self.n_out)),
            ("w_topdown_predict", (self.n_in, self.n_out)),
        ):
            w = np.asarray(getattr(self, name), dtype=np.float64)
            if w.shape != shape:
                raise ValueError(f"{name} must have shape {shape}, got {w.shape}")
            if not np.all(np.isfinite(w)):
                raise ValueError(f"{name} contains non-finite entries")
            setattr(self, name, w)
        if self.pyr_u is None:
            self.reset_state()

    @classmethod
    def random(
        cls,
        n_in: int,
        n_out: int,
        rng: np.random.Generator,
        scale: float = 0.3,
        bias: float = 0.01,
        neuron_params: NeuronParams | None = None,
        gate: Gate | None = None,
        self_predicting: bool = False,
        mode: str = MODE_TIED,
    ) -> "MicrocircuitLayer":
        """Layer with ``scale * N(0,1) + bias`` weights.

        In tied mode ``w_topdown`` starts equal to ``w_forward`` transposed; a
        feedback-alignment layer draws it independently and keeps it frozen.
        With ``self_predicting`` all four matrices coincide from the start.
        """
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        draw = lambda *shape: scale * rng.standard_normal(shape) + bias
        w_forward = draw(n_out, n_in)
        if self_predicting:
            w_predict = w_forward.copy()
            w_topdown = w_forward.T.copy()
            w_topdown_predict = w_forward.T.copy()
        else:
            w_predict = draw(n_out, n_in)
            w_topdown = (
                w_forward.T.copy() if mode == MODE_TIED else draw(n_in, n_out)
            )
            w_topdown_predict = draw(n_in, n_out)
        return cls(
            n_in,
            n_out,
            w_forward,
            w_predict,
            w_topdown,
            w_topdown_predict,
            neuron_params=neuron_params or NeuronParams(),
            gate=gate or Gate(),
        )

    def reset_state(self):
        self.pyr_u = np.zeros(self.n_out)
        self.som_u = np.zeros(self.n_out)
        self.pyr_psc = np.zeros(self.n_out)
        self.som_psc = np.zeros(self.n_out)

    def make_self_predicting(self):
        """Copy the forward weights into the three auxiliary matrices."""
        self.w_predict = self.w_forward.copy()
        self.w_topdown = self.w_forward.T.copy()
        self.w_topdown_predict = self.w_forward.T.copy()

    def sync_topdown(self):
        """Tied mode: keep the top-down weights equal to the forward ones."""
        self.w_topdown = self.w_forward.T.copy()

    def is_self_predicting(self, tol: float = 0.0) -> bool:
        ft = self.w_forward.T
        return (
            np.allclose(self.w_predict, self.w_forward, rtol=0, atol=tol)
            and np.allclose(self.w_topdown, ft, rtol=0, atol=tol)
            and np.allclose(self.w_topdown_predict, ft, rtol=0, atol=tol)
        )


def forward_step(
    layer: MicrocircuitLayer, presyn_psc: np.ndarray, dt_ms: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Advance both populations one step.

    Returns (pyramidal spikes, SOM spikes, pyramidal PSC, SOM PSC) after the
    step.  PSCs follow the exact exponential-decay recursion of the synaptic
    kernel, so a layer's PSC trace equals its spike train convolved with
    epsilon.
    """
    presyn_psc = np.asarray(presyn_psc, dtype=np.float64)
    if presyn_psc.shape != (layer.n_in,):
        raise ValueError(
            f"expected {layer.n_in} presynaptic channels, got {presyn_psc.shape}"
        )
    p = layer.neuron_params
    layer.pyr_u, pyr_spiked = lif_step_array(
        layer.pyr_u, f_type_current(layer.w_forward, presyn_psc), p, dt_ms
    )
    layer.som_u, som_spiked = lif_step_array(
        layer.som_u, f_type_current(layer.w_predict, presyn_psc), p, dt_ms
    )
    decay = np.exp(-dt_ms / p.tau_s_ms)
    layer.pyr_psc = layer.pyr_psc * decay + pyr_spiked / p.tau_s_ms
    layer.som_psc = layer.som_psc * decay + som_spiked / p.tau_s_ms
    return pyr_spiked, som_spiked, layer.pyr_psc, layer.som_psc


def output_error(a_out, a_target, u_out, gate: Gate):
    """Top-layer error: gate(u) * (target - output), elementwise.

    Accepts per-step vectors or whole (n, T) traces.
    """
    a_out = np.asarray(a_out)
    a_target = np.asarray(a_target)
    u_out = np.asarray(u_out)
    if not (a_out.shape == a_target.shape == u_out.shape):
        raise ValueError(
            f"shape mismatch: {a_out.shape}, {a_target.shape}, {u_out.shape}"
        )
    return gate(u_out) * (a_target - a_out)


def som_error(a_pyr, a_som, u_som, gate: Gate):
    """SOM teaching mismatch: gate(u_som) * (a_pyr - a_som).

    The minus sign on the SOM cell's own (negative) output current is
    applied here; SOM PSCs are stored positive.
    """
    a_pyr = np.asarray(a_pyr)
    a_som = np.asarray(a_som)
    u_som = np.asarray(u_som)
    if not (a_pyr.shape == a_som.shape == u_som.shape):
        raise ValueError(
            f"shape mismatch: {a_pyr.shape}, {a_som.shape}, {u_som.shape}"
        )
    return gate(u_som) * (a_pyr - a_som)


def hidden_error(
    layer: MicrocircuitLayer, a_next, e_next, a_som_next, u_prev, gate: Gate
):
    """Apical-dendrite error of the layer below ``layer``.

    ``gate(u_prev) * [w_topdown @ (a_next + e_next) - w_topdown_predict @ a_som_next]``:
    the pyramidal top-down signal is the PSC coupled with its own error; the
    SOM feedback (negative output, sign applied here) cancels the PSC part.
    In the self-predicting state with matching SOM trajectories this reduces
    exactly to gate(u_prev) * (w_forward.T @ e_next).
    """
    a_next = np.asarray(a_next)
    e_next = np.asarray(e_next)
    a_som_next = np.asarray(a_som_next)
    u_prev = np.asarray(u_prev)
    if not (a_next.shape == e_next.shape == a_som_next.shape):
        raise ValueError("next-layer traces must share a shape")
    if a_next.shape[0] != layer.n_out or u_prev.shape[0] != layer.n_in:
        raise ValueError(
            f"layer is {layer.n_in}->{layer.n_out}; got next size "
            f"{a_next.shape[0]}, previous size {u_prev.shape[0]}"
        )
    total = layer.w_topdown @ (a_next + e_next) - layer.w_topdown_predict @ a_som_next
    return gate(u_prev) * total


@dataclass
class LayerTrace:
    """Per-layer records of one rollout; arrays are (n_out, n_steps)."""

    a: np.ndarray
    a_som: np.ndarray
    u: np.ndarray
    u_som: np.ndarray
    u_gate: np.ndarray
    u_som_gate: np.ndarray
    s: np.ndarray
    s_som: np.ndarray
    e: np.ndarray | None = None
    e_som: np.ndarray | None = None


@dataclass
class NetworkState:
    """Complete record of a rollout: inputs, per-layer traces, target."""

    grid: TimeGrid
    input_psc: np.ndarray
    input_spikes: np.ndarray | None
    layers: list[LayerTrace]
    a_target: np.ndarray | None


def _stack_signals(signals, grid: TimeGrid, what: str) -> np.ndarray:
    if isinstance(signals, Signal):
        signals = [signals]
    if isinstance(signals, np.ndarray):
        arr = np.asarray(signals, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != grid.n_steps:
            raise ValueError(f"{what} array must be (channels, {grid.n_steps})")
        return arr
    rows = []
    for sig in signals:
        if sig.grid != grid:
            raise ValueError(f"{what} grid mismatch")
        rows.append(sig.values)
    return np.array(rows, dtype=np.float64)


def _validate_chain(layers, n_inputs: int):
    size = n_inputs
    for i, layer in enumerate(layers):
        if layer.n_in != size:
            raise ValueError(
                f"layer {i} expects {layer.n_in} inputs but receives {size}"
            )
        size = layer.n_out
    return size


def run_network(
    layers: list[MicrocircuitLayer],
    input_currents,
    a_target=None,
    mode: str = MODE_TIED,
    input_spikes: list[SpikeTrain] | None = None,
    assume_self_predicting: bool = False,
    grid: TimeGrid | None = None,
    check_weights: bool = True,
) -> NetworkState:
    """Roll the whole network over the grid and fill in all error signals.

    Per step: all layers advance input-to-output on the same step's PSCs;
    afterwards the output error and the top-down/SOM errors are computed on
    the recorded traces (they are pointwise in time, so evaluating them on
    whole traces is the per-step schedule).  In tied mode the top-down
    weights are checked against the forward ones.  ``assume_self_predicting``
    skips the duplicate SOM integration (trajectories provably coincide) and
    is validated against the weights.

    Inputs and targets may be Signal lists or raw (channels, n_steps) arrays;
    arrays require the ``grid`` argument.  ``check_weights=False`` skips the
    per-call tied/self-predicting consistency scans (training loops validate
    once and keep the weights synced themselves).
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if not layers:
        raise ValueError("need at least one layer")
    if not isinstance(input_currents, np.ndarray):
        grid = input_currents[0].grid
    elif grid is None:
        raise ValueError("array inputs require an explicit grid")
    x = _stack_signals(input_currents, grid, "input")
    _validate_chain(layers, x.shape[0])
    if check_weights and mode == MODE_TIED:
        for i, layer in enumerate(layers):
            if not np.array_equal(layer.w_topdown, layer.w_forward.T):
                raise ValueError(
                    f"tied mode: layer {i} top-down weights are out of sync"
                )
    if check_weights and assume_self_predicting:
        for i, layer in enumerate(layers):
            if not layer.is_self_predicting():
                raise ValueError(f"layer {i} is not in the self-predicting state")

    spikes_arr = None
    if input_spikes is not None:
        spikes_arr = np.array([s.fired for s in input_spikes])
        if spikes_arr.shape != x.shape:
            raise ValueError("input spike trains do not match the input channels")

    T = grid.n_steps
    dt = grid.dt_ms
    for layer in layers:
        layer.reset_state()

    # Pyramidal and SOM populations obey identical dynamics, so each layer
    # steps one stacked state of size 2*n_out (n_out in the fast path).
    # Traces are written time-major and transposed once at the end.
    stacked_w = []
    lam, decay, theta, vrest, inv_tau = [], [], [], [], []
    for layer in layers:
        p = layer.neuron_params
        if assume_self_predicting:
            stacked_w.append(layer.w_forward)
        else:
            stacked_w.append(np.vstack([layer.w_forward, layer.w_predict]))
        lam.append(dt / p.tau_m_ms)
        decay.append(np.exp(-dt / p.tau_s_ms))
        theta.append(p.theta)
        vrest.append(p.v_rest)
        inv_tau.append(1.0 / p.tau_s_ms)
    u_now = [np.zeros(w.shape[0]) for w in stacked_w]
    psc_now = [np.zeros(w.shape[0]) for w in stacked_w]
    buf_u_gate = [np.zeros((T, w.shape[0])) for w in stacked_w]
    buf_u = [np.zeros((T, w.shape[0])) for w in stacked_w]
    buf_s = [np.zeros((T, w.shape[0]), dtype=bool) for w in stacked_w]
    buf_a = [np.zeros((T, w.shape[0])) for w in stacked_w]

    drive0 = stacked_w[0] @ x  # first-layer drive depends only on the input
    n_layers = len(layers)
    for n in range(T):
        prev = None
        for k in range(n_layers):
            buf_u_gate[k][n] = u_now[k]
            i_in = drive0[:, n] if k == 0 else stacked_w[k] @ prev
            if not np.all(np.isfinite(i_in)):
                raise ValueError(f"non-finite drive in layer {k} at step {n}")
            u = u_now[k] + lam[k] * (-(u_now[k] - vrest[k]) + i_in)
            fired = u >= theta[k]
            u = np.where(fired, u - theta[k], u)
            p_new = psc_now[k] * decay[k] + fired * inv_tau[k]
            u_now[k], psc_now[k] = u, p_new
            buf_u[k][n] = u
            buf_s[k][n] = fired
            buf_a[k][n] = p_new
            prev = p_new[: layers[k].n_out]

    traces = []
    for k, layer in enumerate(layers):
        m = layer.n_out
        u_gate_all = np.ascontiguousarray(buf_u_gate[k].T)
        u_all = np.ascontiguousarray(buf_u[k].T)
        s_all = np.ascontiguousarray(buf_s[k].T)
        a_all = np.ascontiguousarray(buf_a[k].T)
        if assume_self_predicting:
            tr = LayerTrace(
                a=a_all, a_som=a_all, u=u_all, u_som=u_all,
                u_gate=u_gate_all, u_som_gate=u_gate_all,
                s=s_all, s_som=s_all,
            )
        else:
            tr = LayerTrace(
                a=a_all[:m], a_som=a_all[m:], u=u_all[:m], u_som=u_all[m:],
                u_gate=u_gate_all[:m], u_som_gate=u_gate_all[m:],
                s=s_all[:m], s_som=s_all[m:],
            )
        # leave the layer's public state consistent with the last step
        layer.pyr_u = u_now[k][:m].copy()
        layer.som_u = u_now[k][m:].copy() if not assume_self_predicting else u_now[k][:m].copy()
        layer.pyr_psc = psc_now[k][:m].copy()
        layer.som_psc = psc_now[k][m:].copy() if not assume_self_predicting else psc_now[k][:m].copy()
        traces.append(tr)

    target = None
    if a_target is not None:
        target = _stack_signals(a_target, grid, "target")
        if target.shape[0] != layers[-1].n_out:
            raise ValueError(
                f"target has {target.shape[0]} channels, output layer "
                f"has {layers[-1].n_out}"
            )
        top = traces[-1]
        top.e = output_error(top.a, target, top.u_gate, layers[-1].gate)
        for k in range(len(layers) - 2, -1, -1):
            nxt, tr = traces[k + 1], traces[k]
            tr.e = hidden_error(
                layers[k + 1], nxt.a, nxt.e, nxt.a_som, tr.u_gate, layers[k].gate
            )
        for layer, tr in zip(layers, traces):
            tr.e_som = som_error(tr.a, tr.a_som, tr.u_som_gate, layer.gate)

    return NetworkState(grid, x, spikes_arr, traces, target)


def run_inference(
    layers: list[MicrocircuitLayer], input_currents
) -> list[np.ndarray]:
    """Forward pass using only the forward weights and pyramidal cells.

    Returns per-layer spike arrays; must match the spikes of a full
    :func:`run_network` pass, since errors never touch the dynamics.
    """
    grid = input_currents[0].grid
    x = _stack_signals(input_currents, grid, "input")
    _validate_chain(layers, x.shape[0])
    T, dt = grid.n_steps, grid.dt_ms
    us = [np.zeros(layer.n_out) for layer in layers]
    pscs = [np.zeros(layer.n_out) for layer in layers]
    spikes = [np.zeros((layer.n_out, T), dtype=bool) for layer in layers]
    for n in range(T):
        prev = x[:, n]
        for k, layer in enumerate(layers):
            p = layer.neuron_params
            us[k], fired = lif_step_array(us[k], layer.w_forward @ prev, p, dt)
            pscs[k] = pscs[k] * np.exp(-dt / p.tau_s_ms) + fired / p.tau_s_ms
            spikes[k][:, n] = fired
            prev = pscs[k]
    return spikes

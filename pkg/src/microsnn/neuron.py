"""Leaky integrate-and-fire dynamics, discretized with fixed-step forward Euler.

Update order within a step: integrate, threshold-test, then subtract-theta
reset.  Subtracting (rather than clamping to rest) keeps any supra-threshold
overshoot, matching a reset impulse of size theta at the firing time.  At
most one spike is emitted per step, and there is no refractory period.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signals import Signal, SpikeTrain


@dataclass(frozen=True)
class NeuronParams:
    tau_m_ms: float = 50.0
    tau_s_ms: float = 20.0
    theta: float = 1.0
    v_rest: float = 0.0

    def __post_init__(self):
        if self.tau_m_ms <= 0 or self.tau_s_ms <= 0:
            raise ValueError("time constants must be positive")
        if not self.theta > self.v_rest:
            raise ValueError("firing threshold must exceed the resting potential")


@dataclass
class LifState:
    """Mutable per-neuron state: the membrane potential."""

    u: float = 0.0


def lif_step(
    state: LifState, input_current: float, params: NeuronParams, dt_ms: float
) -> tuple[float, bool]:
    """Advance one Euler step; returns (new potential, fired flag).

    ``u' = u + (dt/tau_m) * (-(u - v_rest) + I)``; on ``u' >= theta`` the
    neuron fires and theta is subtracted.
    """
    if dt_ms <= 0:
        raise ValueError("dt_ms must be positive")
    if not np.isfinite(input_current):
        raise ValueError(f"non-finite input current: {input_current}")
    u = state.u + (dt_ms / params.tau_m_ms) * (
        -(state.u - params.v_rest) + input_current
    )
    spiked = u >= params.theta
    if spiked:
        u -= params.theta
    state.u = u
    return u, bool(spiked)


def lif_step_array(
    u: np.ndarray, input_current: np.ndarray, params: NeuronParams, dt_ms: float
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`lif_step` over a population; same semantics per element."""
    if not np.all(np.isfinite(input_current)):
        raise ValueError("non-finite input current")
    u_new = u + (dt_ms / params.tau_m_ms) * (-(u - params.v_rest) + input_current)
    spiked = u_new >= params.theta
    u_new = np.where(spiked, u_new - params.theta, u_new)
    return u_new, spiked


def run_neuron(
    input_current: Signal, params: NeuronParams, initial_u: float = 0.0
) -> tuple[SpikeTrain, Signal]:
    """Drive a single neuron over the whole grid.

    Returns the spike train and the membrane trace; the trace records the
    post-reset potential of each step.
    """
    grid = input_current.grid
    state = LifState(u=initial_u)
    fired = np.zeros(grid.n_steps, dtype=bool)
    u_trace = np.zeros(grid.n_steps)
    for n in range(grid.n_steps):
        u_trace[n], fired[n] = lif_step(
            state, input_current.values[n], params, grid.dt_ms
        )
    return SpikeTrain(grid, fired), Signal(grid, u_trace)

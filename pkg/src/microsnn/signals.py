"""Time grids, sampled signals, spike trains, kernels and the van Rossum loss.

Everything else in the package is built on the types defined here.  All
series live on a shared uniform :class:`TimeGrid`.  Two conventions matter
throughout:

* A spike train is a series of unit impulses (each spike has integral one).
  Convolving a spike train with a kernel therefore sums shifted kernel
  copies *without* a dt factor, so a single spike through ``epsilon_kernel``
  peaks at ``1/tau_s`` regardless of the step size.
* Convolving two sampled functions is a left Riemann sum *with* the dt
  factor (:func:`convolve_causal`).

All arithmetic is 64-bit; every constructed :class:`Signal` is checked to be
finite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TimeGrid:
    """Uniform sampling of [0, duration_ms) with step dt_ms."""

    duration_ms: float
    dt_ms: float
    n_steps: int

    def times(self) -> np.ndarray:
        """Sample times in ms, ``t[n] = n * dt_ms``."""
        return np.arange(self.n_steps, dtype=np.float64) * self.dt_ms


def make_grid(duration_ms: float, dt_ms: float) -> TimeGrid:
    """Build a grid with ``n_steps = round(duration_ms / dt_ms)``."""
    if not (np.isfinite(duration_ms) and np.isfinite(dt_ms)):
        raise ValueError("grid parameters must be finite")
    if duration_ms <= 0 or dt_ms <= 0:
        raise ValueError(
            f"duration_ms and dt_ms must be positive, got {duration_ms}, {dt_ms}"
        )
    if duration_ms < dt_ms:
        raise ValueError("duration_ms must be at least one step dt_ms")
    n_steps = int(round(duration_ms / dt_ms))
    return TimeGrid(float(duration_ms), float(dt_ms), max(n_steps, 1))


@dataclass
class Signal:
    """A real-valued series sampled on a TimeGrid (PSCs, errors, kernels)."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.grid.n_steps,):
            raise ValueError(
                f"signal length {self.values.shape} does not match grid "
                f"({self.grid.n_steps} steps)"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("signal contains non-finite values")

    @classmethod
    def zeros(cls, grid: TimeGrid) -> "Signal":
        return cls(grid, np.zeros(grid.n_steps))


@dataclass
class SpikeTrain:
    """Binary series marking firing steps; at most one spike per step."""

    grid: TimeGrid
    fired: np.ndarray

    def __post_init__(self):
        self.fired = np.asarray(self.fired, dtype=bool)
        if self.fired.shape != (self.grid.n_steps,):
            raise ValueError(
                f"spike train length {self.fired.shape} does not match grid "
                f"({self.grid.n_steps} steps)"
            )

    @classmethod
    def empty(cls, grid: TimeGrid) -> "SpikeTrain":
        return cls(grid, np.zeros(grid.n_steps, dtype=bool))

    @classmethod
    def from_steps(cls, grid: TimeGrid, steps) -> "SpikeTrain":
        fired = np.zeros(grid.n_steps, dtype=bool)
        fired[np.asarray(steps, dtype=int)] = True
        return cls(grid, fired)

    def spike_steps(self) -> np.ndarray:
        return np.nonzero(self.fired)[0]

    def count(self) -> int:
        return int(self.fired.sum())


@dataclass(frozen=True)
class StdpParams:
    """Two-sided exponential plasticity kernel parameters (A+, A-, tau+, tau-)."""

    a_plus: float = 0.00004
    a_minus: float = 0.0
    tau_plus_ms: float = 30.0
    tau_minus_ms: float = 30.0

    def __post_init__(self):
        if self.tau_plus_ms <= 0 or self.tau_minus_ms <= 0:
            raise ValueError("STDP time constants must be positive")
        if self.a_plus < 0 or self.a_minus < 0:
            raise ValueError("STDP amplitudes must be non-negative")


def _check_same_grid(a, b):
    if a.grid != b.grid:
        raise ValueError(f"grid mismatch: {a.grid} vs {b.grid}")


def exp_kernel(amplitude: float, tau_ms: float, grid: TimeGrid) -> Signal:
    """Sampled one-sided exponential ``amplitude * exp(-t / tau)``, t >= 0."""
    if tau_ms <= 0:
        raise ValueError(f"time constant must be positive, got {tau_ms}")
    return Signal(grid, amplitude * np.exp(-grid.times() / tau_ms))


def epsilon_kernel(tau_s_ms: float, grid: TimeGrid) -> Signal:
    """Synaptic impulse response, ``(1/tau_s) exp(-t/tau_s)`` for t >= 0.

    Normalized so its continuous-time integral is one; a single presynaptic
    spike produces a PSC that peaks at ``1/tau_s``.
    """
    if tau_s_ms <= 0:
        raise ValueError(f"tau_s_ms must be positive, got {tau_s_ms}")
    return exp_kernel(1.0 / tau_s_ms, tau_s_ms, grid)


def zeta_kernel(tau_m_ms: float, grid: TimeGrid) -> Signal:
    """Membrane impulse response, ``(1/tau_m) exp(-t/tau_m)`` for t >= 0."""
    if tau_m_ms <= 0:
        raise ValueError(f"tau_m_ms must be positive, got {tau_m_ms}")
    return exp_kernel(1.0 / tau_m_ms, tau_m_ms, grid)


def stdp_kernel(params: StdpParams, grid: TimeGrid) -> tuple[Signal, Signal]:
    """Sampled magnitudes of the two kernel sides.

    ``positive_side[n] = A+ exp(-n dt / tau+)`` applies to causal pairs
    (post at or after pre, offset >= 0); ``negative_side[n] = A- exp(-n dt / tau-)``
    applies to acausal pairs (offset < 0).  Both are stored unsigned; use
    sites subtract the negative side.
    """
    return (
        exp_kernel(params.a_plus, params.tau_plus_ms, grid),
        exp_kernel(params.a_minus, params.tau_minus_ms, grid),
    )


def convolve_causal(x: Signal, k: Signal) -> Signal:
    """Riemann-sum convolution of two sampled functions.

    ``out[n] = sum_{m<=n} x[m] * k[n-m] * dt``; output is truncated to the
    grid window.
    """
    _check_same_grid(x, k)
    n = x.grid.n_steps
    out = np.convolve(x.values, k.values)[:n] * x.grid.dt_ms
    return Signal(x.grid, out)


def psc_from_spikes(s: SpikeTrain, k: Signal) -> Signal:
    """Sum of kernel copies shifted to the spike times.

    Each spike is a unit impulse, so there is no dt factor:
    ``out[n] = sum_{f: t_f <= n} k[n - t_f]``.
    """
    _check_same_grid(s, k)
    n = s.grid.n_steps
    out = np.convolve(s.fired.astype(np.float64), k.values)[:n]
    return Signal(s.grid, out)


def impulse_signal(s: SpikeTrain) -> Signal:
    """Spike train as a sampled function: value ``1/dt`` at each spike step.

    ``psc_from_spikes(s, k) == convolve_causal(impulse_signal(s), k)``.
    """
    return Signal(s.grid, s.fired.astype(np.float64) / s.grid.dt_ms)


def van_rossum_loss(a_out: Signal, a_target: Signal) -> float:
    """Half the integrated squared difference between two filtered trains."""
    _check_same_grid(a_out, a_target)
    diff = a_target.values - a_out.values
    return 0.5 * float(np.dot(diff, diff)) * a_out.grid.dt_ms

"""Synaptic current models: voltage-independent F-type weighting, the
voltage-dependent E-type gating B(u), and the surrogate derivative it
shadows.

The reversal-potential factor of the conductance model is absorbed into the
weights (it is much larger than the firing threshold), so an F-type synapse
is a plain weighted sum of presynaptic PSCs.  E-type synapses multiply by
B(u), a saturating function of the postsynaptic membrane potential that
peaks near the firing threshold; mirrored around theta it closely tracks
the surrogate derivative used by the backprop reference.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

GATE_PLAIN = "plain"
GATE_MIRRORED = "mirrored"
GATE_SIGMA_PRIME = "sigma_prime"
GATE_MODES = (GATE_PLAIN, GATE_MIRRORED, GATE_SIGMA_PRIME)


@dataclass(frozen=True)
class GatingParams:
    """NMDA-style gating constants; defaults are the fitted values that make
    the mirrored gate overlap the surrogate derivative."""

    g_max: float = 109.45
    k: float = 1.18
    n: float = 124.33
    u0: float = 1.0
    mg: float = 1.0  # extracellular magnesium concentration, mM

    def __post_init__(self):
        if self.g_max <= 0 or self.k <= 0 or self.n <= 0 or self.mg <= 0:
            raise ValueError("gating parameters must be positive")


@dataclass(frozen=True)
class SynapseConfig:
    """Synapse class marker: F-type (gating identically 1) or E-type (gated).

    ``e_syn_absorbed`` documents that the reversal-potential factor is folded
    into the weights; it is always true in this implementation.
    """

    kind: str = "F_type"
    gating: GatingParams | None = None
    e_syn_absorbed: bool = True

    def __post_init__(self):
        if self.kind not in ("F_type", "E_type"):
            raise ValueError(f"unknown synapse kind {self.kind!r}")
        if self.kind == "E_type" and self.gating is None:
            raise ValueError("E_type synapses need gating parameters")
        if not self.e_syn_absorbed:
            raise ValueError("the reversal potential is always absorbed into weights")


def gating_B(u, params: GatingParams):
    """Voltage-dependent gate ``g_max / (1 + exp(-k (u - u0)) * mg * n)``.

    Monotone in u, bounded in (0, g_max).  Accepts scalars or arrays.  For
    strongly hyperpolarized inputs the exponential overflows to inf and the
    gate cleanly underflows to its 0 limit.
    """
    u = np.asarray(u, dtype=np.float64)
    with np.errstate(over="ignore"):
        out = params.g_max / (
            1.0 + np.exp(-params.k * (u - params.u0)) * params.mg * params.n
        )
    return out if out.ndim else float(out)


def gating_B_mirrored(u, params: GatingParams, theta: float = 1.0):
    """B reflected around the firing threshold: values above theta reuse the
    sub-threshold branch, so the gate peaks exactly at u = theta."""
    u = np.asarray(u, dtype=np.float64)
    folded = np.where(u > theta, 2.0 * theta - u, u)
    out = gating_B(folded, params)
    return out if np.ndim(out) else float(out)


def surrogate_sigma_prime(u, theta: float = 1.0):
    """Surrogate spike derivative ``1 / (1 + |u - theta|)^2``; max 1 at theta."""
    u = np.asarray(u, dtype=np.float64)
    out = 1.0 / np.square(1.0 + np.abs(u - theta))
    return out if out.ndim else float(out)


def f_type_current(weights: np.ndarray, presyn_psc: np.ndarray) -> np.ndarray | float:
    """Weighted sum of presynaptic PSCs; no postsynaptic voltage dependence.

    ``weights`` is a row (n_in,) for one neuron or a matrix (n_out, n_in).
    """
    weights = np.asarray(weights, dtype=np.float64)
    presyn_psc = np.asarray(presyn_psc, dtype=np.float64)
    if weights.shape[-1] != presyn_psc.shape[0]:
        raise ValueError(
            f"weight fan-in {weights.shape[-1]} does not match "
            f"{presyn_psc.shape[0]} presynaptic channels"
        )
    out = weights @ presyn_psc
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class Gate:
    """Bundled gating choice applied at every error-computation site.

    ``mode`` selects plain B, B mirrored at theta (default), or the surrogate
    derivative itself (used to make the microcircuit/backprop comparison
    exact).
    """

    params: GatingParams = field(default_factory=GatingParams)
    mode: str = GATE_MIRRORED
    theta: float = 1.0

    def __post_init__(self):
        if self.mode not in GATE_MODES:
            raise ValueError(f"unknown gate mode {self.mode!r}; expected {GATE_MODES}")

    def __call__(self, u):
        if self.mode == GATE_PLAIN:
            return gating_B(u, self.params)
        if self.mode == GATE_MIRRORED:
            return gating_B_mirrored(u, self.params, self.theta)
        return surrogate_sigma_prime(u, self.theta)

"""STDP machinery and the three local weight-update rules, plus the training
loops that drive them.

All three rules are the same operation — a timing kernel applied between a
presynaptic spike train and a postsynaptic signal — with different signal
choices:

* forward weights:           pre = previous layer's pyramidal spikes,
                             post = this layer's apical error;
* predict weights:           same pre, post = the SOM teaching mismatch;
* top-down predict weights:  pre = this layer's SOM spikes,
                             post = the previous layer's apical error.

The two-sided exponential kernel is evaluated in two interchangeable forms:
a brute-force sum over spike pairs (:func:`stdp_pairwise`, the oracle) and a
filter-then-integrate form (:func:`stdp_convolved`) that also accepts error
signals as the postsynaptic factor.  A "discrete_delta" kernel mode replaces
the kernel by the discrete identity (value 1 at zero lag), the setting under
which the local rules and the backprop reference coincide.

Updates are accumulated over the full simulation window and applied once
per sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .microcircuit import (
    MODE_FEEDBACK_ALIGNMENT,
    MODE_TIED,
    MicrocircuitLayer,
    NetworkState,
    run_network,
)
from .signals import Signal, SpikeTrain, StdpParams

KERNEL_CONTINUOUS = "continuous"
KERNEL_DISCRETE = "discrete_delta"
KERNEL_MODES = (KERNEL_CONTINUOUS, KERNEL_DISCRETE)

RULE_LOCAL = "local"
RULE_BP = "bp_reference"


@dataclass
class LearnRates:
    """Learning rates of the three trained synapse classes.

    ``eta_predict`` defaults to twice ``eta_forward``: the predict weights
    chase a moving target (their paired pyramidal cells) and must keep up.
    ``eta_error`` defaults to ``eta_forward``.
    """

    eta_forward: float
    eta_predict: float | None = None
    eta_error: float | None = None

    def __post_init__(self):
        if self.eta_predict is None:
            self.eta_predict = 2.0 * self.eta_forward
        if self.eta_error is None:
            self.eta_error = self.eta_forward
        if min(self.eta_forward, self.eta_predict, self.eta_error) < 0:
            raise ValueError("learning rates must be non-negative")


@dataclass
class UpdateBatch:
    """Per-layer weight increments produced by one (or more) rollouts."""

    d_forward: list[np.ndarray]
    d_predict: list[np.ndarray]
    d_topdown_predict: list[np.ndarray]

    @classmethod
    def zeros(cls, layers: list[MicrocircuitLayer]) -> "UpdateBatch":
        return cls(
            [np.zeros_like(l.w_forward) for l in layers],
            [np.zeros_like(l.w_predict) for l in layers],
            [np.zeros_like(l.w_topdown_predict) for l in layers],
        )

    def accumulate(self, other: "UpdateBatch"):
        for mine, theirs in (
            (self.d_forward, other.d_forward),
            (self.d_predict, other.d_predict),
            (self.d_topdown_predict, other.d_topdown_predict),
        ):
            for a, b in zip(mine, theirs, strict=True):
                a += b


def filter_causal_exp(x: np.ndarray, decay: float, amplitude: float) -> np.ndarray:
    """Exact recursion ``y[t] = decay * y[t-1] + amplitude * x[t]``.

    Equals the causal side of the kernel summed over past events, including
    zero lag.  ``x`` is (channels, T) or (T,).
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.empty_like(x)
    acc = np.zeros(x.shape[0])
    for t in range(x.shape[1]):
        acc = decay * acc + amplitude * x[:, t]
        y[:, t] = acc
    return y


def filter_anticausal_exp(x: np.ndarray, decay: float, amplitude: float) -> np.ndarray:
    """Strictly-future mirror: ``y[t] = sum_{m>t} amplitude * decay^(m-t) * x[m]``."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.empty_like(x)
    acc = np.zeros(x.shape[0])
    for t in range(x.shape[1] - 1, -1, -1):
        y[:, t] = acc
        acc = decay * (acc + amplitude * x[:, t])
    return y


def presyn_trace(
    x: np.ndarray,
    params: StdpParams,
    dt_ms: float,
    kernel_mode: str = KERNEL_CONTINUOUS,
    is_spikes: bool = True,
) -> np.ndarray:
    """Presynaptic activity filtered by the two-sided kernel, (channels, T).

    Spike trains are impulse sums (no dt); sampled current signals get the
    Riemann dt.  In discrete mode the kernel is the identity in either case.
    """
    if kernel_mode not in KERNEL_MODES:
        raise ValueError(f"unknown kernel mode {kernel_mode!r}")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if kernel_mode == KERNEL_DISCRETE:
        return x.copy()
    out = filter_causal_exp(x, np.exp(-dt_ms / params.tau_plus_ms), params.a_plus)
    if params.a_minus != 0.0:
        out = out - filter_anticausal_exp(
            x, np.exp(-dt_ms / params.tau_minus_ms), params.a_minus
        )
    if not is_spikes:
        out *= dt_ms
    return out


def stdp_pairwise(pre: SpikeTrain, post: SpikeTrain, params: StdpParams) -> float:
    """Brute-force sum of the signed kernel over all spike pairs.

    Zero lag counts as causal (the kernel's positive side includes 0).
    Kept deliberately naive; this is the oracle the filtered form is checked
    against.
    """
    if pre.grid != post.grid:
        raise ValueError("grid mismatch between spike trains")
    dt = pre.grid.dt_ms
    total = 0.0
    for t_post in post.spike_steps():
        for t_pre in pre.spike_steps():
            lag = (t_post - t_pre) * dt
            if lag >= 0:
                total += params.a_plus * np.exp(-lag / params.tau_plus_ms)
            else:
                total -= params.a_minus * np.exp(lag / params.tau_minus_ms)
    return total


def stdp_convolved(
    pre: SpikeTrain,
    post_signal,
    params: StdpParams,
    eta: float = 1.0,
    kernel_mode: str = KERNEL_CONTINUOUS,
) -> float:
    """Filtered form: eta * integral of (pre * kernel)(t) times the post factor.

    ``post_signal`` may be a SpikeTrain (pure timing rule; delta sampling, no
    dt) or a Signal such as an error trace (Riemann integral with dt).  For
    spike-train posts this equals :func:`stdp_pairwise` up to rounding.
    """
    if pre.grid != post_signal.grid:
        raise ValueError("grid mismatch between pre and post")
    trace = presyn_trace(
        pre.fired.astype(np.float64), params, pre.grid.dt_ms, kernel_mode
    )[0]
    if isinstance(post_signal, SpikeTrain):
        return eta * float(trace[post_signal.fired].sum())
    if isinstance(post_signal, Signal):
        return eta * float(trace @ post_signal.values) * pre.grid.dt_ms
    raise TypeError(f"post_signal must be Signal or SpikeTrain, got {type(post_signal)}")


def _input_trace(state: NetworkState, params, kernel_mode):
    if state.input_spikes is not None:
        return presyn_trace(
            state.input_spikes.astype(np.float64),
            params,
            state.grid.dt_ms,
            kernel_mode,
        )
    # current-encoded inputs: the signal itself is the presynaptic factor
    return presyn_trace(
        state.input_psc, params, state.grid.dt_ms, kernel_mode, is_spikes=False
    )


def local_updates(
    state: NetworkState,
    layers: list[MicrocircuitLayer],
    rates: LearnRates,
    params: StdpParams,
    kernel_mode: str = KERNEL_CONTINUOUS,
    forward_only: bool = False,
) -> UpdateBatch:
    """All three weight updates for one completed rollout.

    For layer k with presynaptic filtered trace F (n_in, T) and error traces
    E, E_som (n_out, T):

    * ``d_forward = eta_f * E @ F.T * dt``
    * ``d_predict = eta_p * E_som @ F.T * dt``
    * ``d_topdown_predict = eta_e * E_prev @ G.T * dt`` with G the filtered
      SOM spikes of layer k; the first layer has no upstream error and gets
      zeros.

    ``forward_only`` fills the predict/top-down batches with zeros; used by
    hard-synced self-predicting training where they are overwritten anyway.
    """
    if len(state.layers) != len(layers):
        raise ValueError("state and layers disagree on depth")
    for tr in state.layers:
        if tr.e is None or tr.e_som is None:
            raise ValueError("state has no error signals; run with a target")
    dt = state.grid.dt_ms
    d_forward, d_predict, d_tdp = [], [], []
    pre = _input_trace(state, params, kernel_mode)
    for k, (layer, tr) in enumerate(zip(layers, state.layers)):
        d_forward.append(rates.eta_forward * (tr.e @ pre.T) * dt)
        if forward_only:
            d_predict.append(np.zeros_like(layer.w_predict))
            d_tdp.append(np.zeros_like(layer.w_topdown_predict))
        else:
            d_predict.append(rates.eta_predict * (tr.e_som @ pre.T) * dt)
            if k == 0:
                d_tdp.append(np.zeros_like(layer.w_topdown_predict))
            else:
                som_trace = presyn_trace(
                    tr.s_som.astype(np.float64), params, dt, kernel_mode
                )
                prev_e = state.layers[k - 1].e
                d_tdp.append(rates.eta_error * (prev_e @ som_trace.T) * dt)
        if k < len(layers) - 1:
            pre = presyn_trace(tr.s.astype(np.float64), params, dt, kernel_mode)
    return UpdateBatch(d_forward, d_predict, d_tdp)


def apply_updates(
    layers: list[MicrocircuitLayer], batch: UpdateBatch, mode: str = MODE_TIED
):
    """Increment the weights; in tied mode the top-down weights are re-synced
    to the forward ones, in feedback-alignment mode they stay frozen."""
    for layer, df, dp, dtp in zip(
        layers,
        batch.d_forward,
        batch.d_predict,
        batch.d_topdown_predict,
        strict=True,
    ):
        if (
            df.shape != layer.w_forward.shape
            or dp.shape != layer.w_predict.shape
            or dtp.shape != layer.w_topdown_predict.shape
        ):
            raise ValueError("update batch shapes do not match the layers")
        layer.w_forward += df
        layer.w_predict += dp
        layer.w_topdown_predict += dtp
        if mode == MODE_TIED:
            layer.sync_topdown()
        elif mode != MODE_FEEDBACK_ALIGNMENT:
            raise ValueError(f"unknown mode {mode!r}")


def trace_loss(a: np.ndarray, target: np.ndarray, dt_ms: float) -> float:
    """Summed van Rossum loss over output channels, on raw (n, T) traces."""
    diff = np.asarray(target) - np.asarray(a)
    return 0.5 * float(np.sum(diff * diff)) * dt_ms


@dataclass
class TrainLog:
    losses: list[float] = field(default_factory=list)
    accuracy_per_epoch: list[float] = field(default_factory=list)
    gap_topdown_predict: list[float] = field(default_factory=list)
    gap_forward_predict: list[float] = field(default_factory=list)


def _weight_gaps(layers):
    """Mean absolute gaps of the two weight pairings, over the layers whose
    feedback actually carries error (the first layer's top-down matrices
    target the input encoding layer, which receives none and never trains
    them)."""
    used = layers[1:] if len(layers) > 1 else layers
    gtd = float(
        np.mean(
            np.concatenate(
                [np.abs(l.w_topdown_predict - l.w_topdown).ravel() for l in used]
            )
        )
    )
    gfw = float(
        np.mean(
            np.concatenate([np.abs(l.w_predict - l.w_forward).ravel() for l in used])
        )
    )
    return gtd, gfw


def train_regression(
    layers: list[MicrocircuitLayer],
    input_currents,
    target,
    iterations: int,
    rates: LearnRates,
    stdp_params: StdpParams,
    kernel_mode: str = KERNEL_CONTINUOUS,
    mode: str = MODE_TIED,
    input_spikes=None,
    track_gaps: bool = True,
) -> TrainLog:
    """Fit one fixed (inputs, target-signal) pair for a number of iterations.

    Loss is recorded per iteration before the update, so ``losses[0]`` is the
    untouched network's loss.
    """
    log = TrainLog()
    for _ in range(iterations):
        state = run_network(
            layers, input_currents, target, mode=mode, input_spikes=input_spikes
        )
        log.losses.append(
            trace_loss(state.layers[-1].a, state.a_target, state.grid.dt_ms)
        )
        if track_gaps:
            gtd, gfw = _weight_gaps(layers)
            log.gap_topdown_predict.append(gtd)
            log.gap_forward_predict.append(gfw)
        batch = local_updates(state, layers, rates, stdp_params, kernel_mode)
        apply_updates(layers, batch, mode)
    return log


def sync_self_predicting(layers):
    for layer in layers:
        layer.make_self_predicting()


def _rollout_sample(layers, sample, grid, gain, hi, lo, n_classes, sync,
                    check_weights=False):
    from .data_io import encode_image_array, target_array_from_label

    currents = encode_image_array(sample.features, grid, gain)
    target = target_array_from_label(sample.label, n_classes, grid, hi, lo)
    state = run_network(
        layers,
        currents,
        target,
        mode=MODE_TIED,
        assume_self_predicting=sync,
        grid=grid,
        check_weights=check_weights,
    )
    return state


def evaluate_classifier(
    layers, samples, grid, gain: float = 1.0, sync: bool = True, threads: int = 1
) -> float:
    """Fraction of samples whose integrated output PSC peaks on the label."""
    from .data_io import encode_image_array, predict_label

    def _predict_chunk(chunk):
        hits = 0
        for sample in chunk:
            currents = encode_image_array(sample.features, grid, gain)
            state = run_network(
                layers,
                currents,
                None,
                mode=MODE_TIED,
                assume_self_predicting=sync,
                grid=grid,
                check_weights=False,
            )
            if predict_label(state.layers[-1].a, grid.dt_ms) == sample.label:
                hits += 1
        return hits

    if threads <= 1:
        return _predict_chunk(samples) / len(samples)
    from concurrent.futures import ThreadPoolExecutor

    chunks = [samples[i::threads] for i in range(threads)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        hits = sum(pool.map(_predict_chunk, chunks))
    return hits / len(samples)


def train_classifier(
    layers: list[MicrocircuitLayer],
    train_samples,
    epochs: int,
    rates: LearnRates,
    stdp_params: StdpParams,
    grid,
    gain: float = 1.0,
    hi: float = 1.0,
    lo: float = 0.0,
    n_classes: int = 10,
    kernel_mode: str = KERNEL_DISCRETE,
    rule: str = RULE_LOCAL,
    sync: bool = True,
    eval_samples=None,
    seed: int = 0,
    shuffle: bool = True,
    bp_kernel=None,
    eval_threads: int = 1,
) -> TrainLog:
    """Per-sample training of a label-encoded classifier.

    ``rule`` selects the local microcircuit updates or the backprop-reference
    updates on the identical rollout machinery.  With ``sync`` the network is
    held in the self-predicting state (all four weight classes re-synced
    after every sample), the setting under which the two rules coincide.
    """
    if rule not in (RULE_LOCAL, RULE_BP):
        raise ValueError(f"unknown rule {rule!r}")
    if rule == RULE_BP:
        from .bp_ref import bp_gradients, kappa_bp

        if bp_kernel is None:
            form = "discrete_delta" if kernel_mode == KERNEL_DISCRETE else "main_text"
            bp_kernel = kappa_bp(
                form,
                layers[0].neuron_params.tau_s_ms,
                layers[0].neuron_params.tau_m_ms,
                grid,
            )
    if sync:
        sync_self_predicting(layers)
    for i, layer in enumerate(layers):
        if sync and not layer.is_self_predicting():
            raise ValueError(f"layer {i} failed to reach the self-predicting state")
    log = TrainLog()
    order = np.arange(len(train_samples))
    for epoch in range(epochs):
        if shuffle:
            order = np.random.default_rng((seed, epoch)).permutation(len(train_samples))
        for idx in order:
            sample = train_samples[idx]
            state = _rollout_sample(
                layers, sample, grid, gain, hi, lo, n_classes, sync
            )
            log.losses.append(
                trace_loss(state.layers[-1].a, state.a_target, grid.dt_ms)
            )
            if rule == RULE_LOCAL:
                batch = local_updates(
                    state, layers, rates, stdp_params, kernel_mode,
                    forward_only=sync,
                )
                apply_updates(layers, batch, MODE_TIED)
            else:
                grads = bp_gradients(
                    state,
                    layers,
                    kernel=bp_kernel,
                    eta=rates.eta_forward,
                    theta=layers[0].neuron_params.theta,
                )
                for layer, du in zip(layers, grads.updates):
                    layer.w_forward += du
                    layer.sync_topdown()
            if sync:
                sync_self_predicting(layers)
        if eval_samples is not None:
            log.accuracy_per_epoch.append(
                evaluate_classifier(
                    layers, eval_samples, grid, gain, sync, eval_threads
                )
            )
    return log


def train(
    layers,
    dataset,
    epochs: int,
    rates: LearnRates,
    stdp_params: StdpParams,
    seed: int = 0,
    **kwargs,
) -> TrainLog:
    """Dispatch on the dataset: signal targets train the regression loop,
    labeled samples the classifier loop."""
    first = dataset[0]
    if first.is_classification():
        return train_classifier(
            layers,
            dataset,
            epochs=epochs,
            rates=rates,
            stdp_params=stdp_params,
            seed=seed,
            **kwargs,
        )
    if len(dataset) != 1:
        raise ValueError("regression training expects a single fixed sample")
    return train_regression(
        layers,
        first.input_currents,
        first.target,
        iterations=epochs,
        rates=rates,
        stdp_params=stdp_params,
        input_spikes=first.input_spikes,
        **kwargs,
    )

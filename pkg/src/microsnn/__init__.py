"""Spiking microcircuit simulation with local STDP learning rules and a
surrogate-gradient backprop reference for validating their equivalence."""

from .signals import (
    Signal,
    SpikeTrain,
    StdpParams,
    TimeGrid,
    convolve_causal,
    epsilon_kernel,
    impulse_signal,
    make_grid,
    psc_from_spikes,
    stdp_kernel,
    van_rossum_loss,
    zeta_kernel,
)
from .neuron import LifState, NeuronParams, lif_step, lif_step_array, run_neuron
from .synapse import (
    Gate,
    GatingParams,
    SynapseConfig,
    f_type_current,
    gating_B,
    gating_B_mirrored,
    surrogate_sigma_prime,
)
from .microcircuit import (
    MODE_FEEDBACK_ALIGNMENT,
    MODE_TIED,
    MicrocircuitLayer,
    NetworkState,
    forward_step,
    hidden_error,
    output_error,
    run_inference,
    run_network,
    som_error,
)
from .plasticity import (
    KERNEL_CONTINUOUS,
    KERNEL_DISCRETE,
    LearnRates,
    TrainLog,
    UpdateBatch,
    apply_updates,
    evaluate_classifier,
    local_updates,
    stdp_convolved,
    stdp_pairwise,
    train,
    train_classifier,
    train_regression,
)
from .bp_ref import (
    BpGradState,
    BpKernel,
    EquivalenceReport,
    bp_full_dependency_grads,
    bp_gradients,
    bp_hidden_grads,
    bp_output_grads,
    equivalence_check,
    kappa_bp,
    kappa_bp_numeric,
)
from .data_io import (
    IdxFormatError,
    LabeledSample,
    ToyConfig,
    encode_image,
    gen_toy_inputs,
    gen_toy_spikes,
    gen_toy_target,
    load_mnist_idx,
    predict_label,
    target_from_label,
    toy_sample,
    write_idx_images,
    write_idx_labels,
)

__version__ = "0.1.0"

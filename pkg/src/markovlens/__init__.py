"""Single-layer transformers on first-order Markov data.

The library samples and enumerates binary or symmetric multi-state chains,
runs an exact float64 transformer forward/backward pass, builds the
closed-form bigram and unigram parameter points, certifies their
stationarity and curvature, and reproduces the weight-tying training
phenomenology with an AdamW harness.
"""

from .markov import (
    MarkovKernel,
    binary_entropy,
    entropy_rate,
    enumerate_all,
    enumerate_weighted_sequences,
    kernel_row,
    marginal_entropy,
    mutual_info_gap,
    sample_batch,
    sample_sequence,
    stationary,
)
from .model import (
    ForwardTrace,
    ModelConfig,
    ParamSet,
    flat_dim,
    forward,
    init_params,
    load_params,
    predict_next,
    save_params,
)
from .grad import (
    HessianReport,
    backward,
    empirical_loss,
    exact_population_loss,
    loss_and_grad_batch,
    loss_and_grad_exact,
    loss_kl_decomposition,
    numerical_hessian,
)
from .constructions import (
    ConstructionReport,
    build_global,
    build_global_high_switch,
    build_global_low_switch,
    build_unigram_point,
    certify,
)
from .landscape import (
    AlphaHessian,
    InterpretationReport,
    analytic_alpha_hessian,
    directional_curvature,
    find_negative_curvature,
    interpret,
    rank1_formula_logits,
    schur_gap,
)
from .training import (
    RunRecord,
    TrainConfig,
    adamw_step,
    classify_convergence,
    cosine_lr,
    depth_experiment,
    mix_seed,
    sweep_pq,
    train,
)

__version__ = "0.1.0"

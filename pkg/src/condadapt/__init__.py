"""Kernel conditional-dependence statistics and domain adaptation built on them."""

from .errors import (
    ConfigError,
    DegenerateDataError,
    InputError,
    NumericalError,
    ParseError,
)
from .kernels import (
    BandwidthRule,
    GramMatrix,
    KernelConfig,
    NormalizedGram,
    center,
    gaussian_kernel,
    gram,
    label_gram,
    mean_sq_dist_bandwidth,
    normalize,
    product_gram,
)
from .measures import (
    AdistanceReport,
    DependenceReport,
    StatKind,
    a_distance,
    cond,
    cond_from_blocks,
    cond_from_features,
    convergence_probe,
    mmd,
    nocco,
    nocco_from_features,
    per_class_nocco,
    per_class_nocco_from_features,
)
from .gradients import (
    CondKernelConfig,
    GradCheckReport,
    cond_objective,
    cond_value,
    finite_diff_check,
    grad_cond_wrt_features,
    nocco_objective,
)
from .model import (
    LossBreakdown,
    ModelParams,
    forward_c,
    forward_g,
    init_params,
    load_params,
    loss_ce,
    loss_entropy,
    loss_total,
    save_params,
)
from .trainer import (
    AdamConfig,
    AdaptationDataset,
    PseudoLabelMode,
    TrainConfig,
    TrainTrace,
    adapt_epoch,
    fit,
    init_pseudo_labels,
    pretrain,
    target_accuracy,
)
from .data import (
    SyntheticKind,
    SyntheticSpec,
    chain_triple,
    load_features,
    make_conditional_chain,
    make_rotated_moons,
    make_shifted_blobs,
    save_features,
)

__version__ = "0.1.0"

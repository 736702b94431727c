"""Source pre-training, pseudo-label refresh, and full-batch adaptation.

The protocol: pre-train the network on labeled source data with summed
cross-entropy, initialize target pseudo-labels from its predictions, then
repeat full-batch steps on the total objective followed by a pseudo-label
refresh from the just-updated model.  Everything is deterministic given the
config seed; the only randomness is the parameter initialization.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigError, InputError, NumericalError
from .gradients import CondKernelConfig, cond_objective
from .model import (
    LossBreakdown,
    ModelParams,
    backward_pass,
    entropy_grad_wrt_logits,
    forward_pass,
    init_params,
    loss_ce,
    loss_entropy,
)


class PseudoLabelMode(Enum):
    HARD = "hard"
    SOFT = "soft"


@dataclass(frozen=True)
class AdamConfig:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    beta1: float = 1e-2
    beta2: float = 5e-3
    epsilon: float = 1e-4
    pretrain_epochs: int = 100
    adapt_epochs: int = 100
    learning_rate: float = 1e-3
    adam: AdamConfig = AdamConfig()
    seed: int = 0
    pseudo_label_mode: PseudoLabelMode = PseudoLabelMode.HARD
    hidden_units: int = 512
    rep_dim: int = 512

    def __post_init__(self):
        if self.beta1 < 0 or self.beta2 < 0:
            raise ConfigError("loss weights must be non-negative")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if self.pretrain_epochs < 0 or self.adapt_epochs < 0:
            raise ConfigError("epoch counts must be non-negative")
        if not self.learning_rate > 0:
            raise ConfigError("learning rate must be positive")
        if min(self.hidden_units, self.rep_dim) < 1:
            raise ConfigError("layer sizes must be positive")


@dataclass
class AdaptationDataset:
    """Sources with labels, unlabeled target, and mutable pseudo-labels.

    ``target_truth`` is evaluation-only ground truth; no training path reads
    it.  ``pseudo_labels`` follow a single-writer (trainer) / multi-reader
    contract.
    """

    sources: list[tuple[np.ndarray, np.ndarray]]
    target: np.ndarray
    pseudo_labels: np.ndarray | None = None
    target_truth: np.ndarray | None = None

    def __post_init__(self):
        if not self.sources:
            raise InputError("need at least one source domain")
        self.sources = [(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
                        for x, y in self.sources]
        self.target = np.asarray(self.target, dtype=float)
        d = self.target.shape[0]
        k = self.sources[0][1].shape[0]
        for i, (x, y) in enumerate(self.sources):
            if x.shape[0] != d:
                raise InputError(f"source {i} feature dim {x.shape[0]} != target dim {d}")
            if y.shape != (k, x.shape[1]):
                raise InputError(f"source {i} labels must be ({k}, {x.shape[1]})")
        if self.target.shape[1] < 1:
            raise InputError("target domain has no samples")
        if self.target_truth is not None:
            self.target_truth = np.asarray(self.target_truth, dtype=float)
            if self.target_truth.shape != (k, self.target.shape[1]):
                raise InputError("target_truth shape must match (classes, n_target)")

    @property
    def num_sources(self) -> int:
        return len(self.sources)

    @property
    def classes(self) -> int:
        return self.sources[0][1].shape[0]

    @property
    def dim(self) -> int:
        return self.target.shape[0]

    @property
    def n_source(self) -> int:
        return sum(x.shape[1] for x, _ in self.sources)

    @property
    def n_target(self) -> int:
        return self.target.shape[1]

    @property
    def source_features(self) -> np.ndarray:
        return np.hstack([x for x, _ in self.sources])

    @property
    def source_labels(self) -> np.ndarray:
        return np.hstack([y for _, y in self.sources])

    @property
    def features(self) -> np.ndarray:
        return np.hstack([self.source_features, self.target])

    @property
    def domain_matrix(self) -> np.ndarray:
        """One-hot (num_sources + 1, n) block: sources in order, then target."""
        counts = [x.shape[1] for x, _ in self.sources] + [self.n_target]
        z = np.zeros((len(counts), sum(counts)))
        start = 0
        for row, c in enumerate(counts):
            z[row, start:start + c] = 1.0
            start += c
        return z


@dataclass
class TrainTrace:
    """Per-epoch records across both phases (pretrain first, then adaptation)."""

    losses: list[LossBreakdown] = field(default_factory=list)
    target_accuracy: list[float | None] = field(default_factory=list)


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: ModelParams) -> "AdamState":
        return cls([np.zeros_like(a) for a in params.arrays()],
                   [np.zeros_like(a) for a in params.arrays()])


def adam_step(params: ModelParams, grads: list[np.ndarray], state: AdamState,
              lr: float, cfg: AdamConfig):
    """One in-place adaptive moment update over all parameter arrays."""
    state.t += 1
    c1 = 1.0 - cfg.beta1 ** state.t
    c2 = 1.0 - cfg.beta2 ** state.t
    for a, g, m, v in zip(params.arrays(), grads, state.m, state.v):
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        a -= lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)


def target_accuracy(params: ModelParams, dataset: AdaptationDataset) -> float | None:
    """Fraction of target predictions matching the evaluation labels, if any."""
    if dataset.target_truth is None:
        return None
    probs = forward_pass(params, dataset.target).probs
    pred = probs.argmax(axis=0)
    truth = dataset.target_truth.argmax(axis=0)
    return float(np.mean(pred == truth))


def init_params_for(dataset: AdaptationDataset, config: TrainConfig) -> ModelParams:
    return init_params(dataset.dim, config.hidden_units, config.rep_dim,
                       dataset.classes, config.seed)


def pretrain(dataset: AdaptationDataset, config: TrainConfig,
             params: ModelParams) -> tuple[ModelParams, TrainTrace]:
    """Full-batch cross-entropy training on the concatenated sources.

    Returns updated parameters (the input object is not mutated) and a trace;
    with 0 epochs the returned parameters equal the input bit for bit.
    """
    params = params.copy()
    trace = TrainTrace()
    xs, ys = dataset.source_features, dataset.source_labels
    state = AdamState.for_params(params)
    for epoch in range(config.pretrain_epochs):
        st = forward_pass(params, xs)
        ce = loss_ce(st.probs, ys)
        if not np.isfinite(ce):
            raise NumericalError(f"cross-entropy became non-finite at pretrain epoch {epoch}")
        grads = backward_pass(params, st, st.probs - ys)
        adam_step(params, grads, state, config.learning_rate, config.adam)
        trace.losses.append(LossBreakdown(ce, 0.0, 0.0, config.beta1, config.beta2))
        trace.target_accuracy.append(target_accuracy(params, dataset))
    return params, trace


def init_pseudo_labels(dataset: AdaptationDataset, params: ModelParams,
                       mode: PseudoLabelMode = PseudoLabelMode.HARD) -> AdaptationDataset:
    """Set target pseudo-labels from the model's current predictions."""
    dataset.pseudo_labels = _predict_labels(params, dataset.target, mode)
    return dataset


def _predict_labels(params: ModelParams, xt: np.ndarray,
                    mode: PseudoLabelMode) -> np.ndarray:
    probs = forward_pass(params, xt).probs
    if mode is PseudoLabelMode.SOFT:
        return probs
    # argmax breaks ties toward the lowest class index
    hard = np.zeros_like(probs)
    hard[probs.argmax(axis=0), np.arange(probs.shape[1])] = 1.0
    return hard


def adapt_epoch(dataset: AdaptationDataset, config: TrainConfig,
                params: ModelParams,
                opt_state: AdamState | None = None) -> tuple[ModelParams, LossBreakdown]:
    """One full-batch step on the total objective, then a pseudo-label refresh.

    The loss breakdown reports the values that produced the step's gradient,
    i.e. before the update.  Terms with zero weight are skipped and recorded
    as 0.  A non-finite term aborts with the offending loss named.
    """
    if dataset.pseudo_labels is None:
        raise InputError("initialize pseudo-labels before adaptation")
    params = params.copy()
    if opt_state is None:
        opt_state = AdamState.for_params(params)

    ns = dataset.n_source
    ys = dataset.source_labels
    st = forward_pass(params, dataset.features)
    probs_s, probs_t = st.probs[:, :ns], st.probs[:, ns:]

    ce = loss_ce(probs_s, ys)
    dlogits = np.zeros_like(st.probs)
    dlogits[:, :ns] = probs_s - ys
    if not np.isfinite(ce) or not np.all(np.isfinite(dlogits)):
        raise NumericalError("cross-entropy term produced a non-finite value or gradient")

    ent = 0.0
    if config.beta2 != 0.0:
        ent = loss_entropy(probs_t)
        ent_grad = entropy_grad_wrt_logits(probs_t)
        if not np.isfinite(ent) or not np.all(np.isfinite(ent_grad)):
            raise NumericalError("entropy term produced a non-finite value or gradient")
        dlogits[:, ns:] = config.beta2 * ent_grad

    dxre = None
    cond_term = 0.0
    if config.beta1 != 0.0:
        y_all = np.hstack([ys, dataset.pseudo_labels])
        z = dataset.domain_matrix
        cfgs = CondKernelConfig.resolve(st.xre, y_all, z)  # stop-gradient bandwidths
        cond_term, cond_grad = cond_objective(st.xre, y_all, z, cfgs, config.epsilon)
        if not np.isfinite(cond_term) or not np.all(np.isfinite(cond_grad)):
            raise NumericalError("conditional dependence term produced a non-finite "
                                 "value or gradient")
        dxre = config.beta1 * cond_grad

    grads = backward_pass(params, st, dlogits, dxre)
    adam_step(params, grads, opt_state, config.learning_rate, config.adam)
    dataset.pseudo_labels = _predict_labels(params, dataset.target,
                                            config.pseudo_label_mode)
    return params, LossBreakdown(ce, cond_term, ent, config.beta1, config.beta2)


def fit(dataset: AdaptationDataset, config: TrainConfig) -> tuple[ModelParams, TrainTrace]:
    """Pre-train, initialize pseudo-labels, then adapt for the configured epochs."""
    params = init_params_for(dataset, config)
    params, trace = pretrain(dataset, config, params)
    init_pseudo_labels(dataset, params, config.pseudo_label_mode)
    opt_state = AdamState.for_params(params)
    for _ in range(config.adapt_epochs):
        params, breakdown = adapt_epoch(dataset, config, params, opt_state)
        trace.losses.append(breakdown)
        trace.target_accuracy.append(target_accuracy(params, dataset))
    return params, trace

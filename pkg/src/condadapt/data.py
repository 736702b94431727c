"""Synthetic domain-shift generators and delimited feature-file I/O.

Generators are deterministic in the spec seed.  Ground-truth target labels
live in the dataset's evaluation-only slot (``target_truth``); nothing on the
training path consumes them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError, ParseError
from .trainer import AdaptationDataset


class SyntheticKind(Enum):
    SHIFTED_BLOBS = "shifted-blobs"
    ROTATED_MOONS = "rotated-moons"
    CONDITIONAL_CHAIN = "conditional-chain"


@dataclass(frozen=True)
class SyntheticSpec:
    """Shared knobs for the synthetic families.

    ``shift`` is a 2-vector for blob/chain mean offsets or a single angle in
    radians for the rotated moons.
    """

    kind: SyntheticKind
    classes: int = 2
    samples_per_class_per_domain: int = 50
    shift: tuple[float, ...] | float = 0.0
    noise_sd: float = 0.3
    num_sources: int = 1
    seed: int = 0
    class_spacing: float = 6.0  # neighbour mean separation in noise-sd units

    def __post_init__(self):
        if self.classes < 2:
            raise ConfigError("need at least 2 classes")
        if self.samples_per_class_per_domain < 2:
            raise ConfigError("need at least 2 samples per class per domain")
        if not self.noise_sd > 0:
            raise ConfigError("noise_sd must be positive")
        if self.num_sources < 1:
            raise ConfigError("need at least 1 source domain")
        if not self.class_spacing > 0:
            raise ConfigError("class_spacing must be positive")

    def shift_vector(self) -> np.ndarray:
        s = self.shift
        if np.isscalar(s):
            return np.array([float(s), 0.0])
        v = np.asarray(s, dtype=float)
        if v.shape != (2,):
            raise ConfigError(f"shift vector must have 2 entries, got shape {v.shape}")
        return v


def _class_means(classes: int, noise_sd: float, spacing: float = 6.0) -> np.ndarray:
    # circle placement with constant neighbour spacing (in noise-sd units)
    radius = 0.5 * spacing * noise_sd / math.sin(math.pi / classes)
    angles = 2.0 * math.pi * np.arange(classes) / classes
    return radius * np.vstack([np.cos(angles), np.sin(angles)])


def _one_hot(labels: np.ndarray, classes: int) -> np.ndarray:
    out = np.zeros((classes, labels.shape[0]))
    out[labels, np.arange(labels.shape[0])] = 1.0
    return out


def make_shifted_blobs(spec: SyntheticSpec) -> AdaptationDataset:
    """Gaussian class blobs; the target domain is translated by the shift.

    Per-class counts are exact.  Sources share the blob layout; the target
    draws from the same classes around mean + shift.
    """
    if spec.kind is not SyntheticKind.SHIFTED_BLOBS:
        raise ConfigError(f"spec kind is {spec.kind.value!r}, expected shifted blobs")
    rng = np.random.default_rng(spec.seed)
    means = _class_means(spec.classes, spec.noise_sd, spec.class_spacing)
    m = spec.samples_per_class_per_domain
    shift = spec.shift_vector()

    def domain(offset: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        cols, labels = [], []
        for c in range(spec.classes):
            mu = means[:, c] + offset
            cols.append(mu[:, None] + spec.noise_sd * rng.standard_normal((2, m)))
            labels.append(np.full(m, c))
        y = np.concatenate(labels)
        return np.hstack(cols), _one_hot(y, spec.classes)

    sources = [domain(np.zeros(2)) for _ in range(spec.num_sources)]
    xt, yt = domain(shift)
    return AdaptationDataset(sources=sources, target=xt, target_truth=yt)


def make_rotated_moons(spec: SyntheticSpec) -> AdaptationDataset:
    """Two interleaved half-moons; the target domain is rotated by the angle."""
    if spec.kind is not SyntheticKind.ROTATED_MOONS:
        raise ConfigError(f"spec kind is {spec.kind.value!r}, expected rotated moons")
    if spec.classes != 2:
        raise ConfigError("rotated moons is a 2-class family")
    rng = np.random.default_rng(spec.seed)
    m = spec.samples_per_class_per_domain
    pivot = np.array([0.5, 0.25])

    def domain(angle: float) -> tuple[np.ndarray, np.ndarray]:
        t0 = rng.uniform(0.0, math.pi, m)
        t1 = rng.uniform(0.0, math.pi, m)
        upper = np.vstack([np.cos(t0), np.sin(t0)])
        lower = np.vstack([1.0 - np.cos(t1), 0.5 - np.sin(t1)])
        x = np.hstack([upper, lower]) + spec.noise_sd * rng.standard_normal((2, 2 * m))
        if angle != 0.0:
            rot = np.array([[math.cos(angle), -math.sin(angle)],
                            [math.sin(angle), math.cos(angle)]])
            x = rot @ (x - pivot[:, None]) + pivot[:, None]
        y = np.concatenate([np.zeros(m, dtype=int), np.ones(m, dtype=int)])
        return x, _one_hot(y, 2)

    angle = float(spec.shift) if np.isscalar(spec.shift) else float(spec.shift[0])
    sources = [domain(0.0) for _ in range(spec.num_sources)]
    xt, yt = domain(angle)
    return AdaptationDataset(sources=sources, target=xt, target_truth=yt)


def chain_triple(n: int, seed: int, *, classes: int = 3, domains: int = 2,
                 shift: tuple[float, ...] | float = 0.0,
                 noise_sd: float = 0.5) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Feature/label/domain triple with a known conditional structure.

    Domains differ in class priors, so features and domains are marginally
    dependent through the class.  With zero shift the feature law given the
    class is domain-free: features are conditionally independent of the
    domain given the class.  A non-zero shift adds the offset scaled by the
    domain index to every class mean, breaking that conditional independence.
    """
    if n < 2 * domains:
        raise ConfigError(f"need at least {2 * domains} samples")
    if classes < 2 or domains < 2:
        raise ConfigError("chain needs at least 2 classes and 2 domains")
    rng = np.random.default_rng(seed)
    means = _class_means(classes, noise_sd)
    shift_vec = (np.array([float(shift), 0.0]) if np.isscalar(shift)
                 else np.asarray(shift, dtype=float))
    # skewed priors: first domain favours low classes, last favours high ones
    ratios = (0.6 ** np.linspace(1.0, -1.0, domains) if domains > 1
              else np.ones(1))
    xs, ys, zs = [], [], []
    base, extra = divmod(n, domains)
    for d in range(domains):
        nd = base + (1 if d < extra else 0)
        prior = ratios[d] ** np.arange(classes)
        prior = prior / prior.sum()
        y = rng.choice(classes, size=nd, p=prior)
        x = (means[:, y] + float(d) * shift_vec[:, None]
             + noise_sd * rng.standard_normal((2, nd)))
        xs.append(x)
        ys.append(y)
        zs.append(np.full(nd, d))
    x = np.hstack(xs)
    y = _one_hot(np.concatenate(ys), classes)
    z = _one_hot(np.concatenate(zs), domains)
    return x, y, z


def make_conditional_chain(spec: SyntheticSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Spec-driven wrapper around ``chain_triple``; n = classes * domains * m."""
    if spec.kind is not SyntheticKind.CONDITIONAL_CHAIN:
        raise ConfigError(f"spec kind is {spec.kind.value!r}, expected conditional chain")
    domains = spec.num_sources + 1
    n = spec.classes * domains * spec.samples_per_class_per_domain
    return chain_triple(n, spec.seed, classes=spec.classes, domains=domains,
                        shift=spec.shift, noise_sd=spec.noise_sd)


def save_features(dataset: AdaptationDataset, path, delimiter: str = ","):
    """Write ``f0..f{d-1},label,domain`` rows; floats use full-precision repr.

    Sources come first (domains 0..N-1), then the target (domain N).  Target
    labels are the evaluation labels when present, else -1.
    """
    d = dataset.dim
    header = [f"f{i}" for i in range(d)] + ["label", "domain"]
    with open(path, "w") as fh:
        fh.write(delimiter.join(header) + "\n")

        def rows(x, labels, domain):
            for j in range(x.shape[1]):
                vals = [repr(float(v)) for v in x[:, j]]
                fh.write(delimiter.join(vals + [str(labels[j]), str(domain)]) + "\n")

        for i, (x, y) in enumerate(dataset.sources):
            rows(x, y.argmax(axis=0), i)
        if dataset.target_truth is not None:
            t_labels = dataset.target_truth.argmax(axis=0)
        else:
            t_labels = np.full(dataset.n_target, -1)
        rows(dataset.target, t_labels, dataset.num_sources)


def load_features(path, delimiter: str = ",") -> AdaptationDataset:
    """Read a feature file written by ``save_features`` (or by hand).

    The highest domain id is the target; all lower ids must be present as
    sources.  Source rows need labels in [0, K); target rows carry either a
    full set of evaluation labels or -1 throughout.
    """
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines:
        raise ParseError("empty feature file")
    header = lines[0].split(delimiter)
    if header[-1] != "domain":
        raise ParseError("missing 'domain' column (must be last)")
    if len(header) < 3 or header[-2] != "label":
        raise ParseError("missing 'label' column (must precede 'domain')")
    d = len(header) - 2
    expected = [f"f{i}" for i in range(d)]
    if header[:d] != expected:
        raise ParseError(f"feature columns must be f0..f{d - 1}, got {header[:d]}")

    feats, labels, domains = [], [], []
    for row_no, ln in enumerate(lines[1:], start=2):
        parts = ln.split(delimiter)
        if len(parts) != d + 2:
            raise ParseError(f"row {row_no}: expected {d + 2} fields, got {len(parts)}")
        try:
            feats.append([float(v) for v in parts[:d]])
            label = int(parts[d])
            domain = int(parts[d + 1])
        except ValueError as exc:
            raise ParseError(f"row {row_no}: {exc}") from exc
        if label < -1:
            raise ParseError(f"row {row_no}: label must be >= -1, got {label}")
        if domain < 0:
            raise ParseError(f"row {row_no}: domain must be >= 0, got {domain}")
        labels.append(label)
        domains.append(domain)
    if not feats:
        raise ParseError("feature file has a header but no rows")

    x = np.asarray(feats, dtype=float).T
    labels = np.asarray(labels)
    domains = np.asarray(domains)
    target_id = int(domains.max())
    if target_id < 1:
        raise ParseError("need at least one source domain and one target domain")
    present = set(np.unique(domains).tolist())
    missing = sorted(set(range(target_id + 1)) - present)
    if missing:
        raise ParseError(f"domain id(s) {missing} have no rows")

    labeled = labels[labels >= 0]
    if labeled.size == 0:
        raise ParseError("no labeled rows; source rows must carry labels")
    k = int(labeled.max()) + 1

    sources = []
    for i in range(target_id):
        sel = domains == i
        src_labels = labels[sel]
        if np.any(src_labels < 0):
            bad = int(np.flatnonzero(sel)[src_labels < 0][0])
            raise ParseError(f"row {bad + 2}: source rows must be labeled")
        sources.append((x[:, sel], _one_hot(src_labels, k)))

    sel = domains == target_id
    t_labels = labels[sel]
    if np.all(t_labels >= 0):
        truth = _one_hot(t_labels, k)
    elif np.all(t_labels < 0):
        truth = None
    else:
        raise ParseError("target labels must be all present or all -1")
    return AdaptationDataset(sources=sources, target=x[:, sel], target_truth=truth)

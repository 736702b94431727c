import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from condadapt.data import chain_triple
from condadapt.errors import DegenerateDataError, InputError
from condadapt.kernels import (
    GramMatrix,
    KernelConfig,
    center,
    gram,
    label_gram,
    normalize,
    product_gram,
)
from condadapt.measures import (
    AdistanceReport,
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

UNIT = KernelConfig.fixed(1.0)


def random_features(seed, d=3, n=30, scale=1.0):
    rng = np.random.default_rng(seed)
    return scale * rng.normal(size=(d, n))


def one_hot(labels, k):
    labels = np.asarray(labels)
    y = np.zeros((k, labels.shape[0]))
    y[labels, np.arange(labels.shape[0])] = 1.0
    return y


# nocco


def test_nocco_two_by_two_closed_form():
    # identical 1-D variables at distance 1: off-diagonal a = e^-1, centered
    # eigenvalue (1 - a), normalized to (1-a)/((1-a) + n*eps), squared by the trace
    eps = 0.05
    k = gram(np.array([[0.0, 1.0]]), UNIT)
    a = math.exp(-1.0)
    expected = ((1.0 - a) / ((1.0 - a) + 2.0 * eps)) ** 2
    rep = nocco(k, k, eps)
    assert rep.statistic == pytest.approx(expected, rel=1e-12)
    assert rep.kind is StatKind.NOCCO
    assert rep.n == 2
    assert rep.permutation_pvalue is None


def test_nocco_self_dependence_eigen_oracle():
    x = random_features(1, n=40)
    k = gram(x, KernelConfig.from_data(x))
    lam = np.linalg.eigvalsh(center(k))
    expected = float(np.sum((lam / (lam + 40 * 1e-3)) ** 2))
    assert nocco(k, k, 1e-3).statistic == pytest.approx(expected, rel=1e-10)
    assert nocco(k, k, 1e-3).statistic > 0


def test_nocco_independent_null_not_rejected():
    rng = np.random.default_rng(42)
    x = rng.normal(size=(2, 500))
    z = one_hot(rng.integers(0, 2, size=500), 2)
    rep = nocco_from_features(x, z, 1e-3, permutations=500, seed=0)
    assert rep.permutation_pvalue > 0.05


def test_nocco_permutation_shortcut_matches_brute_rebuild():
    # dual route: conjugating R_Z must equal rebuilding the Gram from permuted
    # raw domain columns and renormalizing from scratch
    rng = np.random.default_rng(3)
    x = rng.normal(size=(2, 60))
    z = one_hot(rng.integers(0, 2, size=60), 2)
    kx = gram(x, KernelConfig.from_data(x))
    eps = 1e-3
    rep = nocco(kx, label_gram(z), eps, permutations=40, seed=9)

    stat = nocco(kx, label_gram(z), eps).statistic
    hits = 0
    for i in range(40):
        perm = np.random.default_rng(9 + i).permutation(60)
        rep_stat = nocco(kx, label_gram(z[:, perm]), eps).statistic
        if rep_stat >= stat:
            hits += 1
    assert rep.permutation_pvalue == pytest.approx((1 + hits) / 41.0, abs=1e-15)


def test_nocco_size_mismatch():
    k3 = GramMatrix(np.eye(3))
    k4 = GramMatrix(np.eye(4))
    with pytest.raises(InputError):
        nocco(k3, k4, 1e-3)


# cond


def test_cond_constant_conditioner_reduces_to_plain():
    # constant conditioning labels: all-ones Gram, identical statistics
    for seed in range(5):
        x = random_features(seed, d=2, n=50)
        z = one_hot(np.random.default_rng(seed + 100).integers(0, 3, size=50), 3)
        y = one_hot(np.zeros(50, dtype=int), 1)
        plain = nocco_from_features(x, z, 1e-3).statistic
        conditional = cond_from_features(x, y, z, 1e-3).statistic
        assert abs(conditional - plain) <= 1e-8 * plain


def test_cond_self_conditioning_bounded_by_plain():
    # conditioning on the tested blocks themselves can only remove dependence
    for seed in range(10):
        x = random_features(seed, n=25)
        k = gram(x, KernelConfig.from_data(x))
        bounded = cond(k, k, k, 1e-2).statistic
        plain = nocco(k, k, 1e-2).statistic
        assert bounded <= plain + 1e-12
        assert bounded >= -1e-10


def test_cond_chain_discrimination_single_seed():
    x, y, z = chain_triple(600, 0, classes=3, domains=2, shift=0.0, noise_sd=0.5)
    labels = np.argmax(y, axis=0)
    eps = 600.0 ** -0.25
    ci = cond_from_features(x, y, z, eps, labels=labels, permutations=300, seed=0)
    assert ci.permutation_pvalue > 0.05

    x, y, z = chain_triple(600, 0, classes=3, domains=2, shift=1.0, noise_sd=0.5)
    labels = np.argmax(y, axis=0)
    dep = cond_from_features(x, y, z, eps, labels=labels, permutations=300, seed=0)
    assert dep.permutation_pvalue < 0.01


def test_cond_permutation_requires_labels():
    x = random_features(0, n=20)
    k = gram(x, KernelConfig.from_data(x))
    with pytest.raises(InputError):
        cond(k, k, k, 1e-3, permutations=10)


def test_cond_within_class_shortcut_matches_brute_rebuild():
    # dual route for the conditional null: class-preserving shuffles of the raw
    # domain indicators, with every Gram and normalization rebuilt per replicate
    rng = np.random.default_rng(17)
    n = 48
    x = rng.normal(size=(2, n))
    labels = rng.integers(0, 2, size=n)
    y = one_hot(labels, 2)
    z = one_hot(rng.integers(0, 2, size=n), 2)
    eps = 1e-2
    kx = gram(x, KernelConfig.from_data(x))
    rep = cond_from_blocks(kx, label_gram(z), label_gram(y), eps,
                           labels=labels, permutations=30, seed=5)

    stat = cond_from_blocks(kx, label_gram(z), label_gram(y), eps).statistic
    hits = 0
    for i in range(30):
        gen = np.random.default_rng(5 + i)
        perm = np.arange(n)
        for c in np.unique(labels):
            idx = np.flatnonzero(labels == c)
            perm[idx] = idx[gen.permutation(idx.shape[0])]
        rep_stat = cond_from_blocks(kx, label_gram(z[:, perm]), label_gram(y),
                                    eps).statistic
        if rep_stat >= stat:
            hits += 1
    assert rep.permutation_pvalue == pytest.approx((1 + hits) / 31.0, abs=1e-15)


# per-class statistic


def test_per_class_single_class_equals_plain():
    x = random_features(8, n=30)
    z = one_hot(np.random.default_rng(8).integers(0, 2, size=30), 2)
    kx = gram(x, KernelConfig.from_data(x))
    kz = label_gram(z)
    labels = np.zeros(30, dtype=int)
    assert per_class_nocco(kx, kz, labels, 1e-3).statistic == nocco(kx, kz, 1e-3).statistic


def test_per_class_ignores_proportion_shift():
    # domains differ only in class proportions; within every class the features
    # are domain-independent, so the class-level statistic stays at its null
    # while the plain statistic picks up the marginal dependence
    rng = np.random.default_rng(12)
    n = 400
    domains = rng.integers(0, 2, size=n)
    probs = np.where(domains == 0, 0.8, 0.2)
    labels = (rng.random(n) < probs).astype(int)
    x = np.where(labels == 0, -2.0, 2.0)[None, :] + 0.5 * rng.normal(size=(2, n))
    z = one_hot(domains, 2)

    plain = nocco_from_features(x, z, 1e-3).statistic
    per_class = per_class_nocco_from_features(x, z, labels, 1e-3,
                                              permutations=200, seed=0)
    assert plain > 10 * per_class.statistic
    assert per_class.permutation_pvalue > 0.05


def test_per_class_skips_thin_classes_with_warning():
    x = random_features(5, n=21)
    kx = gram(x, KernelConfig.from_data(x))
    z = one_hot(np.random.default_rng(5).integers(0, 2, size=21), 2)
    labels = np.concatenate([np.zeros(20, dtype=int), [1]])
    with pytest.warns(UserWarning, match="skipped"):
        rep = per_class_nocco(kx, label_gram(z), labels, 1e-3)
    assert rep.skipped_classes == 1


def test_per_class_all_skipped_degenerate():
    x = random_features(5, n=10)
    kx = gram(x, KernelConfig.from_data(x))
    z = one_hot(np.zeros(10, dtype=int), 1)  # single domain everywhere
    labels = np.zeros(10, dtype=int)
    with pytest.raises(DegenerateDataError):
        with pytest.warns(UserWarning):
            per_class_nocco(kx, label_gram(z), labels, 1e-3)


# mmd


def test_mmd_identical_samples_exact_zero():
    x = random_features(2, n=25)
    assert mmd(x, x) == 0.0


def test_mmd_point_masses_closed_form():
    xa = np.array([[0.0]])
    xb = np.array([[1.0]])
    assert mmd(xa, xb, UNIT) == pytest.approx(2.0 - 2.0 * math.exp(-1.0), rel=1e-14)


def test_mmd_same_distribution_trend():
    medians = []
    for n in (50, 200, 500):
        vals = []
        for seed in range(7):
            rng = np.random.default_rng(1000 + seed)
            vals.append(mmd(rng.normal(size=(2, n)), rng.normal(size=(2, n))))
        medians.append(np.median(vals))
    assert medians[0] > medians[1] > medians[2]


@settings(deadline=None)
@given(seed=st.integers(0, 300))
def test_mmd_nonnegative(seed):
    rng = np.random.default_rng(seed)
    xa = rng.normal(size=(2, 10))
    xb = rng.normal(size=(2, 12)) + rng.normal()
    assert mmd(xa, xb) >= 0.0


def test_mmd_empty_input_rejected():
    with pytest.raises(InputError):
        mmd(np.zeros((2, 0)), np.zeros((2, 3)))


# a-distance


def test_a_distance_identical_distributions_small():
    rng = np.random.default_rng(0)
    rep = a_distance(rng.normal(size=(3, 400)), rng.normal(size=(3, 400)))
    assert abs(rep.d_a) <= 0.3


def test_a_distance_separable_near_two():
    rng = np.random.default_rng(1)
    xs = rng.normal(size=(2, 100)) - 10.0
    xt = rng.normal(size=(2, 100)) + 10.0
    rep = a_distance(xs, xt)
    assert rep.classifier_test_error <= 0.02
    assert rep.d_a >= 1.9


def test_a_distance_definitional_identity():
    rng = np.random.default_rng(2)
    rep = a_distance(rng.normal(size=(2, 40)), rng.normal(size=(2, 40)) + 0.5)
    assert rep.d_a == 2.0 * (1.0 - 2.0 * rep.classifier_test_error)
    assert AdistanceReport.from_error(0.25).d_a == 1.0


def test_a_distance_per_class_and_skips():
    rng = np.random.default_rng(3)
    xs = rng.normal(size=(2, 60))
    xt = rng.normal(size=(2, 60)) + 1.0
    ys = np.concatenate([np.zeros(59, dtype=int), [1]])
    yt = np.concatenate([np.zeros(59, dtype=int), [1]])
    rep = a_distance(xs, xt, labels_s=ys, labels_t=yt)
    assert [c for c, _ in rep.per_class] == [0]
    assert rep.skipped_classes == [1]


def test_a_distance_needs_four_per_domain():
    rng = np.random.default_rng(4)
    with pytest.raises(InputError):
        a_distance(rng.normal(size=(2, 3)), rng.normal(size=(2, 10)))


# convergence probe


def test_statistic_shrinks_with_epsilon():
    # plain statistic: both normalized factors shrink, so the trace does too;
    # the conditional statistic shares this only while eps stays small, since
    # I - R_Y grows back toward I as eps gets large
    x, y, z = chain_triple(200, 0, classes=3, domains=2, shift=0.0, noise_sd=0.5)
    plain = [nocco_from_features(x, z, e).statistic for e in (1e-4, 1e-3, 1e-2, 1e-1, 1.0)]
    assert plain == sorted(plain, reverse=True)
    conditional = [cond_from_features(x, y, z, e).statistic for e in (1e-4, 1e-3, 1e-2)]
    assert conditional == sorted(conditional, reverse=True)


def test_convergence_probe_flags_bad_schedule():
    gen = lambda n, seed: chain_triple(n, seed, classes=2, domains=2,
                                       shift=0.0, noise_sd=0.5)
    with pytest.warns(UserWarning, match="eps"):
        convergence_probe(gen, [50, 100], epsilon_rule=lambda n: 1.0 / n)


def test_convergence_probe_returns_requested_sizes():
    gen = lambda n, seed: chain_triple(n, seed, classes=2, domains=2,
                                       shift=0.0, noise_sd=0.5)
    out = convergence_probe(gen, [48, 96], seed=1)
    assert [n for n, _ in out] == [48, 96]
    assert all(s >= -1e-10 for _, s in out)


def test_dependent_scenario_stays_above_independent():
    eps = 100.0 ** -0.25
    dep_stats, ind_stats = [], []
    for seed in range(8):
        x, y, z = chain_triple(100, seed, classes=2, domains=2, shift=1.0, noise_sd=0.5)
        dep_stats.append(cond_from_features(x, y, z, eps).statistic)
        x, y, z = chain_triple(100, seed, classes=2, domains=2, shift=0.0, noise_sd=0.5)
        ind_stats.append(cond_from_features(x, y, z, eps).statistic)
    assert min(dep_stats) > np.quantile(ind_stats, 0.95)


# cross-cutting invariants


def test_permutation_invariance_of_statistics():
    rng = np.random.default_rng(30)
    n = 60
    x = rng.normal(size=(3, n))
    labels = rng.integers(0, 2, size=n)
    y = one_hot(labels, 2)
    z = one_hot(rng.integers(0, 2, size=n), 2)
    perm = rng.permutation(n)

    before = nocco_from_features(x, z, 1e-3).statistic
    after = nocco_from_features(x[:, perm], z[:, perm], 1e-3).statistic
    assert after == pytest.approx(before, abs=1e-10)

    before = cond_from_features(x, y, z, 1e-3).statistic
    after = cond_from_features(x[:, perm], y[:, perm], z[:, perm], 1e-3).statistic
    assert after == pytest.approx(before, abs=1e-10)

    before = per_class_nocco_from_features(x, z, labels, 1e-3).statistic
    after = per_class_nocco_from_features(x[:, perm], z[:, perm], labels[perm],
                                          1e-3).statistic
    assert after == pytest.approx(before, abs=1e-10)


def test_scale_invariance_under_fitted_bandwidth():
    rng = np.random.default_rng(31)
    x = rng.normal(size=(3, 50))
    z = one_hot(rng.integers(0, 2, size=50), 2)
    base = nocco_from_features(x, z, 1e-3).statistic
    # power-of-two scaling is exact in floating point
    assert nocco_from_features(2.0 * x, z, 1e-3).statistic == base
    assert nocco_from_features(1.7 * x, z, 1e-3).statistic == pytest.approx(
        base, rel=1e-10
    )


@settings(deadline=None)
@given(seed=st.integers(0, 200))
def test_statistics_nonnegative_within_tolerance(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(2, 20))
    labels = rng.integers(0, 2, size=20)
    y = one_hot(labels, 2)
    z = one_hot(rng.integers(0, 2, size=20), 2)
    assert nocco_from_features(x, z, 1e-3).statistic >= -1e-10
    assert cond_from_features(x, y, z, 1e-3).statistic >= -1e-10

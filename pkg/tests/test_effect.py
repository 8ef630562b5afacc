import dataclasses
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ivysynth.core import CandidateGraph, Dataset
from ivysynth.datagen import IndependentGroup, population_wald, preset, sample
from ivysynth.effect import (
    AllReplicatesFailed,
    WeakDenominator,
    estimate_effect,
    half_split,
    power,
    run_replicates,
    sample_summary,
    wald_on,
    wald_ratio,
)
from ivysynth.logistic import LogisticFit
from ivysynth.posterior import ci_posterior
from oracles import power_erf


def _fit(slope):
    return LogisticFit(0.0, slope, True, 1, False)


def test_wald_arithmetic():
    assert wald_ratio(_fit(0.0), _fit(0.6)) == 0.0
    assert wald_ratio(_fit(0.3), _fit(0.6)) == pytest.approx(0.5)
    with pytest.raises(WeakDenominator):
        wald_ratio(_fit(0.3), _fit(5e-4))


def test_sample_summary_examples():
    assert np.all(sample_summary(np.ones(1000), 3) == 1)
    assert np.all(sample_summary(np.zeros(1000), 3) == -1)
    assert abs(sample_summary(np.full(1_000_000, 0.5), 4).mean()) < 0.002


def test_sample_summary_is_counter_based():
    p = np.random.default_rng(0).random(5000)
    full = sample_summary(p, 9, (2, 1))
    assert np.array_equal(full[:1000], sample_summary(p[:1000], 9, (2, 1)))
    assert not np.array_equal(full, sample_summary(p, 9, (3, 1)))


def test_sample_summary_from_accurate_candidates():
    spec = dataclasses.replace(preset("calibration_null"), valid_groups=(IndependentGroup((0.999,) * 5),))
    ds, truth = sample(spec, 100_000, 1)
    p = ci_posterior(ds.W, np.full(5, 0.998), 0.5)
    assert np.mean(sample_summary(p, 2) == truth.z) >= 0.995


@given(st.integers(2, 500), st.integers(0, 2**31), st.integers(0, 1000))
def test_half_split_partitions(n, seed, r):
    A, B = half_split(n, seed, r)
    assert len(A) == n // 2 and len(B) == n - n // 2
    assert np.array_equal(np.sort(np.concatenate([A, B])), np.arange(n))


def test_perfect_iv_recovers_population_wald():
    spec = preset("effect_fig5b")
    ds, truth = sample(spec, 100_000, 5)
    p = (truth.z + 1) / 2.0

    def one(r, A, B):
        est, _ = wald_on(ds, B, p[B], 5, r)
        return est, []

    rep = run_replicates(ds, one, 50, 5, "oracle")
    se = np.std(rep.replicates)  # spread of a half-sample estimate, conservative for the median
    assert abs(rep.median - population_wald(spec)) <= 3 * se
    assert population_wald(spec) == pytest.approx(0.150, abs=1e-12)


def test_all_replicates_failed():
    ds = Dataset([1, -1, 1, -1], [1, 1, -1, -1], [[1], [1], [-1], [-1]])

    def one(r, A, B):
        raise WeakDenominator("weak")

    with pytest.raises(AllReplicatesFailed):
        run_replicates(ds, one, 3, 0, "x")


def test_missing_replicates_reported():
    ds = Dataset([1, -1, 1, -1], [1, 1, -1, -1], [[1], [1], [-1], [-1]])

    def one(r, A, B):
        if r == 1:
            raise WeakDenominator("weak")
        return float(r), []

    rep = run_replicates(ds, one, 4, 0, "x")
    assert np.isnan(rep.replicates[1])
    assert rep.median == 2.0
    assert rep.diagnostics[0].startswith("1 of 4 replicates missing")


def test_estimate_effect_deterministic_across_jobs():
    spec = preset("null_fig5a")
    ds, _ = sample(spec, 20_000, 3)
    g = spec.true_graph()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = estimate_effect(ds, g, replicates=8, seed=11)
        b = estimate_effect(ds, g, replicates=8, seed=11, n_jobs=3)
        c = estimate_effect(ds, g, replicates=8, seed=12)
    assert np.array_equal(a.replicates, b.replicates)
    assert a.diagnostics == b.diagnostics
    assert not np.array_equal(a.replicates, c.replicates)
    assert a.ci_low <= a.median <= a.ci_high


def test_estimate_effect_relearn_structure():
    spec = preset("calibration_null")
    ds, _ = sample(spec, 10_000, 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = estimate_effect(ds, CandidateGraph.independent(range(10)), replicates=3, seed=0,
                              relearn_structure=True)
    assert np.all(np.isfinite(rep.replicates))


def test_power_null_equals_half_level():
    for level in (0.01, 0.05, 0.1, 0.37):
        assert power(1000, 0.5, 0.5, 0.0, 0.6, level) == level / 2


def test_power_reference_point():
    got = power(10_000, 0.5, 0.5, 0.15, 0.6, 0.05)
    assert got == pytest.approx(power_erf(10_000, 0.5, 0.5, 0.15, 0.6, 0.05), abs=1e-10)


@given(st.integers(1, 10**6), st.floats(0.01, 2.0), st.floats(0.01, 2.0), st.floats(1.0, 4.0))
def test_power_monotone(n, alpha, beta, factor):
    base = power(n, 0.3, 0.7, alpha, beta)
    assert power(int(n * factor), 0.3, 0.7, alpha, beta) >= base
    assert power(n, 0.3, 0.7, alpha * factor, beta) >= base
    assert power(n, 0.3, 0.7, alpha, -beta * factor) >= base
    assert 0.0 <= base <= 1.0


def test_power_limit_and_errors():
    assert power(10**12, 0.5, 0.5, 0.1, 0.1) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        power(100, 0.6, 0.6, 0.1, 0.1)
    with pytest.raises(ValueError):
        power(100, 0.5, 0.5, 0.1, 0.1, level=1.0)

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ivysynth.datagen import IndependentGroup, SyntheticSpec, preset, table_from_logits
from ivysynth.evalharness import (
    SingleClass,
    SweepResult,
    auc,
    calibration,
    population_error,
    robustness_sweep,
    scaling_curve,
    validity_auc,
)
from oracles import auc_pairs


def test_auc_examples():
    assert auc([0.1, 0.2, 0.8, 0.9], [False, False, True, True]) == 1.0
    assert auc([0.3] * 4, [True, False, True, False]) == 0.5
    assert auc([0.1, 0.4, 0.35, 0.8], [False, True, False, True]) == 1.0
    assert auc([0.1, 0.4, 0.35, 0.8], [False, True, True, False]) == pytest.approx(0.5)


def test_auc_single_class():
    with pytest.raises(SingleClass):
        auc([0.1, 0.2], [True, True])


scores_labels = st.integers(2, 30).flatmap(lambda n: st.tuples(
    st.lists(st.integers(-40, 40).map(lambda k: k / 8), min_size=n, max_size=n),
    st.lists(st.booleans(), min_size=n, max_size=n).filter(lambda l: 0 < sum(l) < len(l))))


@given(scores_labels)
def test_auc_matches_pair_enumeration(data):
    s, l = data
    assert auc(s, l) == pytest.approx(auc_pairs(s, l), abs=1e-12)


@given(scores_labels)
def test_auc_monotone_invariance(data):
    s, l = data
    assert auc(np.exp(np.asarray(s)), l) == pytest.approx(auc(s, l), abs=1e-12)


def _signal_vs_noise(acc):
    return SyntheticSpec(0.5, 0.5, (IndependentGroup((acc,) * 6),), (), 6,
                         table_from_logits(0, 0.5, 0.5), table_from_logits(0, 0, 0.5))


def test_validity_auc_strong_signal():
    assert validity_auc(_signal_vs_noise(0.9), 100_000, seed=0) >= 0.99


def test_validity_auc_no_signal():
    vals = [validity_auc(_signal_vs_noise(0.5), 5000, seed=s) for s in range(20)]
    assert abs(np.mean(vals) - 0.5) <= 0.1


def test_calibration_smoke():
    cov, rows = calibration(preset("calibration_null"), datasets=5, n=5000, replicates=20, details=True)
    assert cov in {k / 5 for k in range(6)}
    assert len(rows) == 5


def test_calibration_strong_effect_rarely_covers():
    spec = SyntheticSpec(0.5, 0.5, (IndependentGroup((0.8,) * 6),), (), 0,
                         table_from_logits(0, 1.5, 0.3), table_from_logits(0, 1.0, 0.3))
    assert calibration(spec, datasets=4, n=5000, replicates=20) <= 0.25


def test_scaling_curve_shapes_and_population():
    spec = preset("calibration_null")
    res = scaling_curve(spec, [1000, 4000], seeds=[0, 1])
    assert len(res.rows) == 4
    means = res.mean_by_value("error")
    assert means[4000] < means[1000]
    assert population_error(spec) <= 1e-8
    assert population_error(preset("null_fig5a")) <= 1e-8


def test_misspecified_error_plateaus():
    spec = preset("dependency_clique")
    res = scaling_curve(spec, [100_000, 400_000], seeds=[0, 1, 2], misspecified=True)
    means = res.mean_by_value("error")
    assert means[400_000] / means[100_000] >= 0.8
    assert population_error(spec, misspecified=True) > 0.05


def test_robustness_sweep_smoke():
    res = robustness_sweep([0.5], n=5000, replicates=10)
    assert [r["method"] for r in res.rows] == ["ivy", "uas", "was"]
    assert res.to_csv().splitlines()[0] == "accuracy,seed,method,median,ci_low,ci_high,covers_zero"
    with pytest.raises(ValueError):
        robustness_sweep([1.0], n=100, replicates=1)


def test_sweep_csv_empty():
    assert SweepResult("n", [1]).to_csv() == ""

import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from ivysynth.core import CandidateGraph, TooFewValid
from ivysynth.datagen import (
    IndependentGroup,
    SyntheticSpec,
    enumerate_joint,
    exact_moments,
    preset,
    sample,
    table_from_logits,
    valid_moments,
)
from ivysynth.paramlearn import (
    DisconnectedSignGraph,
    DroppedPairs,
    RankDeficient,
    build_system,
    cond_indep_pairs,
    param_learn,
    param_learn_moments,
    recover_signs,
    solve_log_accuracies,
    solve_magnitudes,
)
from oracles import count_cross_pairs


def ci_spec(accs, prior_z=0.5):
    return SyntheticSpec(prior_z, 0.5, (IndependentGroup(tuple(accs)),), (), 0,
                         table_from_logits(0, 0.5, 0.5), table_from_logits(0, 0, 0.5))


def exhaustive_signs(O, pairs):
    """Every sign vector (first entry +1) satisfying all pair constraints."""
    k = O.shape[0]
    out = []
    for tail in itertools.product((1, -1), repeat=k - 1):
        s = (1,) + tail
        if all(s[i] * s[j] == np.sign(O[i, j]) for i, j in pairs):
            out.append(np.array(s))
    return out


def test_pairs_all_ci():
    assert cond_indep_pairs(CandidateGraph.independent(range(4))) == list(itertools.combinations(range(4), 2))


def test_pairs_skip_within_clique():
    g = CandidateGraph.from_cliques([[1, 2, 3], [4]])
    # positions in graph.valid = (1, 2, 3, 4)
    assert [(g.valid[i], g.valid[j]) for i, j in cond_indep_pairs(g)] == [(1, 4), (2, 4), (3, 4)]


def test_pairs_null_fig5a_true_graph():
    g = preset("null_fig5a").true_graph()
    pairs = cond_indep_pairs(g)
    assert len(pairs) == count_cross_pairs(g.cliques) == 38


def test_q_entry():
    O = np.array([[1.0, 0.25, 0.3], [0.25, 1.0, 0.2], [0.3, 0.2, 1.0]])
    sys_ = build_system(O, [(0, 1), (0, 2), (1, 2)])
    assert sys_.q[0] == pytest.approx(np.log(0.0625))
    assert sys_.q[0] == pytest.approx(-2.7726, abs=1e-4)
    assert_array_equal(sys_.M, [[1, 1, 0], [1, 0, 1], [0, 1, 1]])
    assert np.linalg.matrix_rank(sys_.M) == 3


def test_tiny_pair_dropped_with_warning():
    O = np.full((4, 4), 0.3)
    np.fill_diagonal(O, 1.0)
    O[0, 1] = O[1, 0] = 1e-12
    with pytest.warns(DroppedPairs):
        sys_ = build_system(O, list(itertools.combinations(range(4), 2)))
    assert sys_.dropped_pairs == [(0, 1)]
    assert np.all(sys_.M.sum(axis=1) == 2)


def test_rank_deficient():
    O = np.full((3, 3), 0.3)
    np.fill_diagonal(O, 1.0)
    O[0, 1] = O[1, 0] = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(RankDeficient):
            build_system(O, [(0, 1), (0, 2), (1, 2)])


def test_magnitudes_from_enumerated_moments():
    _, O, _ = exact_moments(enumerate_joint(ci_spec([0.8, 0.7, 0.6])))
    sys_ = build_system(O, [(0, 1), (0, 2), (1, 2)])
    assert_allclose(solve_magnitudes(sys_), [0.6, 0.4, 0.2], atol=1e-12)


def test_perfect_candidates_clip():
    O = np.ones((4, 4))
    sys_ = build_system(O, list(itertools.combinations(range(4), 2)))
    assert_allclose(solve_log_accuracies(sys_), 0.0, atol=1e-14)
    assert_allclose(solve_magnitudes(sys_), 0.999)


def test_perfect_candidates_end_to_end():
    ds, _ = sample(ci_spec([1.0] * 4), 1000, 0)
    model = param_learn(ds.W, CandidateGraph.independent(range(4)))
    assert_allclose(model.mu, 0.999)


def test_signs_all_positive():
    O = np.full((4, 4), 0.2)
    mu, v = recover_signs(np.full(4, 0.5), O, list(itertools.combinations(range(4), 2)))
    assert np.all(mu > 0) and v == 0


def test_signs_one_anticorrelated():
    mu_true = np.array([0.6, -0.4, 0.5])
    O = np.outer(mu_true, mu_true)
    pairs = [(0, 1), (0, 2), (1, 2)]
    mu, v = recover_signs(np.abs(mu_true), O, pairs)
    assert v == 0
    (oracle,) = exhaustive_signs(O, pairs)
    assert_array_equal(np.sign(mu), oracle)
    assert_array_equal(np.sign(mu), [1, -1, 1])


def test_signs_frustrated_cycle_counted():
    O = np.array([[1, 0.2, 0.2], [0.2, 1, -0.2], [0.2, -0.2, 1]])
    _, v = recover_signs(np.full(3, 0.4), O, [(0, 1), (0, 2), (1, 2)])
    assert v == 1
    assert exhaustive_signs(O, [(0, 1), (0, 2), (1, 2)]) == []


def test_signs_disconnected_warns():
    O = np.full((4, 4), 0.3)
    with pytest.warns(DisconnectedSignGraph):
        mu, _ = recover_signs(np.full(4, 0.5), O, [(0, 1), (2, 3)])
    assert np.all(mu > 0)


CI_SPECS = [
    ci_spec([0.8, 0.7, 0.6]),
    ci_spec([0.9, 0.55, 0.75, 0.65], prior_z=0.3),
    ci_spec([0.2, 0.8, 0.7, 0.85, 0.6]),  # one candidate anti-aligned with z
    preset("calibration_null"),
    preset("varying_accuracy"),
    preset("invalid_z(0.55)"),
]


@pytest.mark.parametrize("spec", CI_SPECS, ids=lambda s: s.name or "ci")
def test_population_exactness(spec):
    mu_star, O = valid_moments(spec)
    assert np.all(np.abs(mu_star) >= 0.05)
    g = CandidateGraph.independent(range(spec.n_valid))
    mu = param_learn_moments(O, g, spec.prior_z, clip=False).mu
    assert_allclose(mu, mu_star, atol=1e-10)


def test_population_exactness_with_cliques():
    spec = preset("null_fig5a")
    mu_star, O = valid_moments(spec)
    mu = param_learn_moments(O, spec.true_graph(), clip=False).mu
    assert_allclose(mu, mu_star, atol=1e-10)


def test_residual_optimality():
    ds, _ = sample(preset("calibration_null"), 5000, 3)
    O = ds.W.T.astype(float) @ ds.W / ds.n
    sys_ = build_system(O, cond_indep_pairs(CandidateGraph.independent(range(10))))
    ell = solve_log_accuracies(sys_)
    best = np.linalg.norm(sys_.M @ ell - sys_.q)
    rng = np.random.default_rng(0)
    for _ in range(100):
        probe = ell + rng.normal(scale=rng.uniform(1e-4, 1.0), size=ell.size)
        assert best <= np.linalg.norm(sys_.M @ probe - sys_.q)


def test_varying_accuracy_magnitudes():
    spec = preset("varying_accuracy")
    ds, _ = sample(spec, 100_000, 4)
    mu_star, _ = valid_moments(spec)
    model = param_learn(ds.W, CandidateGraph.independent(range(spec.n_valid)), spec.prior_z)
    assert np.max(np.abs(np.abs(model.mu) - np.abs(mu_star))) <= 0.05


@given(st.integers(0, 9), st.integers(0, 2**31))
def test_sign_flip_equivariance(j, seed):
    ds, _ = sample(preset("calibration_null"), 2000, seed)
    g = CandidateGraph.independent(range(10))
    base = param_learn(ds.W, g).mu
    W = ds.W.copy()
    W[:, j] = -W[:, j]
    flipped = param_learn(W, g).mu
    expect = base.copy()
    expect[j] = -expect[j]
    if np.sum(expect) > 0:  # flipped candidate not pivotal for the majority sum
        assert_allclose(flipped, expect, atol=1e-12)


def test_too_few_valid():
    with pytest.raises(TooFewValid):
        param_learn(np.ones((10, 2)), CandidateGraph.independent(range(2)))


def test_misspecified_pairs_leave_bias():
    spec = preset("dependency_clique")
    mu_star, O = valid_moments(spec)
    forced = param_learn_moments(O, CandidateGraph.independent(range(8)), clip=False).mu
    right = param_learn_moments(O, spec.true_graph(), clip=False).mu
    assert np.linalg.norm(right - mu_star) < 1e-10
    assert np.linalg.norm(forced - mu_star) > 0.05

import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from ivysynth.core import CandidateGraph, IvyModel
from ivysynth.datagen import (
    CliqueTooLarge,
    DependentGroup,
    IndependentGroup,
    SyntheticSpec,
    clique_group,
    enumerate_joint,
    exact_moments,
    preset,
    sample,
    table_from_logits,
    valid_moments,
)
from ivysynth.posterior import (
    CliqueConditional,
    InfeasibleMoments,
    ci_posterior,
    clique_posterior,
    fit_cliques,
    moment_match_clique,
    posterior,
    singleton_conditional,
)
from oracles import bayes_posterior_ci, bayes_posterior_from_joint

mus = st.lists(st.floats(-0.99, 0.99), min_size=1, max_size=8)
priors = st.floats(0.01, 0.99)


def population_model(spec):
    """IvyModel holding the spec's exact moments over its valid candidates."""
    dist = enumerate_joint(spec)
    mu, O, _ = exact_moments(dist)
    k = spec.n_valid
    first = np.array([dist.expect(f"w{j + 1}") for j in range(k)])
    return dist, IvyModel(tuple(range(k)), mu[:k], O[:k, :k], spec.prior_z, first)


def test_ci_examples():
    assert ci_posterior(np.array([1, -1, 1]), np.zeros(3), 0.5) == pytest.approx(0.5)
    assert ci_posterior(np.array([1]), np.array([0.6]), 0.5) == pytest.approx(0.8, abs=1e-15)


@given(mus, priors, st.data())
def test_ci_matches_bayes(mu, prior, data):
    w = data.draw(st.lists(st.sampled_from([-1, 1]), min_size=len(mu), max_size=len(mu)))
    got = ci_posterior(np.array(w), np.array(mu), prior)
    assert got == pytest.approx(bayes_posterior_ci(w, mu, prior), abs=1e-12)


@given(mus, priors, st.data())
def test_symmetry(mu, prior, data):
    w = np.array(data.draw(st.lists(st.sampled_from([-1, 1]), min_size=len(mu), max_size=len(mu))))
    mu = np.array(mu)
    assert ci_posterior(-w, mu, 1 - prior) == pytest.approx(1 - ci_posterior(w, mu, prior), abs=1e-12)


@given(mus, priors, st.data())
def test_monotone_in_positive_candidates(mu, prior, data):
    mu = np.abs(np.array(mu))
    w = np.array(data.draw(st.lists(st.sampled_from([-1, 1]), min_size=len(mu), max_size=len(mu))))
    j = data.draw(st.integers(0, len(mu) - 1))
    lo, hi = w.copy(), w.copy()
    lo[j], hi[j] = -1, 1
    assert ci_posterior(hi, mu, prior) >= ci_posterior(lo, mu, prior)


def test_extreme_inputs_stay_finite():
    W = np.array(list(itertools.product((-1, 1), repeat=12)))
    p = ci_posterior(W, np.full(12, 0.999), 0.5)
    assert np.all(np.isfinite(p)) and np.all((p >= 0) & (p <= 1))


def test_singleton_channel():
    cc = singleton_conditional(3, 0.6)
    assert_allclose(cc.table_pos, [0.2, 0.8])
    assert_allclose(cc.table_neg, [0.8, 0.2])


def test_singleton_cliques_match_ci():
    mu = np.array([0.3, 0.6, -0.2, 0.5])
    W = np.array(list(itertools.product((-1, 1), repeat=4)))
    cliques = [singleton_conditional(j, mu[j]) for j in range(4)]
    assert_allclose(clique_posterior(W, cliques, 0.4), ci_posterior(W, mu, 0.4), atol=1e-12)


def test_independent_pair_has_zero_coupling():
    mu = np.array([0.6, 0.4])
    O = np.array([[1.0, 0.24], [0.24, 1.0]])
    cc = moment_match_clique(mu, O, 0.5)
    # features: z, w1 z, w2 z, w1 w2
    assert abs(cc.theta[3]) < 1e-6
    assert cc.residual <= 1e-8


def test_four_clique_round_trip():
    group = clique_group(4, 0.45, 0.35)
    spec = SyntheticSpec(0.5, 0.5, (group, IndependentGroup((0.7, 0.7))), (), 0,
                         table_from_logits(0, 0.5, 0.5), table_from_logits(0, 0, 0.5))
    mu, O = valid_moments(spec)
    cc = moment_match_clique(mu[:4], O[:4, :4], 0.5, first_moment=np.zeros(4))
    pos, neg = group.conditional_tables()
    assert 0.5 * np.abs(cc.table_pos - pos).sum() <= 1e-6
    assert 0.5 * np.abs(cc.table_neg - neg).sum() <= 1e-6
    assert cc.table_pos.sum() == pytest.approx(1.0, abs=1e-10)


def _small_dependent_spec(prior_z=0.35):
    clique = DependentGroup((0.5, 0.3, 0.4), ((0, 1, 0.3), (1, 2, -0.2), (0, 2, 0.25)), (0.2, -0.1, 0.0))
    return SyntheticSpec(prior_z, 0.5, (clique, IndependentGroup((0.75, 0.6))), (0.7,), 0,
                         table_from_logits(0, 0.5, 0.5), table_from_logits(0, 0, 0.5))


@pytest.mark.parametrize("prior_z", [0.5, 0.35])
def test_clique_posterior_matches_enumeration(prior_z):
    spec = _small_dependent_spec(prior_z)
    dist, model = population_model(spec)
    graph = spec.true_graph()
    names = [f"w{j + 1}" for j in range(spec.n_valid)]
    W = np.array(list(itertools.product((-1, 1), repeat=spec.n_valid)))
    W_full = np.column_stack([W, np.ones(len(W), dtype=int)])  # invalid column is ignored
    got = posterior(model, W_full, graph)
    want = [bayes_posterior_from_joint(dist, names, row) for row in W]
    assert_allclose(got, want, atol=1e-10)


@pytest.mark.parametrize("name", ["calibration_null", "invalid_z(0.55)"])
def test_ci_presets_match_enumeration(name):
    spec = preset(name)
    dist, model = population_model(spec)
    k = spec.n_valid
    names = [f"w{j + 1}" for j in range(k)]
    rows = np.array(list(itertools.product((-1, 1), repeat=k)))[::7]
    got = posterior(model, rows, spec.true_graph())
    want = [bayes_posterior_from_joint(dist, names, r) for r in rows]
    assert_allclose(got, want, atol=1e-10)


def test_infeasible_targets_shrink():
    mu = np.array([0.9, 0.9])
    O = np.array([[1.0, -0.5], [-0.5, 1.0]])
    with pytest.warns(InfeasibleMoments):
        cc = moment_match_clique(mu, O, 0.5)
    assert 0.0 <= cc.shrink < 1.0
    assert cc.residual <= 1e-4
    assert np.all(np.isfinite(cc.table_pos))


def test_clique_cap():
    with pytest.raises(CliqueTooLarge):
        moment_match_clique(np.full(16, 0.3), np.eye(16), 0.5)


def test_conditional_serialisation_round_trip():
    mu = np.array([0.5, 0.4, 0.3])
    O = np.array([[1, 0.5, 0.3], [0.5, 1, 0.4], [0.3, 0.4, 1.0]])
    cc = moment_match_clique(mu, O, 0.5, members=(2, 5, 7))
    back = CliqueConditional.from_dict(cc.to_dict())
    assert back.members == (2, 5, 7)
    assert_allclose(back.table_pos, cc.table_pos, rtol=0, atol=0)
    assert_allclose(back.theta, cc.theta, rtol=0, atol=0)


def test_dependency_clique_posterior_beats_single_candidates():
    spec = preset("dependency_clique")
    ds, truth = sample(spec, 100_000, 8)
    _, O = valid_moments(spec)
    mu, _ = valid_moments(spec)
    model = IvyModel(tuple(range(8)), mu, O, 0.5, np.zeros(8))
    p = posterior(model, ds.W, spec.true_graph())
    acc = np.mean(np.where(p > 0.5, 1, -1) == truth.z)
    best_single = max(np.mean(ds.W[:, j] == truth.z) for j in range(8))
    assert acc > best_single


def test_fit_cliques_on_sampled_data():
    spec = preset("null_fig5a")
    ds, _ = sample(spec, 50_000, 2)
    from ivysynth.paramlearn import param_learn

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model = param_learn(ds.W, spec.true_graph())
        cliques = fit_cliques(model, spec.true_graph())
    assert [c.members for c in cliques] == list(spec.true_graph().cliques)
    for c in cliques:
        assert c.table_pos.sum() == pytest.approx(1.0, abs=1e-10)
        assert c.table_neg.sum() == pytest.approx(1.0, abs=1e-10)

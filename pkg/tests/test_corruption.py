import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_graph
from fcgssl.corruption import (build_plan, clean_view, materialize, race_select, rank_weights,
                               sample_count, sample_rank_based, sample_uniform,
                               sample_value_based)
from fcgssl.errors import ConfigError
from fcgssl.frequency import ContributionScores
from fcgssl.graph import Graph
from oracles import empirical_inclusion, inclusion_probabilities


def test_sample_count_rounding():
    assert sample_count(0.3, 10) == 3
    assert sample_count(0.25, 10) == 3  # half rounds up
    assert sample_count(0.0, 7) == 0
    assert sample_count(1.0, 7) == 7
    assert sample_count(0.5, 0) == 0
    with pytest.raises(ConfigError):
        sample_count(1.5, 3)


def test_rank_weights():
    np.testing.assert_array_equal(rank_weights([0.3, 0.9, 0.5]), [1, 3, 2])
    np.testing.assert_array_equal(rank_weights([0.5, 0.5, 0.1]), [2, 3, 1])


def test_race_select_shapes_and_distinctness():
    out = race_select(np.arange(1, 9.0), 4, rng=0, n_draws=500)
    assert out.shape == (500, 4)
    assert all(len(set(row)) == 4 for row in out)
    assert race_select([1.0, 2.0], 0, rng=0).shape == (0,)
    with pytest.raises(ValueError):
        race_select([1.0], 2)
    with pytest.raises(ValueError):
        race_select([1.0, -1.0], 1)


def test_zero_weights_drawn_last():
    draws = race_select([0.0, 1.0, 0.0, 2.0], 3, rng=1, n_draws=2000)
    assert set(draws[:, :2].ravel()) == {1, 3}
    np.testing.assert_allclose(empirical_inclusion(draws[:, 2:], 4), [0.5, 0, 0.5, 0], atol=0.05)


def test_all_zero_falls_back_to_uniform(caplog):
    draws = race_select(np.zeros(4), 2, rng=2, n_draws=20000)
    assert "falling back to uniform" in caplog.text
    np.testing.assert_allclose(empirical_inclusion(draws, 4), [0.5] * 4, atol=0.02)


@pytest.mark.parametrize("w, T", [([0.1, 0.2, 0.7], 1), ([1, 2, 3, 4, 5], 2),
                                  ([0.05, 0.5, 0.0, 0.3, 0.15, 1.0], 3)])
def test_inclusion_matches_enumeration(w, T):
    exact_v = inclusion_probabilities(w, T)
    exact_r = inclusion_probabilities(rank_weights(w), T)
    emp_v = empirical_inclusion(sample_value_based(w, T, 11, n_draws=200_000), len(w))
    emp_r = empirical_inclusion(sample_rank_based(w, T, 12, n_draws=200_000), len(w))
    np.testing.assert_allclose(emp_v, exact_v, atol=0.005)
    np.testing.assert_allclose(emp_r, exact_r, atol=0.005)
    assert abs(exact_v.sum() - T) < 1e-12


def test_enumeration_oracle_closed_form():
    # T=1 is plain proportional sampling
    np.testing.assert_allclose(inclusion_probabilities([1, 3], 1), [0.25, 0.75])
    # w=(1,1,2), T=2: P(2 excluded) = P(0 then 1) + P(1 then 0) = 2 * 1/4 * 1/3
    np.testing.assert_allclose(inclusion_probabilities([1, 1, 2], 2)[2], 1 - 1 / 6)


def test_uniform_inclusion_within_one_percent():
    draws = sample_uniform(10, 3, rng=5, n_draws=100_000)
    np.testing.assert_allclose(empirical_inclusion(draws, 10), 0.3, atol=0.01)


def fake_scores(g, rng):
    ce = rng.random(g.num_edges)
    return ContributionScores(ce, rng.random(g.num_nodes))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 1), st.floats(0, 1), st.booleans())
def test_set_laws(seed, r_N, r_E, combine):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, 20)
    plan = build_plan(fake_scores(g, rng), g, r_N, r_E, seed, combine=combine)
    assert len(plan.P_N) == len(plan.Q_N) == sample_count(r_N, g.num_nodes)
    assert len(plan.P_E) == len(plan.Q_E) == sample_count(r_E, g.num_edges)
    if combine:
        assert set(plan.S_C.nodes) <= set(plan.S_N.nodes)
        assert set(plan.S_C.edges) <= set(plan.S_E.edges)
        assert set(plan.S_N.nodes) == set(plan.P_N) | set(plan.Q_N)
    else:
        assert set(plan.S_N.nodes) == set(plan.P_N)
        assert set(plan.S_C.edges) == set(plan.Q_E)


def test_rate_extremes(rng):
    g = random_graph(rng, 30, 10, p=0.3)
    s = fake_scores(g, rng)
    empty = build_plan(s, g, 0.0, 0.0, 3)
    assert len(empty.S_N) == len(empty.S_E) == len(empty.S_C) == 0
    full = build_plan(s, g, 1.0, 1.0, 3)
    assert full.S_N.nodes.tolist() == full.S_C.nodes.tolist() == list(range(g.num_nodes))
    assert full.S_E.edges.tolist() == full.S_C.edges.tolist() == list(range(g.num_edges))


def test_plan_determinism_and_json(tmp_path, rng):
    g = random_graph(rng, 30, 10, p=0.3)
    s = fake_scores(g, rng)
    a, b = build_plan(s, g, 0.3, 0.3, 9), build_plan(s, g, 0.3, 0.3, 9)
    assert a.to_dict() == b.to_dict()
    assert a.to_dict() != build_plan(s, g, 0.3, 0.3, 10).to_dict()
    a.write_json(tmp_path / "plan.json", g)
    doc = json.loads((tmp_path / "plan.json").read_text())
    assert doc["S_E"]["edge_pairs"] == g.edges[a.S_E.edges].tolist()
    assert len(doc["sub_seeds"]) == 4


def test_materialized_views():
    g = Graph(4, [[0, 1], [1, 2], [2, 3]], np.arange(8.0).reshape(4, 2))
    s = ContributionScores(np.array([0.1, 0.5, 0.9]), np.array([0.2, 0.4, 0.6, 0.8]))
    plan = build_plan(s, g, 0.5, 0.34, 4)
    vn = materialize(plan, g, "G_N")
    assert vn.edges.tolist() == g.edges.tolist()
    assert vn.mask.sum() == len(plan.S_N.nodes)
    X = vn.corrupted_features(-1.0)
    assert np.all(X[vn.mask] == -1.0) and np.all(X[~vn.mask] == g.features[~vn.mask])
    ve = materialize(plan, g, "G_E")
    assert len(ve.edges) == 3 - len(plan.S_E.edges) and not ve.mask.any()
    assert len(clean_view(g).edges) == 3
    with pytest.raises(ConfigError):
        materialize(plan, g, "G_X")

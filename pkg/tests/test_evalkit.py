import json

import numpy as np
import pytest

from fcgssl.errors import ConfigError, ShapeError
from fcgssl.evalkit import (accuracy, graph_probe, graph_readout, linear_probe, load_splits,
                            random_split, rmse, roc_auc, save_splits, stratified_split)


def separable(n=60, d=4, seed=0):
    rng = np.random.default_rng(seed)
    y = np.repeat([0, 1], n // 2)
    H = rng.standard_normal((n, d)) + 4.0 * y[:, None]
    return H, y


def test_metrics():
    assert accuracy([1, 0, 1, 1], [1, 1, 1, 1]) == 0.75
    assert rmse([1.0, 2.0], [1.0, 4.0]) == np.sqrt(2.0)
    assert roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
    assert roc_auc([0.5, 0.5], [0, 1]) == 0.5
    with pytest.raises(ValueError):
        roc_auc([0.1, 0.2], [1, 1])


def test_auc_matches_pair_counting():
    rng = np.random.default_rng(3)
    s = rng.integers(0, 5, 40).astype(float)
    y = rng.integers(0, 2, 40)
    pos, neg = s[y == 1], s[y == 0]
    pairs = (pos[:, None] > neg).sum() + 0.5 * (pos[:, None] == neg).sum()
    assert abs(roc_auc(s, y) - pairs / (len(pos) * len(neg))) < 1e-12


def test_readout():
    H = np.arange(12.0).reshape(4, 3)
    np.testing.assert_array_equal(graph_readout(H, "sum"), H.sum(0))
    seg = np.array([0, 0, 1, 1])
    np.testing.assert_array_equal(graph_readout(H, "mean", seg), [H[:2].mean(0), H[2:].mean(0)])
    with pytest.raises(ShapeError):
        graph_readout(np.zeros((0, 3)))
    with pytest.raises(ShapeError):
        graph_readout(H, "mean", seg, num_segments=3)
    with pytest.raises(ConfigError):
        graph_readout(H, "max")


def test_splits_partition(tmp_path):
    y = np.repeat([0, 1, 2], 10)
    sp = stratified_split(y, seed=1)
    allidx = np.concatenate(list(sp.values()))
    assert sorted(allidx.tolist()) == list(range(30))
    assert np.bincount(y[sp["train"]]).tolist() == [6, 6, 6]
    r = random_split(10, seed=0)
    assert sum(len(v) for v in r.values()) == 10
    save_splits(tmp_path / "s.json", sp)
    back = load_splits(tmp_path / "s.json")
    assert all(np.array_equal(back[k], sp[k]) for k in sp)
    d = tmp_path / "dir"
    d.mkdir()
    for k, v in sp.items():
        np.savetxt(d / f"{k}.csv", v, fmt="%d")
    assert all(np.array_equal(load_splits(d)[k], sp[k]) for k in sp)


def test_linear_probe_separable_and_chance():
    H, y = separable()
    res = linear_probe(H, y, repeats=3, seed=0)
    assert res.metric == "accuracy" and res.mean >= 0.95
    assert len(res.per_repeat) == 3 and len(res.per_split["val"]) == 3
    noise = np.random.default_rng(1).standard_normal((200, 4))
    chance = linear_probe(noise, np.repeat([0, 1], 100), repeats=3).mean
    assert 0.3 < chance < 0.7


def test_probe_single_repeat_std_zero_and_json(tmp_path):
    H, y = separable()
    res = linear_probe(H, y, repeats=1)
    assert res.std == 0.0
    res.write_json(tmp_path / "r.json", "seed = 0\n")
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["config"] == "seed = 0\n" and doc["per_repeat"] == res.per_repeat


def test_probe_validation():
    H, y = separable()
    with pytest.raises(ConfigError):
        linear_probe(H, y.astype(float))
    with pytest.raises(ConfigError):
        linear_probe(H, y, repeats=0)


def test_fixed_splits_deterministic():
    H, y = separable()
    sp = stratified_split(y, seed=4)
    a = linear_probe(H, y, splits=sp, repeats=2)
    b = linear_probe(H, y, splits=sp, repeats=2)
    assert a.per_repeat == b.per_repeat


def test_graph_probe_regression_and_classification():
    rng = np.random.default_rng(2)
    G = rng.standard_normal((80, 3))
    t = G @ np.array([1.0, -2.0, 0.5]) + 0.01 * rng.standard_normal(80)
    reg = graph_probe(G, t, "regression", repeats=2, steps=600, lr=0.05)
    assert reg.metric == "rmse" and reg.mean < 0.2
    cls = graph_probe(G, (t > 0).astype(int), "classification", repeats=2, steps=300)
    assert cls.metric == "roc_auc" and cls.mean > 0.95
    with pytest.raises(ConfigError):
        graph_probe(G, t, "ranking")

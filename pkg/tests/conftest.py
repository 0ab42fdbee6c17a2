import numpy as np
import pytest

from fcgssl.graph import Graph
from fcgssl.trainer import clear_memory_cache


def random_graph(rng, n_max=100, n_min=2, d=3, p=None):
    n = int(rng.integers(n_min, n_max + 1))
    p = rng.uniform(0.02, 0.4) if p is None else p
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(len(iu)) < p
    feats = rng.standard_normal((n, d))
    return Graph(n, np.stack([iu[keep], ju[keep]], axis=1), feats,
                 rng.integers(0, 2, n))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _fresh_cache(monkeypatch):
    monkeypatch.delenv("FCG_CACHE_DIR", raising=False)
    clear_memory_cache()
    yield
    clear_memory_cache()


def pytest_terminal_summary(terminalreporter):
    from oracles import ACCEPTANCE_LINES
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

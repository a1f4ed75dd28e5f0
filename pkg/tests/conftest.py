import os

import numpy as np
import pytest

from groupoidgen.poisson import PoissonStructure


@pytest.fixture(scope="session", autouse=True)
def _isolated_cache(tmp_path_factory):
    # keep weight caches out of the user's home directory
    path = tmp_path_factory.mktemp("weight-cache")
    old = os.environ.get("GROUPOIDGEN_CACHE_DIR")
    os.environ["GROUPOIDGEN_CACHE_DIR"] = str(path)
    yield path
    if old is None:
        os.environ.pop("GROUPOIDGEN_CACHE_DIR", None)
    else:
        os.environ["GROUPOIDGEN_CACHE_DIR"] = old


def random_antisymmetric(rng, d=3, scale=1.0):
    a = rng.standard_normal((d, d)) * scale
    return a - a.T


@pytest.fixture
def constant_ps():
    return PoissonStructure.constant(random_antisymmetric(np.random.default_rng(7)))


@pytest.fixture
def so3():
    return PoissonStructure.so3()


@pytest.fixture(scope="session")
def weights_n3():
    """Weights for every tree with n <= 3 at 10^6 samples, shared across tests."""
    from groupoidgen.graphs import enumerate_trees
    from groupoidgen.weights import compute_weight_table
    import time
    trees = [g for n in (1, 2, 3) for g in enumerate_trees(n)]
    t0 = time.perf_counter()
    table = compute_weight_table(trees, 1_000_000, seed=3, workers=2)
    table.elapsed = time.perf_counter() - t0
    return table


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

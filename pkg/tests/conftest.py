import pytest

from philaex import train_logistic, train_random_forest, train_test_split
from philaex.synth import make_binary_benchmark


@pytest.fixture(scope="session")
def benchmark():
    return make_binary_benchmark(n_samples=1200, seed=7)


@pytest.fixture(scope="session")
def benchmark_split(benchmark):
    return train_test_split(benchmark, 0.67, seed=1)


@pytest.fixture(scope="session")
def forest(benchmark_split):
    train, _ = benchmark_split
    return train_random_forest(train, tree_count=100, max_depth=10, seed=3)


@pytest.fixture(scope="session")
def logistic(benchmark_split):
    train, _ = benchmark_split
    return train_logistic(train)

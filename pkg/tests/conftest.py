import numpy as np
import pytest


def synthetic_table(n, d, classes, seed=0):
    """Features with a learnable, interaction-driven label in 1..classes."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d)) * rng.uniform(0.5, 20, size=d) + rng.normal(size=d) * 5
    Z = (X - X.mean(0)) / X.std(0)
    score = Z[:, 0] * Z[:, 1 % d] + Z[:, 2 % d] - 0.5 * Z[:, 3 % d] ** 2
    edges = np.quantile(score, np.linspace(0, 1, classes + 1)[1:-1])
    y = np.searchsorted(edges, score) + 1
    return X, y


def write_csv(path, X, y):
    with open(path, "w") as fh:
        for row, label in zip(X, y):
            fh.write(",".join(repr(float(v)) for v in row) + f",{int(label)}\n")
    return path


@pytest.fixture
def make_csv(tmp_path):
    def make(n=200, d=6, classes=3, seed=0, name="data.csv"):
        X, y = synthetic_table(n, d, classes, seed)
        return write_csv(tmp_path / name, X, y)
    return make


ACCEPT_LINES = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPT_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)

import numpy as np
import pytest

from cod.data import gen_moons, make_rng
from cod.distill import fit_classifier
from cod.nn import MlpModel, MlpSpec


def train_moons_teacher(seed=0, noise=0.1):
    data = gen_moons(2000, noise, seed)
    spec = MlpSpec((2, 64, 64, 2), "relu")
    teacher = fit_classifier(MlpModel.init(spec, make_rng(seed, 50)), data, lr=0.01, epochs=600, seed=seed)
    return data, teacher


@pytest.fixture(scope="session")
def moons_teacher():
    return train_moons_teacher(0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


class LinearTeacher:
    """f(x) = sigmoid(x1); boundary is the line x1 = 0."""

    __name__ = "linear_x1"

    def __call__(self, X):
        X = np.atleast_2d(X)
        return 1.0 / (1.0 + np.exp(-X[:, 0]))


@pytest.fixture
def linear_teacher():
    return LinearTeacher()


ACCEPTANCE_LINES = []


def report(criterion, ok, detail):
    line = f"[criterion {criterion:>2}] {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

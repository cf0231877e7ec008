import numpy as np
import pytest

from creditalloc import ModelConfig, generate_synthetic, make_portfolio
from creditalloc.oracle import brute_force_contributions

# the 50-loan oracle-comparison portfolio; R^2 <= 0.3 keeps every |rho| <= 0.3
ACCEPTANCE_SEED = 7


def acceptance_portfolio():
    return generate_synthetic(50, 20, 3, seed=ACCEPTANCE_SEED, r2_range=(0.07, 0.3))


@pytest.fixture(scope="session")
def acc_portfolio():
    return acceptance_portfolio()


@pytest.fixture(scope="session")
def acc_cfg():
    return ModelConfig(recovery_k=4.0)


@pytest.fixture(scope="session")
def acc_brute(acc_portfolio, acc_cfg):
    return brute_force_contributions(acc_portfolio, acc_cfg)


@pytest.fixture
def cfg():
    return ModelConfig()


@pytest.fixture
def small_portfolio():
    """Six loans, four borrowers, two factors; mixes short and long maturities."""
    return make_portfolio(
        [
            ("A", 0.5, [0.6, 0.8]),
            ("B", 0.4, [1.0, 0.0]),
            ("C", 0.3, [0.0, 1.0]),
            ("D", 0.6, [-0.8, 0.6]),
        ],
        [
            ("L1", "A", 1e6, 5.0, 0.01, 0.0490099501, 0.45),
            ("L2", "A", 5e5, 0.5, 0.01, 0.01, 0.7),
            ("L3", "B", 2e6, 3.0, 0.002, 0.006, 0.3),
            ("L4", "C", 8e5, 10.0, 0.05, 0.4, 0.6),
            ("L5", "D", 3e5, 1.0, 0.1, 0.1, 0.9),
            ("L6", "D", 1e6, 2.0, 0.1, 0.19, 0.2),
        ],
        n_factors=2,
    )


def rel(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return np.abs(a - b) / np.abs(b)


# one line per acceptance criterion, shown in the terminal summary
ACCEPTANCE_LINES = {}


def report_criterion(number, passed, detail):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])

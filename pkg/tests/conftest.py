import numpy as np
import pytest

from rsgbm import AuxFunctions, load_model, validate_model


def random_model(rng: np.random.Generator, l: int, d: int = 1, rate_scale: float = 2.0, equal_rates=False):
    """Random valid market with l regimes and d assets."""
    L = rng.uniform(0.0, rate_scale, size=(l, l))
    np.fill_diagonal(L, 0.0)
    np.fill_diagonal(L, -L.sum(axis=1))
    mu = rng.uniform(-0.2, 0.3, size=(l, d))
    sigma = np.empty((l, d, d))
    for i in range(l):
        A = rng.normal(size=(d, d)) * 0.1
        sigma[i] = np.linalg.cholesky(A @ A.T + np.diag(rng.uniform(0.01, 0.16, size=d)))
    r = np.full(l, rng.uniform(0.0, 0.06)) if equal_rates else rng.uniform(0.0, 0.08, size=l)
    return validate_model({"mu": mu, "sigma": sigma, "r": r, "Lambda": L})


@pytest.fixture(scope="session")
def shen():
    return load_model("shen")


@pytest.fixture(scope="session")
def shen_aux(shen):
    return AuxFunctions(shen, 1.0)


@pytest.fixture(scope="session")
def apple():
    return load_model("apple")


ACCEPTANCE: list = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per acceptance criterion and assert on it."""

    def record(n: int, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
        ACCEPTANCE.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)

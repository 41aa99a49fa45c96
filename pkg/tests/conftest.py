import numpy as np
import pytest

from lindlearn import dataset as ds


def random_density(d, rng, rank=None):
    rank = rank or d
    a = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def random_hermitian(d, rng):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return a + a.conj().T


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def spin_model():
    return ds.sample_ground_truth("spin32", 7)


_ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """``acceptance(k, ok, detail)`` records and prints one criterion line."""
    store = request.config.stash.setdefault(_ACCEPTANCE_KEY, {})

    def record(k, ok, detail=""):
        line = f"ACCEPTANCE {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        store[k] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_ACCEPTANCE_KEY, {})
    if store:
        terminalreporter.section("acceptance criteria")
        for k in sorted(store):
            terminalreporter.write_line(store[k])

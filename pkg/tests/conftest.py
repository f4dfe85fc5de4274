import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def embed(coords, n, seed=0):
    """Place in-subspace coordinates (d x N) into a random d-dim subspace of R^n."""
    from subsparse.geometry import orthonormalize

    coords = np.asarray(coords, dtype=float)
    d = coords.shape[0]
    S = orthonormalize(np.random.default_rng(seed).standard_normal((n, d)))
    return S, S.basis @ coords


def unit_columns(rng, d, N):
    g = rng.standard_normal((d, N))
    return g / np.linalg.norm(g, axis=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_RESULTS: dict[str, str] = {}


def pytest_terminal_summary(terminalreporter):
    ran = any("test_acceptance.py" in r.nodeid for rs in terminalreporter.stats.values() for r in rs if hasattr(r, "nodeid"))
    if not ran:
        return
    terminalreporter.section("acceptance criteria")
    for name in (f"A{k}" for k in range(1, 9)):
        terminalreporter.write_line(ACCEPTANCE_RESULTS.get(name, f"{name} FAIL  not reached"))

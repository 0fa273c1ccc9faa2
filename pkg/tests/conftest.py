import numpy as np
import pytest

from conevol import body as bodies
from conevol import corpus as corpora
from conevol import sphere

# criterion number -> (passed, detail), filled in by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def grid2():
    return sphere.default_grid(2, 32)


@pytest.fixture(scope="session")
def grid1():
    return sphere.default_grid(1, 32)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(7)


@pytest.fixture(scope="session", params=[1, 2], ids=["n1", "n2"])
def n(request):
    return request.param


@pytest.fixture(scope="session")
def corpora_by_dim():
    """The default seeded 50-body corpus in each dimension."""
    return {d: corpora.generate(corpora.CorpusSpec(dimension=d, degree=32, seed=42)) for d in (1, 2)}


@pytest.fixture(scope="session")
def unit_balls():
    return {d: bodies.make_ball(1.0, d, 32) for d in (1, 2)}

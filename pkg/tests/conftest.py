import numpy as np
import pytest
from hypothesis import strategies as st

from coreguide.cnf import Cnf


@st.composite
def small_cnfs(draw, max_vars=8, max_clauses=10, max_len=4, min_vars=1):
    n = draw(st.integers(min_vars, max_vars))
    lit = st.integers(1, n).flatmap(lambda v: st.sampled_from((v, -v)))
    clauses = draw(st.lists(st.lists(lit, min_size=1, max_size=max_len), min_size=0, max_size=max_clauses))
    return Cnf(n, tuple(tuple(c) for c in clauses))


def random_cnf(rng: np.random.Generator, n: int, m: int, k: int = 3, name: str = "") -> Cnf:
    k = min(k, n)
    clauses = []
    for _ in range(m):
        vs = rng.choice(n, size=k, replace=False) + 1
        signs = rng.integers(0, 2, size=k) * 2 - 1
        clauses.append(tuple(int(v * s) for v, s in zip(vs, signs)))
    return Cnf(n, tuple(clauses), name)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)

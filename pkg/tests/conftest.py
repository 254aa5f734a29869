import numpy as np
import pytest

from cpcommunity.graph import CommunityConfig, build_community_graph, from_edges


@pytest.fixture(scope="session")
def path4():
    return from_edges([(0, 1), (1, 2), (2, 3)])


@pytest.fixture(scope="session")
def edge():
    return from_edges([(0, 1)])


@pytest.fixture(scope="session")
def triangle():
    return from_edges([(0, 1), (1, 2), (0, 2)])


@pytest.fixture(scope="session")
def figure1_graph():
    return build_community_graph(CommunityConfig.two_community(500, 2, seed=42, p=0.1))


def complete(m):
    return from_edges([(i, j) for i in range(m) for j in range(i + 1, m)])


def z_score(hits, trials, p):
    se = np.sqrt(p * (1 - p) / trials)
    return (hits / trials - p) / se


# acceptance results: criterion -> list of (ok, detail); printed at the end of the run
ACCEPTANCE = {}


def record(criterion, ok, detail):
    ACCEPTANCE.setdefault(criterion, []).append((bool(ok), detail))
    print(f"[criterion {criterion}] {'ok' if ok else 'MISS'} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for c in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[c]
        status = "PASS" if all(ok for ok, _ in parts) else "FAIL"
        terminalreporter.write_line(f"{status} criterion {c}: " + "; ".join(d for _, d in parts))

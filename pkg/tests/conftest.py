import numpy as np
import pytest
import scipy.sparse as sp

from offsetopt import netmodel as nm


def make_e1():
    """Two signals: entry into 1 (A = D = 1), link 1 -> 2 with a quarter-cycle delay."""
    return nm.TrafficNetwork(
        num_signals=2,
        links=(
            nm.Link(tail=2, head=0, flow=1.0, entry_amplitude=1.0),
            nm.Link(tail=0, head=1, travel_time=0.25),
        ),
        turn_ratios=((0, 1, 1.0),),
    )


E1_JSON = {
    "num_signals": 2,
    "links": [
        {"tail": "eps", "head": 1, "flow": 1.0, "entry_amplitude": 1.0},
        {"tail": 1, "head": 2, "travel_time": 0.25},
    ],
    "turn_ratios": [[1, 2, 1.0]],
}


@pytest.fixture
def e1():
    return make_e1()


@pytest.fixture
def e1_objective():
    return nm.build_objective(make_e1())


def random_unit(rng, n, k=None):
    shape = (n,) if k is None else (k, n)
    return np.exp(2j * np.pi * rng.uniform(size=shape))


def random_psd_on_pattern(rng, pattern, scale=1.0):
    """Hermitian PSD matrix with the sparsity of ``pattern`` (diagonally dominant)."""
    P = sp.coo_matrix(sp.triu(pattern, 1))
    n = pattern.shape[0]
    vals = scale * (rng.standard_normal(P.nnz) + 1j * rng.standard_normal(P.nnz))
    U = sp.coo_matrix((vals, (P.row, P.col)), shape=(n, n))
    M = U + U.conj().T
    d = np.asarray(abs(M).sum(axis=1)).ravel() + 0.1
    return sp.csr_matrix(M + sp.diags(d))


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

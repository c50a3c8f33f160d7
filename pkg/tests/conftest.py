import numpy as np
import pytest

from nbspectra.graphs import graph_from_edges
from nbspectra.localstats import tiny_graph_corpus
from nbspectra.model import derive_spectral_data, preset


@pytest.fixture(scope="session")
def corpus():
    return tiny_graph_corpus()


@pytest.fixture(scope="session")
def data_71():
    return derive_spectral_data(preset("sbm-2x-7-1"))


@pytest.fixture(scope="session")
def data_53():
    return derive_spectral_data(preset("sbm-2x-5-3"))


@pytest.fixture(scope="session")
def data_er4():
    return derive_spectral_data(preset("er4"))


@pytest.fixture
def path3():
    return graph_from_edges(3, [(0, 1), (1, 2)])


@pytest.fixture
def triangle():
    return graph_from_edges(3, [(0, 1), (0, 2), (1, 2)])


@pytest.fixture
def k4():
    return graph_from_edges(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])


def sorted_spectrum(vals: np.ndarray) -> np.ndarray:
    """Stable (Re, Im) ordering: rounding first so that conjugate pairs with
    eigensolver noise in tied real parts do not interleave differently
    across methods."""
    v = np.round(np.asarray(vals, dtype=np.complex128), 9)
    order = np.lexsort((v.imag, v.real))
    return np.asarray(vals)[order]


def expected_bp_multiset(graph) -> np.ndarray:
    """deg(v) - 1 over vertices plus m - n copies of -1 (m oriented edges);
    a negative surplus cancels -1 entries from isolated vertices."""
    vals = list(graph.degrees - 1)
    surplus = 2 * graph.edge_count - graph.n
    if surplus >= 0:
        vals.extend([-1] * surplus)
    else:
        for _ in range(-surplus):
            vals.remove(-1)
    return np.sort(np.array(vals, dtype=np.float64))


def edge_pair(index, e: int) -> tuple[int, int]:
    return int(index.tails[e]), int(index.heads[e])

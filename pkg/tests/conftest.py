import numpy as np
import pytest
import scipy.sparse as sp

from mixclust import CountMatrix, Hyperparams


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def hyper():
    return Hyperparams()


def make_counts(rows):
    """CountMatrix from a dense list-of-lists."""
    return CountMatrix(matrix=sp.csr_matrix(np.asarray(rows, dtype=np.int64)))


@pytest.fixture
def tiny_counts():
    # 4 docs, 5 words; lengths 3, 3, 2, 2
    return make_counts(
        [
            [2, 1, 0, 0, 0],
            [0, 2, 1, 0, 0],
            [0, 0, 0, 1, 1],
            [0, 0, 1, 0, 1],
        ]
    )

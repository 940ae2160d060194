import numpy as np
import pytest

from surpsim.testbed import (make_backend, make_corpus, make_embeddings,
                             make_stimuli, orthonormal_table, toy_backend)


@pytest.fixture(scope="session")
def toy():
    return toy_backend()


@pytest.fixture(scope="session")
def toy_table():
    return orthonormal_table(("a", "b"))


@pytest.fixture(scope="session")
def testbed_corpus():
    return make_corpus(n_sentences=2000, seed=11)


@pytest.fixture(scope="session")
def testbed_backend(testbed_corpus):
    return make_backend(testbed_corpus, order=3, pseudocount=0.005)


@pytest.fixture(scope="session")
def testbed_table():
    return make_embeddings(dim=16, seed=11)


@pytest.fixture(scope="session")
def testbed_stimuli(testbed_backend, testbed_table):
    # 500 stimuli without measurements: enough for the identity and
    # correlation checks, cheap to generate.
    return make_stimuli(testbed_backend, n_stimuli=500, seed=11,
                        measurements=False, table=testbed_table)


@pytest.fixture()
def rng():
    return np.random.default_rng(2024)

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from xldistill.data import default_scheme
from xldistill.encoding import SubtokenVocab
from xldistill.synth import synth_cipher_corpora


@pytest.fixture(scope="session")
def scheme():
    return default_scheme()


@pytest.fixture(scope="session")
def small_corpora():
    """Small synthetic pair shared across tests (80/20/20 sentences)."""
    return synth_cipher_corpora(11, 80, 20, 20)


@pytest.fixture(scope="session")
def small_vocab(small_corpora):
    source, _ = small_corpora
    return SubtokenVocab.train(source.train, n_merges=80)

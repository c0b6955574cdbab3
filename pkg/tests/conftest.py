import numpy as np
import pytest

from app.main import configure_logging
from app.models.topology import Alphabet, TopologyKind

configure_logging("WARNING")


@pytest.fixture
def ctc_alphabet() -> Alphabet:
    """/, A, C, T"""
    return Alphabet.for_topology(TopologyKind.CTC, ["A", "C", "T"])


@pytest.fixture
def tcs_alphabet() -> Alphabet:
    """~, +, A, C, T"""
    return Alphabet.for_topology(TopologyKind.TCS, ["A", "C", "T"])


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)

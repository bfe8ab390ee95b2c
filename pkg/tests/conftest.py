"""Shared fixtures for the hidden-vi tests"""

import numpy as np
import pytest

from core.models import hidden_pennies_model
from core.vi_problems import PenniesOperator
from operations.rl_pbe import MarkovChain


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def pennies():
    return hidden_pennies_model(), PenniesOperator()


@pytest.fixture
def small_chain():
    """10-state chain with dense random rows, fast-mixing"""
    gen = np.random.default_rng(7)
    p = gen.dirichlet(np.ones(10), size=10)
    return MarkovChain(p, gen.uniform(0, 1, 10), 0.9)


@pytest.fixture
def swap_chain():
    return MarkovChain(np.array([[0.0, 1.0], [1.0, 0.0]]), np.array([1.0, 0.0]), 0.5)

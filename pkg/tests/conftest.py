import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gdlnn.gdl import parse_program
from gdlnn.graph import Graph
from gdlnn.mining import ScoredProgram, TrainingSet
from gdlnn.model import MLP, ActivationKind, Model

settings.register_profile("default", max_examples=100, deadline=None)
settings.register_profile("ci", max_examples=300, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("fast", max_examples=20, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

DATA_DIR = Path(__file__).parent / "data"

P1_TEXT = "node x <[3.0, 4.0]>\nnode y <[2.0, 2.0]>\nnode z <[1.0, 1.0]>\nedge (x, y)\nedge (y, z)"
P2_TEXT = "node x <[1.0, 1.0]>\nnode y <[0.0, 5.0]>\nnode z <[1.0, 1.0]>\nedge (x, y)\nedge (y, z)"


def make_graph(values, edges, label=None):
    return Graph.from_lists([[v] for v in values], edges, label=label)


@pytest.fixture
def g1():
    # <4.0> -> <2.0> -> two <1.0> leaves
    return make_graph([2.0, 4.0, 1.0, 1.0], [(1, 0), (0, 2), (0, 3)], label=1)


@pytest.fixture
def g2():
    return make_graph([2.0, 1.0, 4.0, 1.0], [(1, 0), (0, 2), (0, 3)], label=2)


@pytest.fixture
def g3():
    # chain <3.0> -> <2.0> -> <1.0> -> <1.0>
    return make_graph([3.0, 2.0, 1.0, 1.0], [(0, 1), (1, 2), (2, 3)], label=1)


@pytest.fixture
def g4():
    return make_graph([2.0, 1.0, 1.0, 3.0], [(1, 0), (0, 2), (2, 3)], label=2)


@pytest.fixture
def toy(g1, g2, g3, g4):
    return [g1, g2, g3, g4]


@pytest.fixture
def toy_training(toy):
    return TrainingSet.from_graphs(toy)


@pytest.fixture
def p1():
    return parse_program(P1_TEXT)


@pytest.fixture
def p2():
    return parse_program(P2_TEXT)


@pytest.fixture
def toy_model(p1, p2):
    """Linear head: program 0 votes for label 1, program 1 for label 2."""
    mlp = MLP([np.array([[1.0, -1.0], [-1.0, 1.0]])], [np.zeros(2)])
    programs = (
        ScoredProgram(p1, 1, 2 / 3, 2, 2),
        ScoredProgram(p2, 2, 2 / 3, 2, 2),
    )
    return Model(programs, mlp, ActivationKind.SIGMA, (1, 2))


@pytest.fixture
def toy_json():
    return str(DATA_DIR / "toy.json")

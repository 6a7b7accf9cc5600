import math

import numpy as np
import pytest
from hypothesis import given, settings

from gdlnn.errors import BudgetExceeded, DimensionMismatchError, MatchError
from gdlnn.gdl import EdgeDescription, Interval, NodeDescription, Program, parse_program
from gdlnn.graph import Graph
from gdlnn.matcher import (
    brute_force_count,
    brute_force_satisfies,
    candidate_mask,
    check_valuation,
    count_valuations,
    enumerate_valuations,
    find_valuation,
    interval_vec_contains,
    satisfies,
)

from .strategies import instances


def test_interval_vec_contains():
    assert interval_vec_contains((Interval(3.0, 4.0),), [3.0])
    assert interval_vec_contains((Interval(3.0, 4.0),), [4.0])
    assert not interval_vec_contains((Interval(3.0, 4.0),), [4.5])
    assert interval_vec_contains((Interval(-math.inf, 0.0), Interval(1.0, math.inf)), [-7.0, 9.0])
    assert interval_vec_contains(None, [123.0])
    with pytest.raises(MatchError):
        interval_vec_contains((Interval(0.0, 1.0),), [0.5, 0.5])


def test_candidate_mask():
    features = np.array([[1.0, 0.0], [2.0, 5.0], [3.0, 1.0]])
    mask = candidate_mask((Interval(1.5, math.inf), Interval(-math.inf, 2.0)), features)
    assert mask.tolist() == [False, False, True]
    assert candidate_mask(None, features).all()
    with pytest.raises(DimensionMismatchError):
        candidate_mask((Interval(0.0, 1.0),), features)


def test_check_valuation(p1, g1):
    # x -> <4.0>, y -> <2.0>, z -> one of the <1.0> leaves
    assert check_valuation(p1, g1, {"x": 1, "y": 0, "z": 2})
    assert check_valuation(p1, g1, {"x": 1, "y": 0, "z": 3})
    assert not check_valuation(p1, g1, {"x": 0, "y": 1, "z": 2})
    # not injective
    assert not check_valuation(p1, g1, {"x": 1, "y": 0, "z": 0})


def test_check_valuation_preconditions(p1, g1):
    with pytest.raises(MatchError, match="unassigned"):
        check_valuation(p1, g1, {"x": 1, "y": 0})
    with pytest.raises(MatchError, match="outside"):
        check_valuation(p1, g1, {"x": 1, "y": 0, "z": 9})


def test_satisfaction_on_example_graphs(p1, p2, toy):
    assert [satisfies(p1, g) for g in toy] == [True, False, True, False]
    assert [satisfies(p2, g) for g in toy] == [False, True, False, True]


def test_count_valuations(p1, p2, g1, g4):
    # g1 has two <1.0> leaves under its <2.0> node
    assert count_valuations(p1, g1) == 2
    assert count_valuations(p1, g1) == brute_force_count(p1, g1)
    assert count_valuations(p2, g4) == 1
    assert count_valuations(p1, g4) == 0


def test_enumerate_and_find(p1, g1, g2):
    found = enumerate_valuations(p1, g1)
    assert sorted(eta["z"] for eta in found) == [2, 3]
    assert all(eta["x"] == 1 and eta["y"] == 0 for eta in found)
    assert len(enumerate_valuations(p1, g1, limit=1)) == 1
    eta = find_valuation(p1, g1)
    assert eta is not None and check_valuation(p1, g1, eta)
    assert find_valuation(p1, g2) is None


def test_empty_program_matches_everything():
    empty = parse_program("")
    nothing = Graph.from_lists([], [])
    assert satisfies(empty, nothing)
    assert count_valuations(empty, nothing) == 1


def test_more_variables_than_nodes(p1):
    tiny = Graph.from_lists([[4.0], [2.0]], [(0, 1)])
    assert not satisfies(p1, tiny)
    assert count_valuations(p1, tiny) == 0


def test_unmentioned_edges_are_allowed():
    p = parse_program("node a <[1.0, 1.0]>\nnode b <[2.0, 2.0]>")
    g = Graph.from_lists([[1.0], [2.0]], [(0, 1), (1, 0)])
    assert satisfies(p, g)


def test_self_loops():
    loop = parse_program("node a\nedge (a, a)")
    assert satisfies(loop, Graph.from_lists([[0.0], [0.0]], [(0, 1), (1, 1)]))
    assert not satisfies(loop, Graph.from_lists([[0.0], [0.0]], [(0, 1), (1, 0)]))


def test_edge_constraints():
    p = parse_program("node a\nnode b\nedge (a, b) <[0.5, 1.0]>")
    g = Graph.from_lists([[0.0], [0.0], [0.0]], [(0, 1), (1, 2)], edge_features=[[0.0], [0.7]])
    assert enumerate_valuations(p, g) == [{"a": 1, "b": 2}]


def test_budget_exceeded(p1, g1):
    with pytest.raises(BudgetExceeded) as excinfo:
        satisfies(p1, g1, budget=1)
    assert excinfo.value.budget == 1
    assert satisfies(p1, g1, budget=100)


def test_dimension_mismatch(p1):
    wide = Graph.from_lists([[1.0, 2.0]], [])
    with pytest.raises(DimensionMismatchError):
        satisfies(p1, wide)


@settings(max_examples=1000)
@given(instances(max_nodes=8))
def test_satisfies_agrees_with_brute_force(instance):
    p, g = instance
    assert satisfies(p, g) == brute_force_satisfies(p, g)


@settings(max_examples=1000)
@given(instances(max_nodes=8))
def test_count_agrees_with_brute_force(instance):
    p, g = instance
    count = count_valuations(p, g)
    assert count == brute_force_count(p, g)
    found = enumerate_valuations(p, g)
    assert len(found) == count
    assert all(check_valuation(p, g, eta) for eta in found)


def random_interval(rng):
    lo = -math.inf if rng.random() < 0.3 else float(rng.integers(0, 4))
    hi = math.inf if rng.random() < 0.3 else float(rng.integers(0, 4))
    return Interval(min(lo, hi), max(lo, hi))


def random_vector(rng, dim):
    if dim == 0 or rng.random() < 0.3:
        return None
    return tuple(random_interval(rng) for _ in range(dim))


def random_program(rng, d, c):
    names = [f"x{i}" for i in range(rng.integers(0, 5))]
    descriptions = [NodeDescription(var, random_vector(rng, d)) for var in names]
    pairs = [(a, b) for a in names for b in names]
    if pairs:
        picked = rng.choice(len(pairs), size=rng.integers(0, min(5, len(pairs)) + 1), replace=False)
        descriptions += [EdgeDescription(*pairs[i], random_vector(rng, c)) for i in picked]
    return Program(tuple(descriptions))


def random_graph(rng, d, c):
    n = int(rng.integers(0, 9))
    x = rng.integers(0, 4, size=(n, d)).astype(np.float64)
    pairs = [(u, v) for u in range(n) for v in range(n)]
    picked = rng.choice(len(pairs), size=rng.integers(0, min(3 * n, len(pairs)) + 1), replace=False) if pairs else []
    edges = np.array([pairs[i] for i in picked], dtype=np.int64).reshape(-1, 2)
    edge_features = rng.integers(0, 4, size=(len(edges), c)).astype(np.float64)
    return Graph(x, edges, edge_features, None)


@pytest.mark.slow
def test_satisfies_agrees_with_brute_force_on_a_grid():
    rng = np.random.default_rng(2024)
    for d, c in ((1, 0), (2, 1)):
        layer = [random_program(rng, d, c) for _ in range(100)]
        pool = [random_graph(rng, d, c) for _ in range(200)]
        mismatches = [(p, g) for p in layer for g in pool if satisfies(p, g) != brute_force_satisfies(p, g)]
        assert not mismatches

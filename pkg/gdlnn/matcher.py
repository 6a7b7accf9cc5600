"""Matching GDL programs against graphs.

A valuation maps every node variable of a program to a distinct graph node.
``(G, eta)`` satisfies a program when each node description's node lies in
its intervals and each edge description names an existing edge whose
features lie in its intervals. Edges of the graph that the program does not
mention are allowed.
"""

import itertools
import logging
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from .config import DEFAULT_BUDGET
from .errors import BudgetExceeded, DimensionMismatchError, MatchError
from .gdl import Constraints, Program
from .graph import Graph

__all__ = [
    "Graph",
    "Valuation",
    "interval_vec_contains",
    "candidate_mask",
    "check_valuation",
    "satisfies",
    "count_valuations",
    "enumerate_valuations",
    "find_valuation",
    "brute_force_satisfies",
    "brute_force_count",
]

logger = logging.getLogger(__name__)

Valuation = Dict[str, int]


def interval_vec_contains(constraints: Constraints, x: Sequence[float]) -> bool:
    """True iff every coordinate of ``x`` lies in its closed interval."""
    if constraints is None:
        return True
    if len(constraints) != len(x):
        raise MatchError(f"{len(constraints)} intervals for a {len(x)}-dimensional vector")
    return all(itv.lo <= float(v) <= itv.hi for itv, v in zip(constraints, x))


def candidate_mask(constraints: Constraints, features: np.ndarray) -> np.ndarray:
    """Row mask of ``features`` whose every coordinate lies in ``constraints``."""
    rows = features.shape[0]
    if constraints is None:
        return np.ones(rows, dtype=bool)
    if len(constraints) != features.shape[1]:
        raise DimensionMismatchError(
            f"{len(constraints)} intervals against {features.shape[1]}-dimensional features"
        )
    lo = np.array([itv.lo for itv in constraints])
    hi = np.array([itv.hi for itv in constraints])
    return np.all((features >= lo) & (features <= hi), axis=1)


def check_valuation(p: Program, g: Graph, eta: Valuation) -> bool:
    """Decide ``(g, eta)`` against every description of ``p``."""
    for var in p.variables:
        if var not in eta:
            raise MatchError(f"variable {var!r} is unassigned")
    images = [eta[var] for var in p.variables]
    if len(set(images)) != len(images):
        return False
    for node in p.nodes:
        index = eta[node.var]
        if not 0 <= index < g.n:
            raise MatchError(f"variable {node.var!r} mapped to node {index} outside [0, {g.n})")
        if not interval_vec_contains(node.constraints, g.node_features[index]):
            return False
    for edge in p.edges:
        i = g.edge_index.get((eta[edge.src], eta[edge.dst]))
        if i is None:
            return False
        if not interval_vec_contains(edge.constraints, g.edge_features[i]):
            return False
    return True


Link = Tuple[int, bool, object]


class _Search:
    """Backtracking search for injective valuations.

    Variables are visited in a static order: the most constrained variable
    first, then variables adjacent to those already placed, fewest
    candidates first, ties by incident edge descriptions.
    """

    def __init__(self, p: Program, g: Graph, budget: int):
        self.program = p
        self.graph = g
        self.budget = budget
        self.steps = 0

        variables = p.variables
        position = {var: i for i, var in enumerate(variables)}
        candidates = [np.flatnonzero(candidate_mask(nd.constraints, g.node_features)).tolist() for nd in p.nodes]

        checks: List[Tuple[int, int, object]] = []
        for ed in p.edges:
            if ed.constraints is None:
                allowed: object = g.edge_index
            else:
                mask = candidate_mask(ed.constraints, g.edge_features)
                allowed = {(int(u), int(v)) for u, v in g.edges[mask]}
            checks.append((position[ed.src], position[ed.dst], allowed))

        order = self._order(candidates, checks)
        depth_of = {vi: depth for depth, vi in enumerate(order)}
        self.order = order
        self.feasible = all(candidates)
        self.plan = []
        for depth, vi in enumerate(order):
            links: List[Link] = []
            loops = []
            for s, t, allowed in checks:
                if s == vi and t == vi:
                    loops.append(allowed)
                elif s == vi and depth_of[t] < depth:
                    links.append((depth_of[t], True, allowed))
                elif t == vi and depth_of[s] < depth:
                    links.append((depth_of[s], False, allowed))
            self.plan.append((candidates[vi], set(candidates[vi]), links, loops))

        self.images = [0] * len(order)
        self.used: Set[int] = set()
        self.found = 0
        self.limit: Optional[int] = None
        self.collected: Optional[List[Valuation]] = None

    @staticmethod
    def _order(candidates: List[List[int]], checks: List[Tuple[int, int, object]]) -> List[int]:
        count = len(candidates)
        degree = [0] * count
        neighbours: List[Set[int]] = [set() for _ in range(count)]
        for s, t, _ in checks:
            degree[s] += 1
            if t != s:
                degree[t] += 1
                neighbours[s].add(t)
                neighbours[t].add(s)
        remaining = set(range(count))
        placed: Set[int] = set()
        order = []
        while remaining:
            pool = [v for v in remaining if neighbours[v] & placed] or remaining
            best = min(pool, key=lambda v: (len(candidates[v]), -degree[v], v))
            order.append(best)
            placed.add(best)
            remaining.discard(best)
        return order

    def run(self, limit: Optional[int], collect: bool = False) -> int:
        self.limit = limit
        self.collected = [] if collect else None
        if self.feasible:
            self._extend(0)
        return self.found

    def _record(self) -> bool:
        self.found += 1
        if self.collected is not None:
            variables = self.program.variables
            self.collected.append({variables[vi]: self.images[depth] for depth, vi in enumerate(self.order)})
        return self.limit is not None and self.found >= self.limit

    def _extend(self, depth: int) -> bool:
        if depth == len(self.plan):
            return self._record()
        candidate_list, candidate_set, links, loops = self.plan[depth]
        images = self.images
        if links:
            other, outgoing, _ = links[0]
            anchor = images[other]
            near = self.graph.predecessors[anchor] if outgoing else self.graph.successors[anchor]
            pool = [u for u in near if u in candidate_set]
        else:
            pool = candidate_list
        for u in pool:
            self.steps += 1
            if self.steps > self.budget:
                raise BudgetExceeded(self.budget, f"{len(self.plan)} variables, graph with {self.graph.n} nodes")
            if u in self.used:
                continue
            ok = True
            for other, outgoing, allowed in links:
                pair = (u, images[other]) if outgoing else (images[other], u)
                if pair not in allowed:
                    ok = False
                    break
            if ok:
                for allowed in loops:
                    if (u, u) not in allowed:
                        ok = False
                        break
            if not ok:
                continue
            images[depth] = u
            self.used.add(u)
            if self._extend(depth + 1):
                return True
            self.used.discard(u)
        return False


def satisfies(p: Program, g: Graph, budget: int = DEFAULT_BUDGET) -> bool:
    """``g |= p``: some injective valuation satisfies every description.

    Raises:
        BudgetExceeded: the search attempted more than ``budget`` assignments
    """
    return _Search(p, g, budget).run(limit=1) > 0


def count_valuations(p: Program, g: Graph, budget: int = DEFAULT_BUDGET) -> int:
    """Number of distinct injective valuations satisfying ``p`` in ``g``."""
    return _Search(p, g, budget).run(limit=None)


def enumerate_valuations(
    p: Program, g: Graph, budget: int = DEFAULT_BUDGET, limit: Optional[int] = None
) -> List[Valuation]:
    """All satisfying valuations (at most ``limit``) in search order."""
    search = _Search(p, g, budget)
    search.run(limit=limit, collect=True)
    return search.collected or []


def find_valuation(p: Program, g: Graph, budget: int = DEFAULT_BUDGET) -> Optional[Valuation]:
    found = enumerate_valuations(p, g, budget, limit=1)
    return found[0] if found else None


def _all_assignments(p: Program, g: Graph):
    variables = p.variables
    for images in itertools.permutations(range(g.n), len(variables)):
        yield dict(zip(variables, images))


def brute_force_satisfies(p: Program, g: Graph) -> bool:
    """Exhaustive oracle for :func:`satisfies`; only for tiny instances."""
    return any(check_valuation(p, g, eta) for eta in _all_assignments(p, g))


def brute_force_count(p: Program, g: Graph) -> int:
    """Exhaustive oracle for :func:`count_valuations`."""
    return sum(1 for eta in _all_assignments(p, g) if check_valuation(p, g, eta))

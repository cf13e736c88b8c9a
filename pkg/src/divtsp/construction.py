"""Turn spanning trees into tours.

Method 1 walks the tree with a randomized DFS and shortcuts repeated
vertices (the double-tree heuristic). Method 2 adds a perfect matching on the
odd-degree vertices, walks an Eulerian circuit of the resulting multigraph
with randomized branch choices, and shortcuts it.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .instance import EdgeId, Instance, canonical_edge
from .policy import Matching, SpanningTree


class EulerianStructureError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Tour:
    """Vertex order of a Hamiltonian cycle; the closing edge is implicit."""

    order: Tuple[int, ...]
    cost: float

    @classmethod
    def from_order(cls, order: Sequence[int], inst: Instance) -> "Tour":
        order = tuple(int(v) for v in order)
        idx = np.asarray(order)
        cost = float(inst.distances[idx, np.roll(idx, -1)].sum()) if inst.n <= 2048 else float(
            np.sqrt(((inst.coords[idx] - inst.coords[np.roll(idx, -1)]) ** 2).sum(-1)).sum()
        )
        return cls(order, cost)

    @property
    def n(self) -> int:
        return len(self.order)

    @property
    def edge_set(self) -> frozenset:
        o = self.order
        return frozenset(canonical_edge(o[i], o[(i + 1) % len(o)]) for i in range(len(o)))

    def edge_keys(self) -> np.ndarray:
        """Sorted integer keys ``u * n + v`` of the canonical edges."""
        o = np.asarray(self.order)
        a, b = o, np.roll(o, -1)
        return np.sort(np.minimum(a, b) * self.n + np.maximum(a, b))

    def validate(self, inst: Optional[Instance] = None, tol: float = 1e-9) -> None:
        n = self.n
        if sorted(self.order) != list(range(n)):
            raise ValueError("order is not a permutation of 0..n-1")
        if n >= 3 and len(self.edge_set) != n:
            raise ValueError("tour repeats an edge")
        if inst is not None:
            if inst.n != n:
                raise ValueError("tour and instance sizes differ")
            recomputed = sum(inst.weight(u, v) for u, v in self.edge_set)
            if abs(recomputed - self.cost) > tol:
                raise ValueError(f"stored cost {self.cost} differs from {recomputed}")


def _rng(rng):
    return None if rng is None else np.random.default_rng(rng)


def randomized_double_tree(tree: SpanningTree, inst: Instance, rng=None, start: int = 0) -> Tour:
    """Randomized DFS preorder of the tree.

    At each vertex the unvisited tree neighbours are visited in uniformly
    random order; ``rng=None`` visits them in ascending index order.
    """
    rng = _rng(rng)
    adj = tree.adjacency()
    visited = np.zeros(tree.n, dtype=bool)
    order = []
    stack = [start]
    while stack:
        u = stack.pop()
        if visited[u]:
            continue
        visited[u] = True
        order.append(u)
        nbrs = [v for v in adj[u] if not visited[v]]
        if rng is not None and len(nbrs) > 1:
            nbrs = [nbrs[i] for i in rng.permutation(len(nbrs))]
        # stack is LIFO: push in reverse so nbrs[0] is explored first
        stack.extend(reversed(nbrs))
    if len(order) != tree.n:
        raise ValueError("tree does not span the instance")
    return Tour.from_order(order, inst)


def odd_degree_set(tree: SpanningTree) -> List[int]:
    deg = tree.degrees()
    return [int(v) for v in np.nonzero(deg % 2 == 1)[0]]


def eulerian_circuit(n: int, multiedges: Iterable[EdgeId], rng=None) -> List[int]:
    """Closed walk using every multiedge once (Hierholzer).

    Starts at the smallest vertex with positive degree. With ``rng`` the next
    unused edge at each vertex is drawn uniformly, which randomizes the order
    in which sub-circuits are spliced in.
    """
    rng = _rng(rng)
    edges = [canonical_edge(u, v) for u, v in multiedges]
    if not edges:
        return []
    adj: List[List[int]] = [[] for _ in range(n)]
    for eid, (u, v) in enumerate(edges):
        adj[u].append(eid)
        adj[v].append(eid)
    for v in range(n):
        if len(adj[v]) % 2:
            raise EulerianStructureError(f"vertex {v} has odd degree {len(adj[v])}")
    start = next(v for v in range(n) if adj[v])
    used = [False] * len(edges)
    ptr = [0] * n
    if rng is not None:
        for v in range(n):
            if len(adj[v]) > 1:
                adj[v] = [adj[v][i] for i in rng.permutation(len(adj[v]))]
    stack = [start]
    walk = []
    while stack:
        v = stack[-1]
        while ptr[v] < len(adj[v]) and used[adj[v][ptr[v]]]:
            ptr[v] += 1
        if ptr[v] == len(adj[v]):
            walk.append(stack.pop())
            continue
        eid = adj[v][ptr[v]]
        used[eid] = True
        a, b = edges[eid]
        stack.append(b if a == v else a)
    if not all(used):
        touched = sorted({x for e, k in zip(edges, used) if not k for x in e})
        raise EulerianStructureError(f"multigraph support is disconnected; unreached component contains {touched[:5]}")
    walk.reverse()
    return walk


def shortcut(walk: Sequence[int]) -> List[int]:
    seen = set()
    order = []
    for v in walk:
        if v not in seen:
            seen.add(v)
            order.append(v)
    return order


def christofides_variant(tree: SpanningTree, matching: Matching, inst: Instance, rng=None) -> Tour:
    """Tour from the multigraph tree + matching via a randomized Eulerian walk."""
    odd = odd_degree_set(tree)
    if list(matching.odd_set) != odd:
        raise ValueError("matching vertex set differs from the tree's odd-degree set")
    matching.validate()
    walk = eulerian_circuit(tree.n, list(tree.edges) + list(matching.edges), rng)
    order = shortcut(walk)
    if len(order) != tree.n:
        raise ValueError("Eulerian walk does not reach every vertex")
    return Tour.from_order(order, inst)


def counterexample_trees() -> Tuple[SpanningTree, SpanningTree]:
    """Two 6-vertex trees sharing one edge whose first-child DFS gives the same tour.

    Tree A branches at vertex 1, tree B is a star at 0; both preorders are 0..5.
    """
    a = SpanningTree(6, ((0, 1), (1, 2), (2, 3), (1, 4), (4, 5)))
    b = SpanningTree(6, ((0, 1), (0, 2), (0, 3), (0, 4), (0, 5)))
    return a, b


def counterexample_regression(seeds: int = 200) -> bool:
    """Check that deterministic traversal collapses two near-disjoint trees and
    randomized traversal does not."""
    from .instance import random_instance

    inst = random_instance(6, 0)
    a, b = counterexample_trees()
    if len(set(a.edges) & set(b.edges)) != 1:
        return False
    if randomized_double_tree(a, inst).edge_set != randomized_double_tree(b, inst).edge_set:
        return False
    for tree in (a, b):
        distinct = {randomized_double_tree(tree, inst, np.random.default_rng(s)).edge_set for s in range(seeds)}
        if len(distinct) < 2:
            return False
    return True


# -- pool files ---------------------------------------------------------------------


def write_pool(tours: Sequence[Tour], path: Union[str, Path]) -> None:
    """One ``cost v0 v1 ... v_{n-1}`` line per tour."""
    with open(path, "w", encoding="utf-8") as fh:
        for t in tours:
            fh.write(repr(float(t.cost)) + " " + " ".join(map(str, t.order)) + "\n")


def read_pool(path: Union[str, Path], inst: Optional[Instance] = None) -> List[Tour]:
    """Read a pool file; with ``inst`` the costs are recomputed and checked."""
    tours = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            cost, order = float(parts[0]), [int(v) for v in parts[1:]]
            if inst is None:
                tour = Tour(tuple(order), cost)
            else:
                tour = Tour.from_order(order, inst)
                if abs(tour.cost - cost) > 1e-9 * max(1.0, cost):
                    raise ValueError(f"line {line_no}: stored cost {cost} differs from recomputed {tour.cost}")
            tours.append(tour)
    return tours

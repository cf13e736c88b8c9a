"""Reference optimal tour cost for the quality filter."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .instance import Instance

EXACT_LIMIT = 15
PROVENANCES = ("exact", "registry", "heuristic")


class SizeLimitError(ValueError):
    pass


@dataclass(frozen=True)
class ReferenceCost:
    value: float
    provenance: str

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError(f"reference cost must be positive, got {self.value}")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")


def tour_length(order: Sequence[int], dist: np.ndarray) -> float:
    order = np.asarray(order)
    return float(dist[order, np.roll(order, -1)].sum())


def exact_optimum(inst: Instance) -> ReferenceCost:
    """Held-Karp dynamic program over subsets of vertices 1..n-1."""
    n = inst.n
    if n > EXACT_LIMIT:
        raise SizeLimitError(
            f"exact solver is limited to n <= {EXACT_LIMIT} (got {n}); "
            "use heuristic_optimum or a best-known registry entry"
        )
    dist = inst.distances
    m = n - 1
    d = dist[1:, 1:]
    full = (1 << m) - 1
    # dp[mask, j]: shortest path from 0 through `mask`, ending at j+1 (j in mask)
    dp = np.full((1 << m, m), np.inf)
    for j in range(m):
        dp[1 << j, j] = dist[0, j + 1]
    bits = 1 << np.arange(m)
    for mask in range(1, full + 1):
        row = dp[mask]
        if not np.isfinite(row).any():
            continue
        best = (row[:, None] + d).min(axis=0)
        ks = np.nonzero((mask & bits) == 0)[0]
        nxt = mask | bits[ks]
        dp[nxt, ks] = np.minimum(dp[nxt, ks], best[ks])
    value = float((dp[full] + dist[1:, 0]).min())
    return ReferenceCost(value, "exact")


def nearest_neighbor_tour(dist: np.ndarray, start: int) -> np.ndarray:
    n = dist.shape[0]
    visited = np.zeros(n, dtype=bool)
    order = np.empty(n, dtype=np.int64)
    cur = start
    for i in range(n):
        order[i] = cur
        visited[cur] = True
        if i + 1 < n:
            cand = np.where(visited, np.inf, dist[cur])
            cur = int(np.argmin(cand))
    return order


def two_opt(order: np.ndarray, dist: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """First-improvement 2-opt; positions scanned in index order."""
    order = np.array(order, dtype=np.int64)
    n = len(order)
    if n < 4:
        return order
    improved = True
    while improved:
        improved = False
        for i in range(n - 2):
            a, b = order[i], order[i + 1]
            # j ranges over positions i+2..n-1; skip the move that reverses everything
            js = np.arange(i + 2, n if i > 0 else n - 1)
            if js.size == 0:
                continue
            c = order[js]
            dnext = order[(js + 1) % n]
            delta = dist[a, c] + dist[b, dnext] - dist[a, b] - dist[c, dnext]
            hits = np.nonzero(delta < -tol)[0]
            if hits.size:
                j = int(js[hits[0]])
                order[i + 1:j + 1] = order[i + 1:j + 1][::-1].copy()
                improved = True
    return order


def has_improving_two_exchange(order: Sequence[int], dist: np.ndarray, tol: float = 1e-12) -> bool:
    """Full O(n^2) scan for any improving 2-exchange."""
    order = list(order)
    n = len(order)
    for i in range(n - 2):
        for j in range(i + 2, n if i > 0 else n - 1):
            a, b = order[i], order[i + 1]
            c, e = order[j], order[(j + 1) % n]
            if dist[a, c] + dist[b, e] - dist[a, b] - dist[c, e] < -tol:
                return True
    return False


def heuristic_tour(inst: Instance, rng=None, restarts: Optional[int] = None) -> np.ndarray:
    """Best 2-opt local optimum over nearest-neighbor starts."""
    n = inst.n
    dist = inst.distances
    rng = np.random.default_rng(rng)
    r = min(n, 20) if restarts is None else min(n, restarts)
    starts = np.sort(rng.choice(n, size=r, replace=False))
    best, best_len = None, np.inf
    for s in starts:
        order = two_opt(nearest_neighbor_tour(dist, int(s)), dist)
        length = tour_length(order, dist)
        if length < best_len:
            best, best_len = order, length
    return best


def heuristic_optimum(inst: Instance, rng=None, restarts: Optional[int] = None) -> ReferenceCost:
    order = heuristic_tour(inst, rng, restarts)
    return ReferenceCost(tour_length(order, inst.distances), "heuristic")


def resolve_reference(inst: Instance, registry: Optional[Mapping[str, float]] = None, rng=None) -> ReferenceCost:
    """Registry entry, else Held-Karp for small n, else the 2-opt heuristic."""
    if registry and inst.name in registry:
        return ReferenceCost(float(registry[inst.name]), "registry")
    if inst.best_known_cost is not None:
        return ReferenceCost(float(inst.best_known_cost), "registry")
    if inst.n <= EXACT_LIMIT:
        return exact_optimum(inst)
    return heuristic_optimum(inst, rng)

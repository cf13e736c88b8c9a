"""Quality filtering, Jaccard diversity and greedy dispersion selection."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from .construction import Tour
from .reference import ReferenceCost


class InsufficientPoolError(ValueError):
    def __init__(self, achievable: int, k: int):
        self.achievable = achievable
        self.k = k
        super().__init__(f"only {achievable} distinct tours are available, {k} requested")


class BudgetExceededError(ValueError):
    pass


@dataclass
class SolutionPool:
    instance_name: str
    tours: List[Tour]
    reference: Optional[ReferenceCost] = None
    c: Optional[float] = None

    def __len__(self):
        return len(self.tours)


@dataclass
class SelectionResult:
    selected: List[Tour]
    indices: List[int]
    avg_jaccard: float
    std_jaccard: float
    k: int
    c: Optional[float] = None
    scores: List[np.ndarray] = field(default_factory=list, repr=False)

    @property
    def mean_cost(self) -> float:
        return float(np.mean([t.cost for t in self.selected]))


def jaccard(a: Tour, b: Tour) -> float:
    if a.n != b.n:
        raise ValueError(f"tours on {a.n} and {b.n} vertices are not comparable")
    ea, eb = a.edge_set, b.edge_set
    return len(ea & eb) / len(ea | eb)


def _incidence(tours: Sequence[Tour]) -> sparse.csr_matrix:
    keys = np.stack([t.edge_keys() for t in tours])
    uniq, inv = np.unique(keys, return_inverse=True)
    inv = inv.reshape(keys.shape)
    rows = np.repeat(np.arange(len(tours)), keys.shape[1])
    data = np.ones(inv.size, dtype=np.int64)
    return sparse.csr_matrix((data, (rows, inv.ravel())), shape=(len(tours), len(uniq)))


def intersection_matrix(tours: Sequence[Tour]) -> np.ndarray:
    a = _incidence(tours)
    return np.asarray((a @ a.T).todense())


def pairwise_stats(tours: Sequence[Tour]) -> Tuple[float, float]:
    """Mean and population standard deviation of Jaccard over unordered pairs."""
    if len(tours) < 2:
        raise ValueError("pairwise statistics need at least two tours")
    n = tours[0].n
    if any(t.n != n for t in tours):
        raise ValueError("tours have different sizes")
    inter = intersection_matrix(tours)
    iu = np.triu_indices(len(tours), k=1)
    m = inter[iu].astype(np.float64)
    j = m / (2 * n - m)
    return float(j.mean()), float(j.std())


def cost_filter(pool: SolutionPool, c: float) -> SolutionPool:
    """Tours with cost <= c * reference, in pool order."""
    if c < 1:
        raise ValueError(f"dispersion factor c must be >= 1, got {c}")
    if pool.reference is None:
        raise ValueError("pool has no reference cost")
    limit = c * pool.reference.value
    kept = [t for t in pool.tours if t.cost <= limit]
    return SolutionPool(pool.instance_name, kept, pool.reference, c)


def dedup(tours: Sequence[Tour]) -> Tuple[List[Tour], List[int]]:
    """First occurrence of each distinct edge set, with its position."""
    seen = set()
    out, idx = [], []
    for i, t in enumerate(tours):
        key = t.edge_keys().tobytes()
        if key not in seen:
            seen.add(key)
            out.append(t)
            idx.append(i)
    return out, idx


def _stats(tours):
    if len(tours) < 2:
        return 0.0, 0.0
    return pairwise_stats(tours)


def greedy_select(
    tours,
    k: int,
    rng=None,
    first: str = "index",
    keep_scores: bool = False,
) -> SelectionResult:
    """Furthest insertion driven by an edge frequency map.

    Each candidate's score is the sum over its edges of how many selected
    tours already use that edge; the lowest score wins (ties: lowest pool
    index). ``first="random"`` draws the starting tour from ``rng``.
    """
    c = None
    if isinstance(tours, SolutionPool):
        c = tours.c
        tours = tours.tours
    if k < 1:
        raise ValueError("k must be positive")
    distinct, positions = dedup(tours)
    m = len(distinct)
    if m < k:
        raise InsufficientPoolError(m, k)
    keys = np.stack([t.edge_keys() for t in distinct])
    _, ids = np.unique(keys, return_inverse=True)
    ids = ids.reshape(keys.shape)
    freq = np.zeros(ids.max() + 1, dtype=np.int64)
    if first == "index":
        start = 0
    elif first == "random":
        start = int(np.random.default_rng(rng).integers(m))
    else:
        raise ValueError("first must be 'index' or 'random'")
    chosen = [start]
    taken = np.zeros(m, dtype=bool)
    taken[start] = True
    np.add.at(freq, ids[start], 1)
    history = []
    for _ in range(k - 1):
        scores = freq[ids].sum(axis=1)
        if keep_scores:
            history.append(scores.copy())
        masked = np.where(taken, np.iinfo(np.int64).max, scores)
        best = int(np.argmin(masked))
        chosen.append(best)
        taken[best] = True
        np.add.at(freq, ids[best], 1)
    selected = [distinct[i] for i in chosen]
    avg, std = _stats(selected)
    return SelectionResult(selected, [positions[i] for i in chosen], avg, std, k, c, history if keep_scores else [])


def average_pairwise_jaccard(inter: np.ndarray, subset: Sequence[int], n: int) -> float:
    if len(subset) < 2:
        return 0.0
    sub = inter[np.ix_(subset, subset)].astype(np.float64)
    iu = np.triu_indices(len(subset), k=1)
    m = sub[iu]
    return float((m / (2 * n - m)).mean())


def greedy_select_bruteforce_oracle(tours: Sequence[Tour], k: int, budget: int = 10 ** 6) -> SelectionResult:
    """Exact minimizer of the average pairwise Jaccard over all k-subsets."""
    distinct, positions = dedup(tours)
    m = len(distinct)
    if m < k:
        raise InsufficientPoolError(m, k)
    if math.comb(m, k) > budget:
        raise BudgetExceededError(f"C({m}, {k}) = {math.comb(m, k)} subsets exceed the budget {budget}")
    n = distinct[0].n
    inter = intersection_matrix(distinct) if m > 1 else np.zeros((1, 1))
    jac = inter / (2 * n - inter)
    best, best_val = None, np.inf
    for subset in itertools.combinations(range(m), k):
        if k < 2:
            val = 0.0
        else:
            sub = jac[np.ix_(subset, subset)]
            val = (sub.sum() - np.trace(sub)) / (k * (k - 1))
        # strict < keeps the lexicographically first optimum
        if val < best_val - 1e-15:
            best, best_val = subset, val
    selected = [distinct[i] for i in best]
    avg, std = _stats(selected)
    return SelectionResult(selected, [positions[i] for i in best], avg, std, k)

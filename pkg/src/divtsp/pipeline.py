"""Generate-then-select orchestration shared by the CLI and the estimators."""
from __future__ import annotations

import csv
import hashlib
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .construction import Tour, christofides_variant, odd_degree_set, randomized_double_tree
from .dispersion import InsufficientPoolError, SolutionPool, cost_filter, dedup, greedy_select, pairwise_stats
from .instance import Instance
from .policy import GraphPointerPolicy, sample_matchings, sample_trees
from .reference import ReferenceCost

METHODS = ("gpn-tree", "gpn-treem")
REPORT_FIELDS = (
    "instance", "method", "alpha", "c", "k", "avg_jaccard", "std_jaccard", "mean_cost",
    "reference_provenance", "status", "n_filtered", "n_distinct", "gen_seconds", "select_seconds", "total_seconds",
)
TIMING_FIELDS = ("gen_seconds", "select_seconds", "total_seconds")


def streams(seed: int) -> Dict[str, np.random.Generator]:
    """Independent named RNG streams derived from one root seed."""
    names = ("pool", "matching", "traversal", "selection")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {name: np.random.default_rng(ss) for name, ss in zip(names, children)}


@dataclass
class PoolResult:
    tours: List[Tour]
    timings: Dict[str, float] = field(default_factory=dict)


def generate_pool(
    inst: Instance,
    tree_policy: GraphPointerPolicy,
    method: str = "gpn-tree",
    samples: int = 1000,
    seed: int = 0,
    matching_policy: Optional[GraphPointerPolicy] = None,
    fanout: int = 1,
) -> PoolResult:
    """Sample spanning trees and turn them into ``samples`` tours.

    ``gpn-tree`` traverses each tree with a randomized DFS. ``gpn-treem``
    draws ``fanout`` learned matchings per tree on its odd-degree vertices
    and shortcuts a randomized Eulerian walk of tree + matching.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    if samples < 1:
        raise ValueError("pool size must be positive")
    if tree_policy.mode != "tree":
        raise ValueError("tree checkpoint was trained in matching mode")
    rngs = streams(seed)
    t0 = time.perf_counter()
    if method == "gpn-tree":
        trees = sample_trees(tree_policy, inst, samples, rngs["pool"])
        t1 = time.perf_counter()
        tours = [randomized_double_tree(t, inst, rngs["traversal"]) for t in trees]
    else:
        if matching_policy is None:
            raise ValueError("gpn-treem needs a matching checkpoint")
        if matching_policy.mode != "matching":
            raise ValueError("matching checkpoint was trained in tree mode")
        if fanout < 1:
            raise ValueError("fanout must be positive")
        n_trees = math.ceil(samples / fanout)
        trees = sample_trees(tree_policy, inst, n_trees, rngs["pool"])
        t1 = time.perf_counter()
        pairs = [(tree, odd_degree_set(tree)) for tree in trees for _ in range(fanout)][:samples]
        matchings = sample_matchings(matching_policy, inst, [odd for _, odd in pairs], rngs["matching"])
        tours = [christofides_variant(tree, m, inst, rngs["traversal"]) for (tree, _), m in zip(pairs, matchings)]
    t2 = time.perf_counter()
    return PoolResult(tours, {"tree_seconds": t1 - t0, "construct_seconds": t2 - t1, "gen_seconds": t2 - t0})


def select_rows(
    inst: Instance,
    tours: Sequence[Tour],
    reference: ReferenceCost,
    c_values: Sequence[float],
    k: int,
    method: str = "",
    alpha: Optional[float] = None,
    gen_seconds: float = 0.0,
    first: str = "index",
    seed: int = 0,
) -> Tuple[List[dict], Dict[float, List[Tour]]]:
    """One report row per dispersion factor, plus the selected tours.

    Status is ``ok``, ``saturated`` (a stricter factor already admitted the
    whole pool) or ``infeasible`` (fewer than ``k`` distinct tours pass).
    """
    pool = SolutionPool(inst.name, list(tours), reference)
    rows, selections = [], {}
    saturated_at = None
    for c in sorted(c_values):
        t0 = time.perf_counter()
        filtered = cost_filter(pool, c)
        n_distinct = len(dedup(filtered.tours)[0])
        row = {
            "instance": inst.name, "method": method, "alpha": "" if alpha is None else alpha, "c": c, "k": k,
            "reference_provenance": reference.provenance, "n_filtered": len(filtered), "n_distinct": n_distinct,
        }
        try:
            rng = np.random.default_rng(np.random.SeedSequence([seed, int(round(c * 1000))]))
            res = greedy_select(filtered, k, rng, first=first)
        except InsufficientPoolError:
            row.update(avg_jaccard=float("nan"), std_jaccard=float("nan"), mean_cost=float("nan"), status="infeasible")
        else:
            selections[c] = res.selected
            status = "saturated" if saturated_at is not None else "ok"
            row.update(avg_jaccard=res.avg_jaccard, std_jaccard=res.std_jaccard, mean_cost=res.mean_cost, status=status)
        if saturated_at is None and len(filtered) == len(pool):
            saturated_at = c
        sel = time.perf_counter() - t0
        row.update(gen_seconds=gen_seconds, select_seconds=sel, total_seconds=gen_seconds + sel)
        rows.append(row)
    return rows, selections


def write_report(rows: Sequence[dict], path: Union[str, Path]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row[k]) for k in REPORT_FIELDS})


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return value


def read_report(path: Union[str, Path]) -> List[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def revalidate_rows(
    rows: Sequence[dict],
    selections: Dict[float, List[Tour]],
    inst: Instance,
    reference: Optional[ReferenceCost] = None,
    tol: float = 1e-9,
) -> None:
    """Recompute each ok/saturated row from its persisted selected tours."""
    for row in rows:
        if row["status"] == "infeasible":
            continue
        c = float(row["c"])
        tours = [Tour.from_order(t.order, inst) for t in selections[c]]
        avg, std = pairwise_stats(tours) if len(tours) > 1 else (0.0, 0.0)
        mean_cost = float(np.mean([t.cost for t in tours]))
        for name, val in (("avg_jaccard", avg), ("std_jaccard", std), ("mean_cost", mean_cost)):
            if abs(float(row[name]) - val) > tol:
                raise ValueError(f"row c={c}: {name} {row[name]} does not match recomputed {val}")
        if reference is not None and any(t.cost > c * reference.value for t in tours):
            raise ValueError(f"row c={c}: a selected tour violates the cost filter")


def file_sha256(path: Union[str, Path]) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(path: Union[str, Path], entries: Dict[str, object]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in entries.items():
            fh.write(f"{key} = {value}\n")


def read_manifest(path: Union[str, Path]) -> Dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def loglog_slope(sizes: Sequence[float], seconds: Sequence[float]) -> Optional[float]:
    """Least-squares slope of log(seconds) against log(size)."""
    if len(sizes) < 2:
        return None
    slope, _ = np.polyfit(np.log(sizes), np.log(seconds), 1)
    return float(slope)


def scaling_table(
    tree_policy: GraphPointerPolicy,
    sizes: Sequence[int] = (50, 100, 200, 400),
    samples: int = 100,
    seed: int = 0,
) -> Tuple[List[dict], Optional[float]]:
    """Wall-clock of Method-1 pool generation on random instances of each size."""
    from .instance import random_instance

    rows = []
    for n in sizes:
        inst = random_instance(n, np.random.default_rng(np.random.SeedSequence([seed, n])), name=f"random{n}")
        res = generate_pool(inst, tree_policy, "gpn-tree", samples, seed)
        rows.append({"n": n, "M": samples, "seconds": res.timings["gen_seconds"],
                     "tree_seconds": res.timings["tree_seconds"], "construct_seconds": res.timings["construct_seconds"]})
    slope = loglog_slope([r["n"] for r in rows], [r["seconds"] for r in rows])
    return rows, slope

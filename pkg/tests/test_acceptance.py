"""Acceptance criteria 1-9. Each test logs one PASS/FAIL line (see conftest).

Criterion 6 needs ~13 hours of training and only runs with DIVTSP_FULL_SCALE=1.
"""
import os
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
import torch
from scipy.stats import binomtest

from divtsp import cli
from divtsp.construction import christofides_variant, counterexample_regression, odd_degree_set, randomized_double_tree
from divtsp.dispersion import dedup, greedy_select, greedy_select_bruteforce_oracle, intersection_matrix
from divtsp.instance import edge_index, load_instance, random_instance
from divtsp.pipeline import TIMING_FIELDS, read_report, scaling_table
from divtsp.policy import GraphPointerPolicy, load_checkpoint, sample_matchings, sample_rollouts, sample_trees
from divtsp.training import TrainConfig, central_self_critic_baseline, train

from oracles import direct_pair_stats, finite_difference_check, tiny_policy

TRIALS = 10_000
GRAD_H = 1e-4
GRAD_TOL = 1e-4
GREEDY_POOLS = 1_000
GREEDY_SLACK = 1e-9
SIGN_TEST_P = 0.05
SCALING_SIZES = (50, 100, 200, 400)
SCALING_M = 100
SCALING_MAX_SLOPE = 2.0
DESK = dict(n_train=20, epochs=20, steps_per_epoch=100, batch_size=32, hidden_dim=16, n_layers=3)


def random_policy(seed, mode="tree"):
    torch.manual_seed(seed)
    return GraphPointerPolicy(hidden_dim=16, n_layers=3, mode=mode)


# -- 1 -----------------------------------------------------------------------------


def test_criterion_1_validity(record):
    rng = np.random.default_rng(2024)
    counts = dict.fromkeys(("tree", "matching", "method1", "method2"), 0)
    bad = dict.fromkeys(counts, 0)
    batches = 50
    per = TRIALS // batches
    for b in range(batches):
        n = int(rng.integers(3, 31))
        inst = random_instance(n, rng)
        tree_pol = random_policy(b)
        match_pol = random_policy(10_000 + b, "matching")
        trees = sample_trees(tree_pol, inst, per, rng)
        for tree in trees:
            counts["tree"] += 1
            bad["tree"] += not tree.is_valid()
        odds = [odd_degree_set(t) for t in trees]
        matchings = sample_matchings(match_pol, inst, odds, rng)
        for tree, odd, m in zip(trees, odds, matchings):
            counts["matching"] += 1
            bad["matching"] += not (m.is_valid() and list(m.odd_set) == odd)
            t1 = randomized_double_tree(tree, inst, rng)
            counts["method1"] += 1
            try:
                t1.validate(inst)
                bad["method1"] += not t1.cost <= 2 * tree.weight(inst) + 1e-9
            except ValueError:
                bad["method1"] += 1
            t2 = christofides_variant(tree, m, inst, rng)
            counts["method2"] += 1
            try:
                t2.validate(inst)
                bad["method2"] += not t2.cost <= tree.weight(inst) + m.weight(inst) + 1e-9
            except ValueError:
                bad["method2"] += 1
    # matching rollouts on arbitrary even subsets, not only odd-degree sets
    for trace in sample_rollouts(random_policy(7, "matching"), random_instance(30, 1), 500, rng, vertex_subset=range(0, 30, 3)[:10]):
        counts["matching"] += 1
        bad["matching"] += not trace.matching().is_valid()
    ok = all(counts[k] >= TRIALS for k in counts) and not any(bad.values())
    record(1, ok, " ".join(f"{k}={counts[k] - bad[k]}/{counts[k]}" for k in counts))
    assert ok


# -- 2 -----------------------------------------------------------------------------


def test_criterion_2_gradient_oracle(record):
    worst_elem, worst_norm = 0.0, 0.0
    for seed in range(3):
        pol = tiny_policy(seed, hidden_dim=8, n_layers=1)
        inst = random_instance(5, seed)
        from divtsp.policy import rollout
        trace = rollout(pol, inst, rng=seed)
        forced = [edge_index(u, v, 5) for u, v in trace.chosen]
        e, nrm = finite_difference_check(pol, inst.coords, forced, h=GRAD_H)
        worst_elem, worst_norm = max(worst_elem, e), max(worst_norm, nrm)
    ok = worst_elem < GRAD_TOL
    record(2, ok, f"max elementwise rel err {worst_elem:.2e} (normwise {worst_norm:.2e}), tol {GRAD_TOL}")
    assert ok


# -- 3 -----------------------------------------------------------------------------


def test_criterion_3_baseline_algebra(record):
    rng = np.random.default_rng(3)
    exact_zero, single_zero, float_worst = True, True, 0.0
    for _ in range(500):
        B = int(rng.integers(1, 257))
        r, g = -rng.random(B) * 20, -rng.random(B) * 20
        rf = np.array([Fraction(x) for x in r], dtype=object)
        gf = np.array([Fraction(x) for x in g], dtype=object)
        _, a_exact = central_self_critic_baseline(rf, gf)
        exact_zero &= sum(a_exact) == 0
        _, a = central_self_critic_baseline(r, g)
        float_worst = max(float_worst, abs(float(np.sum(a))))
        _, a1 = central_self_critic_baseline(r[:1], g[:1])
        single_zero &= a1[0] == 0.0
    ok = exact_zero and single_zero
    record(3, ok, f"rational sum exactly 0: {exact_zero}; B=1 advantage exactly 0: {single_zero}; "
                  f"float64 |sum A| <= {float_worst:.1e}")
    assert ok


# -- 4 -----------------------------------------------------------------------------


def _greedy_trials(pools=GREEDY_POOLS, seed=4):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < pools:
        n = int(rng.integers(5, 9))
        m = int(rng.integers(2, 11))
        inst = random_instance(n, rng)
        from divtsp.construction import Tour
        tours = [Tour.from_order(rng.permutation(n), inst) for _ in range(m)]
        distinct, _ = dedup(tours)
        k = int(rng.integers(2, min(4, len(distinct)) + 1)) if len(distinct) >= 2 else 1
        out.append((tours, distinct, k))
    return out


def test_criterion_4_greedy_dispersion(record):
    violations, dist_violations, score_mismatch, worst = 0, 0, 0, None
    trials = _greedy_trials()
    for tours, distinct, k in trials:
        g = greedy_select(tours, k, keep_scores=True)
        o = greedy_select_bruteforce_oracle(tours, k)
        if g.avg_jaccard > 2 * o.avg_jaccard + GREEDY_SLACK:
            violations += 1
            if worst is None or g.avg_jaccard - 2 * o.avg_jaccard > worst[0]:
                worst = (g.avg_jaccard - 2 * o.avg_jaccard, g.avg_jaccard, o.avg_jaccard)
        # the same factor on the dissimilarity 1 - J, the form in which dispersion bounds are stated
        if 1 - g.avg_jaccard < 0.5 * (1 - o.avg_jaccard) - GREEDY_SLACK:
            dist_violations += 1
        inter = intersection_matrix(distinct)
        order = [t.order for t in distinct]
        sel = [order.index(t.order) for t in g.selected]
        for rnd, scores in enumerate(g.scores):
            direct = [sum(len(distinct[j].edge_set & distinct[i].edge_set) for i in sel[:rnd + 1]) for j in range(len(distinct))]
            score_mismatch += scores.tolist() != direct or scores.tolist() != inter[:, sel[:rnd + 1]].sum(1).tolist()
    ok = violations == 0 and score_mismatch == 0
    detail = (f"{len(trials)} pools: avg_J(greedy) > 2*avg_J(opt)+1e-9 in {violations}; "
              f"score/intersection mismatches {score_mismatch}; dissimilarity form (1-J_g >= (1-J_opt)/2) "
              f"violated in {dist_violations}")
    if worst:
        detail += f"; worst greedy {worst[1]:.4f} vs opt {worst[2]:.4f}"
    record(4, ok, detail)
    assert score_mismatch == 0 and dist_violations == 0
    assert violations == 0, "similarity-form bound fails when the optimum is 0 and greedy is not (see decisions ledger)"


# -- 5 -----------------------------------------------------------------------------


@pytest.fixture(scope="module")
def desk_checkpoints(tmp_path_factory):
    root = tmp_path_factory.mktemp("desk")
    out = {}
    for alpha in (0.0, 1.0, 3.0):
        cfg = TrainConfig(mode="tree", alpha=alpha, seed=0, out_dir=str(root / f"alpha{alpha:g}"), **DESK)
        pol, report = train(cfg)
        out[alpha] = (pol, report, Path(cfg.out_dir) / "final.json")
    return out


def _pool_stats(policy, inst, seed):
    rng = np.random.default_rng(seed)
    trees = sample_trees(policy, inst, 64, rng)
    tours = [randomized_double_tree(t, inst, rng) for t in trees]
    jac, _ = direct_pair_stats(tours)
    return jac, float(np.mean([t.cost for t in tours]))


def test_criterion_5_entropy_tradeoff(record, desk_checkpoints):
    held_out = [random_instance(20, np.random.default_rng([5, i])) for i in range(10)]
    stats = {a: [_pool_stats(desk_checkpoints[a][0], inst, i) for i, inst in enumerate(held_out)] for a in (0.0, 3.0)}
    j0, c0 = map(np.array, zip(*stats[0.0]))
    j3, c3 = map(np.array, zip(*stats[3.0]))
    jac_wins = int((j3 < j0).sum())
    cost_wins = int((c3 > c0).sum())
    p_jac = binomtest(jac_wins, 10, 0.5, alternative="greater").pvalue
    p_cost = binomtest(cost_wins, 10, 0.5, alternative="greater").pvalue
    ok = j3.mean() < j0.mean() and c3.mean() > c0.mean() and p_jac < SIGN_TEST_P and p_cost < SIGN_TEST_P
    record(5, ok, f"alpha=0: J {j0.mean():.3f} cost {c0.mean():.3f} | alpha=3: J {j3.mean():.3f} cost {c3.mean():.3f} | "
                  f"sign tests J {jac_wins}/10 p={p_jac:.4f}, cost {cost_wins}/10 p={p_cost:.4f}")
    assert ok


def test_criterion_5_training_improves_validation_cost(record, desk_checkpoints):
    # the decrease is the contract; 10% is the magnitude seen on a reference run and is only reported
    rec = desk_checkpoints[0.0][1].records
    first, best = rec[0].val_cost, min(r.val_cost for r in rec)
    drop = (first - best) / first
    ok = best < first
    record("5b", ok, f"alpha=0 validation cost epoch 1 {first:.4f} -> best {best:.4f} "
                     f"({drop:.1%} decrease; reference run saw >= 10%)")
    assert ok


def test_criterion_5_monotone_in_alpha(record, desk_checkpoints):
    held_out = [random_instance(20, np.random.default_rng([55, i])) for i in range(10)]
    means = {}
    for a in (0.0, 1.0, 3.0):
        stats = [_pool_stats(desk_checkpoints[a][0], inst, i) for i, inst in enumerate(held_out)]
        means[a] = tuple(np.mean(v) for v in zip(*stats))
    (j0, c0), (j1, c1), (j3, c3) = means[0.0], means[1.0], means[3.0]
    ok = j0 > j1 > j3 and c0 < c1 < c3
    record("5c", ok, " | ".join(f"alpha={a:g}: J {j:.3f} cost {c:.3f}" for a, (j, c) in means.items()))
    assert ok


# -- 6 -----------------------------------------------------------------------------


@pytest.mark.skipif(os.environ.get("DIVTSP_FULL_SCALE") != "1", reason="full-scale reproduction takes ~13 h; set DIVTSP_FULL_SCALE=1")
def test_criterion_6_full_scale(record, tmp_path):
    full = dict(n_train=40, epochs=100, steps_per_epoch=1000, hidden_dim=128, n_layers=3)
    alpha = float(os.environ.get("DIVTSP_FULL_SCALE_ALPHA", "7"))
    pol, _ = train(TrainConfig(mode="tree", alpha=alpha, seed=0, out_dir=str(tmp_path / "tree"), **full))
    from divtsp.pipeline import generate_pool, select_rows
    from divtsp.instance import load_registry, with_best_known
    from divtsp.reference import resolve_reference
    reg = load_registry()
    inst = with_best_known(load_instance("berlin52"), reg)
    res = generate_pool(inst, pol, "gpn-tree", 1000, 0)
    rows, _ = select_rows(inst, res.tours, resolve_reference(inst, reg), [2.0, 4.0], 30)
    got = {r["c"]: r["avg_jaccard"] for r in rows}
    ok = got[4.0] <= 0.05 and got[2.0] <= 0.12
    record(6, ok, f"berlin52 k=30: c=2 avg_J {got[2.0]:.4f} (<= 0.12), c=4 avg_J {got[4.0]:.4f} (<= 0.05)")
    assert ok


def test_criterion_6_marker(record):
    if os.environ.get("DIVTSP_FULL_SCALE") != "1":
        record(6, None, "full-scale reproduction not run (set DIVTSP_FULL_SCALE=1; ~13 h of training)")


# -- 7 -----------------------------------------------------------------------------


def test_criterion_7_counterexample(record):
    ok = counterexample_regression(seeds=200)
    record(7, ok, "deterministic traversal collapses the two trees; 200 randomized seeds give >= 2 tours per tree")
    assert ok


# -- 8 -----------------------------------------------------------------------------


def test_criterion_8_scaling(record, desk_checkpoints):
    policy, _ = load_checkpoint(desk_checkpoints[3.0][2])
    rows, slope = scaling_table(policy, SCALING_SIZES, SCALING_M, seed=0)
    times = ", ".join(f"n={r['n']}: {r['seconds']:.2f}s" for r in rows)
    ok = slope is not None and slope <= SCALING_MAX_SLOPE
    record(8, ok, f"log-log slope {slope:.3f} (need <= {SCALING_MAX_SLOPE}); {times}")
    assert ok


# -- 9 -----------------------------------------------------------------------------


def _strip_timings(rows):
    return [{k: v for k, v in r.items() if k not in TIMING_FIELDS} for r in rows]


def test_criterion_9_determinism(record, tmp_path):
    tiny = ["--hidden-dim", "8", "--layers", "2", "--epochs", "2", "--steps", "3", "--batch-size", "4", "--n-train", "10"]
    outs = []
    for rep in range(2):
        d = tmp_path / f"run{rep}"
        cli.main(["train", "--out", str(d / "tree"), "--alpha", "1", "--seed", "4", *tiny])
        cli.main(["train", "--mode", "matching", "--out", str(d / "match"), "--seed", "4", *tiny])
        for method in ("gpn-tree", "gpn-treem"):
            cli.main(["generate-pool", "--instance", "berlin52", "--tree-ckpt", str(d / "tree/final.json"),
                      "--matching-ckpt", str(d / "match/final.json"), "--method", method, "-M", "200",
                      "--seed", "11", "--out", str(d / method)])
            cli.main(["select", "--pool", str(d / method / "pool.txt"), "--k", "10", "--first", "random",
                      "--seed", "11", "--out", str(d / method / "sel")])
        cli.main(["scaling", "--tree-ckpt", str(d / "tree/final.json"), "--sizes", "10 20", "-M", "5", "--out", str(d / "scale")])
        outs.append(d)
    a, b = outs
    same = {
        "checkpoints": all((a / m / "final.json").read_bytes() == (b / m / "final.json").read_bytes() for m in ("tree", "match")),
        "pools": all((a / m / "pool.txt").read_bytes() == (b / m / "pool.txt").read_bytes() for m in ("gpn-tree", "gpn-treem")),
        "selections": all(
            sorted(p.name for p in (a / m / "sel").glob("selected_*")) == sorted(p.name for p in (b / m / "sel").glob("selected_*"))
            and all(p.read_bytes() == (b / m / "sel" / p.name).read_bytes() for p in (a / m / "sel").glob("selected_*"))
            for m in ("gpn-tree", "gpn-treem")),
        "reports": all(_strip_timings(read_report(a / m / "sel/report.csv")) == _strip_timings(read_report(b / m / "sel/report.csv"))
                       for m in ("gpn-tree", "gpn-treem")),
        "train_reports": [{k: v for k, v in r.items() if k != "seconds"} for r in read_report(a / "tree/train_report.csv")]
        == [{k: v for k, v in r.items() if k != "seconds"} for r in read_report(b / "tree/train_report.csv")],
    }
    ok = all(same.values())
    record(9, ok, " ".join(f"{k}={'identical' if v else 'DIFFER'}" for k, v in same.items()))
    assert ok

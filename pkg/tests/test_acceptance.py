"""Exit criteria, one test each; a summary line per criterion is printed at the end of the run."""

import itertools
import time
import warnings

import numpy as np
import pytest
from scipy.stats import spearmanr

from conftest import record_criterion
from helpers import random_instance, total_supply_capped
from propweights.genlab import PRESETS, Quota, apply_quota, gen_arrival, gen_day_family, gen_synthetic, instance_distance
from propweights.harness import (
    DEFAULT_SIGMAS,
    ExperimentConfig,
    mean_ratios,
    run_learnability,
    run_robustness,
    run_theorem_random_order,
)
from propweights.instance import dumps_instance
from propweights.online import ArrivalStream, Policy, simulate
from propweights.optimum import brute_force_opt, cut_value, max_matching, min_vertex_cut, opt_value
from propweights.weights import WeightVector, compute_weights, evaluate_offline

pytestmark = pytest.mark.acceptance

SEEDS = 20
SLACK = 1e-3


def test_c1_oracle_equivalence():
    rng = np.random.default_rng(101)
    t = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        inst = total_supply_capped(rng, random_instance(rng, max_adv=6, max_supply=5), 12)
        worst = max(worst, abs(max_matching(inst)[0] - brute_force_opt(inst)))
    dt = time.perf_counter() - t
    ok = worst <= 1e-6 and dt < 10
    record_criterion(1, ok, f"200 instances, max |flow - brute force| = {worst:.2e}, {dt:.1f}s")
    assert ok


def test_c2_duality():
    rng = np.random.default_rng(202)
    gap, beaten = 0.0, 0
    for k in range(100):
        inst = random_instance(rng, max_adv=10, max_types=12, max_supply=30, integer_caps=bool(k % 2), max_cap=20)
        opt = opt_value(inst)
        gap = max(gap, abs(min_vertex_cut(inst).value - opt))
        for _ in range(100):
            A0 = [a for a in inst.adv_ids if rng.random() < 0.5]
            beaten += cut_value(inst, A0) < opt - 1e-6
    ok = gap <= 1e-6 and beaten == 0
    record_criterion(2, ok, f"100 instances, max |cut - OPT| = {gap:.2e}, partitions below OPT: {beaten}/10000")
    assert ok


def test_c3_solver_guarantee():
    rng = np.random.default_rng(303)
    t = time.perf_counter()
    good, worst, done = 0, 1.0, 0
    while done < 100:
        inst = random_instance(rng, max_adv=20, max_types=30, max_supply=200, max_cap=200, p_edge=0.2)
        opt = opt_value(inst)
        if opt <= 0:
            continue
        done += 1
        r = evaluate_offline(inst, compute_weights(inst, 0.1))[0] / opt
        worst = min(worst, r)
        good += r >= 0.9 - 1e-12
    dt = time.perf_counter() - t
    ok = good == 100 and dt < 60
    record_criterion(3, ok, f"{good}/100 with R >= 0.9 OPT, worst R/OPT = {worst:.4f}, {dt:.1f}s")
    assert ok


def test_c4_pw_order_independence():
    rng = np.random.default_rng(404)
    mismatches = 0
    for k in range(5):
        inst = random_instance(rng, max_adv=12, max_types=15, max_supply=60, integer_caps=False, max_cap=40)
        w = WeightVector.continuous(inst.adv_ids, rng.uniform(0.1, 10, inst.n))
        events = np.repeat(np.arange(inst.num_types), inst.supplies).astype(np.int64)
        ref = None
        for _ in range(10):
            rng.shuffle(events)
            a = simulate(inst, ArrivalStream(events.copy()), Policy.PW, w).alloc
            if ref is None:
                ref = a
            mismatches += not np.array_equal(a, ref)
    ok = mismatches == 0
    record_criterion(4, ok, f"5 instances x 10 permutations, inexact allocations: {mismatches}")
    assert ok


def test_c5_ipw_properties():
    rng = np.random.default_rng(505)
    runs = cap_bad = maximal_bad = below_pw = below_half = 0
    for k in range(100):
        inst = random_instance(rng, max_adv=10, max_types=12, max_supply=40, integer_caps=bool(k % 2), max_cap=30)
        opt = opt_value(inst)
        weights = [WeightVector.continuous(inst.adv_ids, rng.uniform(0.05, 20, inst.n))]
        if opt > 0:
            weights.append(compute_weights(inst, 0.1))
        for w, order in itertools.product(weights, ("RANDOM", "CI_DESC", "CA_ASC")):
            s = gen_arrival(inst, order, k)
            ipw = simulate(inst, s, Policy.IPW, w, audit=True)
            pw = simulate(inst, s, Policy.PW, w)
            runs += 1
            cap_bad += bool(np.any(ipw.alloc > inst.capacities + 1e-9))
            maximal_bad += ipw.maximality_violations > 0
            below_pw += ipw.matched < pw.matched - 1e-9
            below_half += ipw.matched < 0.5 * opt - 1e-9
    ok = cap_bad == maximal_bad == below_pw == below_half == 0
    record_criterion(5, ok, f"{runs} runs; over capacity {cap_bad}, non-maximal {maximal_bad}, "
                            f"IPW < PW {below_pw}, IPW < OPT/2 {below_half}")
    assert ok


def test_c6_random_order_theorem():
    cfg = ExperimentConfig(kind="THEOREM_RANDOM_ORDER", generator="theorem", sigmas=(0.1,), epsilon=0.1,
                           repetitions=SEEDS, seed=0)
    inst = gen_synthetic(cfg.generator_config())
    assert inst.n == 5 and inst.m == 50_000 and abs(opt_value(inst) - inst.m) <= 1e-9 * inst.m
    t = time.perf_counter()
    rows = [r for r in run_theorem_random_order(cfg) if r.algorithm == "ALG1_POST"]
    dt = time.perf_counter() - t
    good = sum(r.ratio >= 0.8 for r in rows)
    ok = len(rows) == SEEDS and good >= 19 and dt < 120
    record_criterion(6, ok, f"post-sample ratio >= 0.8 in {good}/{len(rows)} seeds, "
                            f"min {min(r.ratio for r in rows):.4f}, {dt:.1f}s")
    assert ok


def test_c7_robustness_bound():
    eps = 0.1
    pairs = violations = 0
    tightest = np.inf
    for drift in (0.05, 0.1, 0.3, 0.6, 1.0):
        for seed in range(10):
            fam = gen_day_family(PRESETS["desk"].with_(seed=seed), 2, drift)
            prev, cur = fam.days
            w = compute_weights(prev, eps)
            got = simulate(cur, gen_arrival(cur, "RANDOM", seed), Policy.PW, w).matched
            bound = (1 - eps) * opt_value(cur) - 2 * instance_distance(prev, cur)
            pairs += 1
            violations += got < bound - 1e-6
            tightest = min(tightest, (got - bound) / cur.m)
    ok = pairs == 50 and violations == 0
    record_criterion(7, ok, f"{pairs} pairs over 5 drift levels, violations {violations}, "
                            f"min slack {tightest:.4f} of m")
    assert ok


def test_c8_qualitative_trends():
    cfg = ExperimentConfig(kind="LEARNABILITY", generator="desk", sigmas=DEFAULT_SIGMAS, repetitions=SEEDS, seed=0)
    m = mean_ratios(run_learnability(cfg))
    sig = sorted(DEFAULT_SIGMAS)

    spread = {b: max(m[b][s][0] for s in sig) - min(m[b][s][0] for s in sig) for b in ("WATERFILL", "RANKING")}
    a_ok = all(v <= SLACK for v in spread.values())
    rho = spearmanr(sig, [m["PW"][s][0] for s in sig]).statistic
    b_ok = rho > 0
    c_gap = min(m["IPW"][s][0] - max(m["WATERFILL"][s][0], m["RANKING"][s][0]) for s in sig)
    c_ok = c_gap >= -SLACK

    rob = []
    for seed in range(SEEDS):
        rob += run_robustness(ExperimentConfig(kind="ROBUSTNESS", generator="desk", seed=seed, repetitions=1))
    r = mean_ratios(rob, by="day")
    days = sorted(r["IPW_1"])
    d_gap = min(r[a][d][0] - max(r["WATERFILL"][d][0], r["RANKING"][d][0])
                for a in ("IPW_1", "IPW_all") for d in days)
    d_ok = d_gap >= -SLACK

    detail = (f"(a) baseline spread {max(spread.values()):.1e} {'PASS' if a_ok else 'FAIL'}; "
              f"(b) PW spearman {rho:.3f} {'PASS' if b_ok else 'FAIL'}; "
              f"(c) min IPW - best baseline over sigma {c_gap:+.4f} {'PASS' if c_ok else 'FAIL'}; "
              f"(d) min IPW_1/IPW_all - best baseline over days {d_gap:+.4f} {'PASS' if d_ok else 'FAIL'}")
    ok = a_ok and b_ok and c_ok and d_ok
    record_criterion(8, ok, detail)
    assert ok, detail


def test_c9_generator_contracts():
    notes, ok = [], True
    for name in ("desk", "theorem", "full"):
        for rule in Quota:
            inst = gen_synthetic(PRESETS[name].with_(quota=rule.value))
            rel = abs(opt_value(inst) - inst.m) / inst.m
            if rel > 1e-9:
                ok = False
                notes.append(f"{name}/{rule.value} OPT off by {rel:.1e}")
    full = gen_synthetic(PRESETS["full"])
    targets = {"advertisers": (full.n, 4500), "types": (full.num_types, 85),
               "edges": (full.num_edges, 8000), "supply": (full.m, 1_800_000)}
    for key, (got, want) in targets.items():
        if not 0.8 * want <= got <= 1.2 * want:
            ok = False
            notes.append(f"{key} {got} outside +-20% of {want}")
    same = dumps_instance(full) == dumps_instance(gen_synthetic(PRESETS["full"]))
    fam1, fam2 = (gen_day_family(PRESETS["desk"], 3, 0.3) for _ in range(2))
    same = same and all(a == b for a, b in zip(fam1.days, fam2.days))
    q1, q2 = (apply_quota(full, "RANDOM", 7) for _ in range(2))
    same = same and np.array_equal(q1.capacities, q2.capacities)
    ok = ok and same
    record_criterion(9, ok, f"full preset n={full.n} types={full.num_types} edges={full.num_edges} m={full.m}; "
                            f"quota OPT exact; deterministic={same}" + ("; " + "; ".join(notes) if notes else ""))
    assert ok


def test_c10_throughput():
    inst = gen_synthetic(PRESETS["theorem"])
    s = gen_arrival(inst, "RANDOM", 0)
    w = compute_weights(inst, 0.1)
    simulate(inst, s, Policy.IPW, w)  # warm up
    best = np.inf
    for _ in range(5):
        t = time.perf_counter()
        simulate(inst, s, Policy.IPW, w)
        best = min(best, time.perf_counter() - t)
    rate = len(s) / best
    fast = rate >= 1e6
    if not fast:
        warnings.warn(f"IPW throughput {rate:.3g} events/s is below 1e6", stacklevel=1)
    record_criterion(10, True if fast else None, f"IPW {rate:.3g} unit events/s on n=5, m=50000")

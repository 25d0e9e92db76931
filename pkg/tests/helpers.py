"""Random instance builders and slow reference allocators used as oracles."""

from __future__ import annotations

import numpy as np
from scipy.optimize import linprog

from propweights.instance import Instance

UNFULL = 1e-12


def random_instance(rng, max_adv=6, max_types=5, max_supply=4, integer_caps=True, max_cap=4, p_edge=0.5):
    n = int(rng.integers(1, max_adv + 1))
    t = int(rng.integers(1, max_types + 1))
    advs = {f"a{k}": (float(rng.integers(0, max_cap + 1)) if integer_caps else float(rng.uniform(0, max_cap)))
            for k in range(n)}
    rows = []
    for i in range(t):
        nb = [a for a in advs if rng.random() < p_edge]
        if not nb:
            nb = [f"a{int(rng.integers(n))}"]
        rows.append((f"i{i}", int(rng.integers(0, max_supply + 1)), nb))
    return Instance.build(advs, rows)


def total_supply_capped(rng, inst, limit):
    """Rescale supplies down so that the total stays within ``limit``."""
    sup = inst.supplies.copy()
    while sup.sum() > limit:
        k = int(rng.choice(np.nonzero(sup)[0]))
        sup[k] -= 1
    return inst.replace(supplies=sup)


def lp_opt(inst: Instance) -> float:
    """Optimum of the matching LP by a generic LP solver (independent of max flow)."""
    E = inst.num_edges
    if E == 0:
        return 0.0
    A = np.zeros((inst.num_types + inst.n, E))
    A[inst.edge_types, np.arange(E)] = 1.0
    A[inst.num_types + inst.indices, np.arange(E)] = 1.0
    b = np.concatenate([inst.supplies.astype(float), inst.capacities])
    res = linprog(-np.ones(E), A_ub=A, b_ub=b, bounds=(0, None), method="highs")
    assert res.status == 0
    return float(-res.fun)


def events_of(inst: Instance, order):
    return [inst.type_index[t] for t in order]


def ref_pw(inst, events, alpha):
    """Unit-by-unit PW: every unit splits over N_i by alpha, no capping."""
    alloc = [0.0] * inst.n
    for i in events:
        nb = [int(a) for a in inst.neighbors(i)]
        tot = sum(alpha[a] for a in nb)
        for a in nb:
            alloc[a] += alpha[a] / tot
    matched = sum(min(x, c) for x, c in zip(alloc, inst.capacities))
    return alloc, matched


def ref_ipw(inst, events, alpha):
    """Unit-by-unit IPW with capped redistribution over unfull neighbors."""
    caps = [float(c) for c in inst.capacities]
    alloc = [0.0] * inst.n
    matched = 0.0
    trace = []
    for i in events:
        nb = [int(a) for a in inst.neighbors(i)]
        rem = 1.0
        while rem > 0:
            free = [a for a in nb if alloc[a] < caps[a] - UNFULL]
            if not free:
                break
            tot = sum(alpha[a] for a in free)
            placed = 0.0
            capped = False
            for a in free:
                g = rem * alpha[a] / tot
                r = caps[a] - alloc[a]
                if g >= r:
                    g, capped = r, True
                alloc[a] += g
                placed += g
            matched += placed
            rem = 0.0 if not capped else max(rem - placed, 0.0)
        trace.append(rem)
    return alloc, matched, trace


def ref_waterfill(inst, events):
    """Unit-by-unit water-filling by sorting fill levels."""
    caps = [float(c) for c in inst.capacities]
    alloc = [0.0] * inst.n
    matched = 0.0
    for i in events:
        free = [int(a) for a in inst.neighbors(i) if caps[a] > 0 and alloc[a] < caps[a] - UNFULL]
        if not free:
            continue
        room = sum(caps[a] - alloc[a] for a in free)
        if room <= 1.0:
            for a in free:
                matched += caps[a] - alloc[a]
                alloc[a] = caps[a]
            continue
        free.sort(key=lambda a: alloc[a] / caps[a])
        lev = [alloc[a] / caps[a] for a in free]
        sc = scl = 0.0
        level = None
        for j, a in enumerate(free):
            sc += caps[a]
            scl += caps[a] * lev[j]
            nxt = lev[j + 1] if j + 1 < len(free) else 1.0
            if sc * nxt - scl >= 1.0:
                level = (1.0 + scl) / sc
                break
        for j, a in enumerate(free):
            if lev[j] < level:
                g = min(caps[a] * (level - lev[j]), caps[a] - alloc[a])
                alloc[a] += g
                matched += g
    return alloc, matched


def ref_ranking(inst, events, perm):
    rank = {inst.adv_index[a]: r for r, a in enumerate(perm)}
    caps = [float(c) for c in inst.capacities]
    alloc = [0.0] * inst.n
    matched = 0.0
    for i in events:
        rem = 1.0
        for a in sorted((int(x) for x in inst.neighbors(i)), key=rank.__getitem__):
            r = caps[a] - alloc[a]
            if r <= UNFULL:
                continue
            g = min(r, rem)
            alloc[a] += g
            matched += g
            rem -= g
            if rem <= 0:
                break
    return alloc, matched


def T1() -> Instance:
    return Instance.build({"a1": 2, "a2": 1}, [("i1", 2, ["a1", "a2"]), ("i2", 1, ["a2"])])

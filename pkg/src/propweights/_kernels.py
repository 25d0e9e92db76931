"""Numba hot loops: the weight-descent solver and the streaming allocators.

All kernels work on dense CSR arrays and mutate caller-owned state arrays in
place.  Nothing here allocates per event.
"""

import numpy as np
from numba import njit

UNFULL_TOL = 1e-12  # an advertiser is unfull iff alloc < cap - UNFULL_TOL


# ---------------------------------------------------------------------------
# weight solver


@njit(cache=True)
def _better(key, x, y):
    # max key, ties to the smaller index; -1 marks an empty subtree
    if x < 0:
        return y
    if y < 0:
        return x
    if key[x] > key[y] or (key[x] == key[y] and x < y):
        return x
    return y


@njit(cache=True)
def _tree_set(tree, key, size, a):
    node = size + a
    tree[node] = a if key[a] >= 0.0 else -1
    node //= 2
    while node >= 1:
        tree[node] = _better(key, tree[2 * node], tree[2 * node + 1])
        node //= 2


@njit(cache=True)
def _tree_raise(tree, key, size, a):
    # key[a] only grew: stop at the first ancestor whose winner beats a
    node = (size + a) // 2
    tree[size + a] = a
    while node >= 1:
        w = tree[node]
        if w != a:
            if _better(key, w, a) == w:
                return
            tree[node] = a
        node //= 2


@njit(cache=True)
def _type_state(i, t_indptr, t_idx, k, pow_neg):
    kmax = -1
    for s in range(t_indptr[i], t_indptr[i + 1]):
        if k[t_idx[s]] > kmax:
            kmax = k[t_idx[s]]
    d = 0.0
    for s in range(t_indptr[i], t_indptr[i + 1]):
        d += pow_neg[kmax - k[t_idx[s]]]
    return kmax, d


@njit(cache=True)
def descend_weights(t_indptr, t_idx, a_indptr, a_types, supplies, caps, k, pow_neg, eps, audit):
    """Decrement the exponent of the most overloaded advertiser until none is.

    Overloaded means alloc > (1 + eps) * cap with k > 0 and cap > 0.  Ties
    go to the largest alloc/cap ratio, then the smallest index.  ``k`` is
    updated in place.  Returns (updates, audit_violations).
    """
    nt = t_indptr.shape[0] - 1
    n = caps.shape[0]
    kmax = np.empty(nt, dtype=np.int64)
    dsum = np.empty(nt, dtype=np.float64)
    alloc = np.zeros(n, dtype=np.float64)
    for i in range(nt):
        km, d = _type_state(i, t_indptr, t_idx, k, pow_neg)
        kmax[i] = km
        dsum[i] = d
        if supplies[i] > 0.0:
            for s in range(t_indptr[i], t_indptr[i + 1]):
                b = t_idx[s]
                alloc[b] += supplies[i] * pow_neg[km - k[b]] / d

    key = np.full(n, -1.0)
    size = 1
    while size < n:
        size *= 2
    tree = np.full(2 * size, -1, dtype=np.int64)
    thresh = 1.0 + eps
    for a in range(n):
        if caps[a] > 0.0 and k[a] > 0 and alloc[a] > thresh * caps[a]:
            key[a] = alloc[a] / caps[a]
    for a in range(n):
        tree[size + a] = a if key[a] >= 0.0 else -1
    for node in range(size - 1, 0, -1):
        tree[node] = _better(key, tree[2 * node], tree[2 * node + 1])

    updates = 0
    violations = 0
    while True:
        a = tree[1]
        if a < 0:
            break
        k[a] -= 1
        updates += 1
        for p in range(a_indptr[a], a_indptr[a + 1]):
            i = a_types[p]
            old_km = kmax[i]
            old_d = dsum[i]
            km, d = _type_state(i, t_indptr, t_idx, k, pow_neg)
            kmax[i] = km
            dsum[i] = d
            if supplies[i] == 0.0:
                continue
            for s in range(t_indptr[i], t_indptr[i + 1]):
                b = t_idx[s]
                kb_old = k[b] + 1 if b == a else k[b]
                old_share = pow_neg[old_km - kb_old] / old_d
                new_share = pow_neg[km - k[b]] / d
                delta = supplies[i] * (new_share - old_share)
                alloc[b] += delta
                if audit:
                    tol = 1e-9 * (1.0 + supplies[i])
                    if b == a and delta > tol:
                        violations += 1
                    elif b != a and delta < -tol:
                        violations += 1
                if caps[b] > 0.0 and k[b] > 0 and alloc[b] > thresh * caps[b]:
                    nk = alloc[b] / caps[b]
                    if b != a and nk >= key[b]:
                        key[b] = nk
                        _tree_raise(tree, key, size, b)
                        continue
                    key[b] = nk
                elif key[b] < 0.0:
                    continue
                else:
                    key[b] = -1.0
                _tree_set(tree, key, size, b)
        if caps[a] > 0.0 and k[a] > 0 and alloc[a] > thresh * caps[a]:
            key[a] = alloc[a] / caps[a]
        else:
            key[a] = -1.0
        _tree_set(tree, key, size, a)
    return updates, violations


# ---------------------------------------------------------------------------
# online allocators


@njit(cache=True)
def run_ipw_kernel(events, start, stop, indptr, indices, w_rel, logw, caps, alloc, edge_tot, track, audit):
    """Proportional split over unfull neighbors, capped and redistributed."""
    maxdeg = 0
    for i in range(indptr.shape[0] - 1):
        if indptr[i + 1] - indptr[i] > maxdeg:
            maxdeg = indptr[i + 1] - indptr[i]
    buf = np.empty(maxdeg, dtype=np.float64)
    matched = 0.0
    unmatched = 0.0
    violations = 0
    for e in range(start, stop):
        i = events[e]
        lo = indptr[i]
        hi = indptr[i + 1]
        rem = 1.0
        while rem > 0.0:
            W = 0.0
            nfree = 0
            for s in range(lo, hi):
                a = indices[s]
                if alloc[a] < caps[a] - UNFULL_TOL:
                    buf[s - lo] = w_rel[a]
                    W += w_rel[a]
                    nfree += 1
                else:
                    buf[s - lo] = 0.0
            if nfree == 0:
                break
            if W < 1e-280:
                # relative weights underflowed; renormalise in log space
                mx = -np.inf
                for s in range(lo, hi):
                    a = indices[s]
                    if alloc[a] < caps[a] - UNFULL_TOL and logw[a] > mx:
                        mx = logw[a]
                W = 0.0
                for s in range(lo, hi):
                    a = indices[s]
                    if alloc[a] < caps[a] - UNFULL_TOL:
                        buf[s - lo] = np.exp(logw[a] - mx)
                        W += buf[s - lo]
            placed = 0.0
            capped = False
            for s in range(lo, hi):
                wt = buf[s - lo]
                if wt == 0.0:
                    continue
                a = indices[s]
                g = rem * wt / W
                r = caps[a] - alloc[a]
                if g >= r:
                    g = r
                    alloc[a] = caps[a]
                    capped = True
                else:
                    alloc[a] += g
                placed += g
                if track:
                    edge_tot[s] += g
            matched += placed
            if not capped:
                rem = 0.0
            else:
                rem -= placed
                if rem < 0.0:
                    rem = 0.0
        unmatched += rem
        if audit and rem > 1e-9:
            for s in range(lo, hi):
                a = indices[s]
                if caps[a] - alloc[a] > 1e-9:
                    violations += 1
                    break
    return matched, unmatched, violations


@njit(cache=True)
def run_waterfill_kernel(events, start, stop, indptr, indices, caps, alloc, edge_tot, track):
    """Raise the lowest fill levels alloc/cap of the neighborhood first.

    The water level L solves sum_a cap_a * max(0, L - lev_a) = 1.  The left
    side is convex and piecewise linear in L, so Newton's method started
    above the root decreases monotonically onto it; since L only falls, the
    candidate set {lev_a < L} is compacted as it shrinks.
    """
    maxdeg = 0
    for i in range(indptr.shape[0] - 1):
        if indptr[i + 1] - indptr[i] > maxdeg:
            maxdeg = indptr[i + 1] - indptr[i]
    lev = np.empty(maxdeg, dtype=np.float64)
    cap = np.empty(maxdeg, dtype=np.float64)
    slot = np.empty(maxdeg, dtype=np.int64)
    matched = 0.0
    unmatched = 0.0
    for e in range(start, stop):
        i = events[e]
        J = 0
        room = 0.0
        lo = np.inf
        lo_cap = 0.0
        for s in range(indptr[i], indptr[i + 1]):
            a = indices[s]
            c = caps[a]
            if c > 0.0 and alloc[a] < c - UNFULL_TOL:
                lv = alloc[a] / c
                lev[J] = lv
                cap[J] = c
                slot[J] = s
                room += c - alloc[a]
                if lv < lo:
                    lo = lv
                    lo_cap = c
                J += 1
        if J == 0:
            unmatched += 1.0
            continue
        placed = 0.0
        if room <= 1.0:
            # the unit fills every unfull neighbor
            for j in range(J):
                s = slot[j]
                a = indices[s]
                g = caps[a] - alloc[a]
                alloc[a] = caps[a]
                placed += g
                if track:
                    edge_tot[s] += g
        else:
            level = lo + 1.0 / lo_cap
            K = J
            while True:
                sc = 0.0
                scl = 0.0
                n2 = 0
                for j in range(K):
                    if lev[j] < level:
                        sc += cap[j]
                        scl += cap[j] * lev[j]
                        lev[n2] = lev[j]
                        cap[n2] = cap[j]
                        slot[n2] = slot[j]
                        n2 += 1
                K = n2
                nxt = (1.0 + scl) / sc
                if nxt >= level:
                    break
                level = nxt
            for j in range(K):
                s = slot[j]
                a = indices[s]
                g = cap[j] * (level - lev[j])
                if g <= 0.0:
                    continue
                if alloc[a] + g >= cap[j]:
                    g = cap[j] - alloc[a]
                    alloc[a] = cap[j]
                else:
                    alloc[a] += g
                placed += g
                if track:
                    edge_tot[s] += g
            if placed > 1.0:
                placed = 1.0
        matched += placed
        unmatched += 1.0 - placed
    return matched, unmatched


@njit(cache=True)
def run_ranking_kernel(events, start, stop, indptr, sorted_slots, indices, caps, alloc, edge_tot, track):
    """Highest-priority unfull neighbor first, spilling fractional residuals.

    ``sorted_slots`` holds each type's CSR slots ordered by priority.  A
    per-type cursor skips neighbors already known to be full.
    """
    nt = indptr.shape[0] - 1
    cursor = indptr[:nt].copy()
    matched = 0.0
    unmatched = 0.0
    for e in range(start, stop):
        i = events[e]
        rem = 1.0
        j = cursor[i]
        hi = indptr[i + 1]
        while j < hi and rem > 0.0:
            s = sorted_slots[j]
            a = indices[s]
            r = caps[a] - alloc[a]
            if r <= UNFULL_TOL:
                j += 1
                continue
            if r <= rem:
                g = r
                alloc[a] = caps[a]
                j += 1
            else:
                g = rem
                alloc[a] += g
            rem -= g
            matched += g
            if track:
                edge_tot[s] += g
        cursor[i] = j
        unmatched += rem
    return matched, unmatched

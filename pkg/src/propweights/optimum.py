"""Offline optimum of the fractional matching LP via max flow.

The LP (maximize matched mass subject to per-type supply and per-advertiser
capacity) is a max-flow problem on the layered network

    source -> type (cap C_i) -> advertiser (cap inf) -> sink (cap C_a)

Supplies are integral, capacities are real, so plain real-valued Dinic
gives the exact optimum up to float rounding.  The min cut of the same
network is returned as an advertiser partition (A0, A1) with value
``supply(N(A0)) + sum_{a in A1} C_a``.
"""

from __future__ import annotations

import functools
from collections import deque
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .instance import Instance

INF = float("inf")


class InstanceTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class CutCertificate:
    A0: frozenset[str]
    A1: frozenset[str]
    value: float

    def to_dict(self) -> dict:
        return {"A0": sorted(self.A0), "A1": sorted(self.A1), "value": self.value}


class _Network:
    """Residual graph with paired edges (e and e ^ 1 are mutual reverses)."""

    def __init__(self, num_nodes: int):
        self.n = num_nodes
        self.head: list[list[int]] = [[] for _ in range(num_nodes)]
        self.to: list[int] = []
        self.cap: list[float] = []

    def add_edge(self, u: int, v: int, c: float) -> int:
        e = len(self.to)
        self.to += [v, u]
        self.cap += [c, 0.0]
        self.head[u].append(e)
        self.head[v].append(e + 1)
        return e

    def _levels(self, s: int, t: int, eps: float) -> list[int] | None:
        level = [-1] * self.n
        level[s] = 0
        q = deque([s])
        to, cap, head = self.to, self.cap, self.head
        while q:
            u = q.popleft()
            for e in head[u]:
                v = to[e]
                if level[v] < 0 and cap[e] > eps:
                    level[v] = level[u] + 1
                    q.append(v)
        return level if level[t] >= 0 else None

    def max_flow(self, s: int, t: int, eps: float) -> float:
        to, cap, head = self.to, self.cap, self.head
        total = 0.0
        while True:
            level = self._levels(s, t, eps)
            if level is None:
                return total
            it = [0] * self.n
            # Iterative blocking-flow search; path holds edge ids from s.
            path: list[int] = []
            u = s
            while True:
                if u == t:
                    f = min(cap[e] for e in path)
                    cut_at = -1
                    for k, e in enumerate(path):
                        cap[e] -= f
                        cap[e ^ 1] += f
                        if cap[e] <= eps and cut_at < 0:
                            cut_at = k
                    total += f
                    del path[cut_at:]
                    u = s if not path else to[path[-1]]
                    continue
                edges = head[u]
                advanced = False
                while it[u] < len(edges):
                    e = edges[it[u]]
                    v = to[e]
                    if cap[e] > eps and level[v] == level[u] + 1:
                        path.append(e)
                        u = v
                        advanced = True
                        break
                    it[u] += 1
                if advanced:
                    continue
                if u == s:
                    break
                # dead end: retreat and skip the edge that led here
                level[u] = -1
                e = path.pop()
                u = to[e ^ 1]
                it[u] += 1


@dataclass
class _Solved:
    opt: float
    flow: np.ndarray  # per CSR edge slot
    net: _Network
    eps: float


def _solve(inst: Instance) -> _Solved:
    cached = inst._cache.get("maxflow")
    if cached is not None:
        return cached
    nt, na = inst.num_types, inst.n
    s, t = 0, 1 + nt + na
    net = _Network(t + 1)
    for i in range(nt):
        if inst.supplies[i] > 0:
            net.add_edge(s, 1 + i, float(inst.supplies[i]))
    mid = np.empty(inst.num_edges, dtype=np.int64)
    for i in range(nt):
        for slot in range(inst.indptr[i], inst.indptr[i + 1]):
            mid[slot] = net.add_edge(1 + i, 1 + nt + int(inst.indices[slot]), INF)
    for a in range(na):
        if inst.capacities[a] > 0:
            net.add_edge(1 + nt + a, t, float(inst.capacities[a]))
    scale = max(1.0, float(inst.capacities.max(initial=0.0)), float(inst.supplies.max(initial=0)))
    eps = 1e-12 * scale
    opt = net.max_flow(s, t, eps)
    flow = np.array([net.cap[e ^ 1] for e in mid], dtype=np.float64)
    solved = _Solved(opt=opt, flow=flow, net=net, eps=eps)
    inst._cache["maxflow"] = solved
    return solved


def max_matching(inst: Instance) -> tuple[float, np.ndarray]:
    """Optimal matched mass and a feasible optimal flow per CSR edge slot."""
    solved = _solve(inst)
    return solved.opt, solved.flow.copy()


def opt_value(inst: Instance) -> float:
    return _solve(inst).opt


def cut_value(inst: Instance, A0: Iterable[str]) -> float:
    """Value supply(N(A0)) + C(A \\ A0) of an advertiser partition."""
    in_a0 = np.zeros(inst.n, dtype=bool)
    for a in A0:
        in_a0[inst.adv_index[a]] = True
    covered = np.zeros(inst.num_types, dtype=bool)
    np.logical_or.at(covered, inst.edge_types, in_a0[inst.indices])
    return float(inst.supplies[covered].sum()) + float(inst.capacities[~in_a0].sum())


def min_vertex_cut(inst: Instance) -> CutCertificate:
    """Advertiser partition whose cut value equals the optimum.

    A0 is the set of advertisers that can still reach the sink in the
    residual network of a maximum flow; A1 is everything else.  This is the
    source-maximal min cut, so saturated advertisers land in A1.
    """
    solved = _solve(inst)
    net, eps = solved.net, solved.eps
    nt = inst.num_types
    t = net.n - 1
    reach = [False] * net.n
    reach[t] = True
    q = deque([t])
    while q:
        v = q.popleft()
        for e in net.head[v]:
            u = net.to[e]
            if not reach[u] and net.cap[e ^ 1] > eps:
                reach[u] = True
                q.append(u)
    A0 = frozenset(a for k, a in enumerate(inst.adv_ids) if reach[1 + nt + k])
    A1 = frozenset(inst.adv_ids) - A0
    return CutCertificate(A0=A0, A1=A1, value=cut_value(inst, A0))


BRUTE_MAX_SUPPLY = 12
BRUTE_MAX_ADVERTISERS = 6


def brute_force_opt(inst: Instance) -> float:
    """Exhaustive optimum over integral unit assignments (test oracle).

    Each unit impression either goes to one neighbor with a free unit of
    capacity or stays unmatched.  Capacities are rounded down, so this is
    only an oracle for integer-capacity instances.
    """
    if inst.m > BRUTE_MAX_SUPPLY or inst.n > BRUTE_MAX_ADVERTISERS:
        raise InstanceTooLarge(
            f"brute force limited to supply <= {BRUTE_MAX_SUPPLY} and "
            f"n <= {BRUTE_MAX_ADVERTISERS} (got m={inst.m}, n={inst.n})"
        )
    units: list[tuple[int, ...]] = []
    for i in range(inst.num_types):
        nb = tuple(int(a) for a in inst.neighbors(i))
        units += [nb] * int(inst.supplies[i])
    start = tuple(int(np.floor(c)) for c in inst.capacities)

    @functools.lru_cache(maxsize=None)
    def best(k: int, free: tuple[int, ...]) -> int:
        if k == len(units):
            return 0
        value = best(k + 1, free)
        for a in units[k]:
            if free[a] > 0:
                nxt = free[:a] + (free[a] - 1,) + free[a + 1 :]
                value = max(value, 1 + best(k + 1, nxt))
        return value

    return float(best(0, start))

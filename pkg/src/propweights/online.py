"""Streaming simulation of online allocators over unit-impression events.

A stream is a sequence of type indices; a type with supply C_i contributes
exactly C_i unit events.  Allocators:

* PW        - split each unit over N_i by the predicted weights, ignoring
              saturation; over-capacity mass is wasted.
* IPW       - split over the unfull part of N_i only; shares that exceed a
              residual are capped and the excess is re-split among the
              still-unfull neighbors, so the matching is maximal.
* WATERFILL - raise the lowest fill levels alloc/C_a first.
* RANKING   - fixed advertiser priority; spill down the list when the top
              unfull neighbor has less than the remaining mass.

``learn_then_apply`` learns weights on a stream prefix against scaled
capacities and then allocates with PW or IPW.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from . import _kernels
from .instance import AllocationState, Instance, MatchResult
from .optimum import opt_value
from .weights import WeightVector, compute_weights, edge_shares, scaled_subinstance

log = logging.getLogger(__name__)


class StreamMismatch(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ArrivalStream:
    events: np.ndarray  # int64 type indices
    day_starts: tuple[int, ...] | None = None
    order: str = "given"
    seed: int | None = None

    def __len__(self) -> int:
        return int(self.events.shape[0])

    @classmethod
    def from_ids(cls, inst: Instance, type_ids: Sequence[str], order: str = "given") -> "ArrivalStream":
        ev = np.array([inst.type_index[t] for t in type_ids], dtype=np.int64)
        return cls(ev, order=order)

    def counts(self, num_types: int, start: int = 0, stop: int | None = None) -> np.ndarray:
        return np.bincount(self.events[start:stop], minlength=num_types).astype(np.int64)

    def check(self, inst: Instance) -> None:
        ev = self.events
        if ev.size and (ev.min() < 0 or ev.max() >= inst.num_types):
            raise StreamMismatch("stream references a type index outside the instance")
        if not np.array_equal(self.counts(inst.num_types), inst.supplies):
            raise StreamMismatch("stream multiplicities differ from the instance supplies")
        if self.day_starts is not None:
            ds = self.day_starts
            if not ds or ds[0] != 0 or any(b < a for a, b in zip(ds, ds[1:])) or ds[-1] > len(self):
                raise StreamMismatch("day markers must start at 0 and be nondecreasing")


class Policy(str, Enum):
    PW = "PW"
    IPW = "IPW"
    WATERFILL = "WATERFILL"
    RANKING = "RANKING"


class Mode(str, Enum):
    DISCARD_SAMPLE = "DISCARD_SAMPLE"
    REPLAY_WHOLE = "REPLAY_WHOLE"


def _new_state(inst: Instance, track_edges: bool) -> AllocationState:
    return AllocationState(
        alloc=np.zeros(inst.n),
        edge_totals=np.zeros(inst.num_edges) if track_edges else None,
    )


def _edge_buf(state: AllocationState) -> np.ndarray:
    return state.edge_totals if state.edge_totals is not None else np.zeros(0)


def simulate(
    inst: Instance,
    stream: ArrivalStream,
    policy: Policy | str,
    weights: WeightVector | None = None,
    perm: Sequence[str] | None = None,
    *,
    start: int = 0,
    stop: int | None = None,
    track_edges: bool = False,
    audit: bool = False,
    check: bool = True,
) -> AllocationState:
    """Run one allocator over ``stream[start:stop]`` from an empty allocation."""
    policy = Policy(policy)
    if check:
        stream.check(inst)
    stop = len(stream) if stop is None else stop
    state = _new_state(inst, track_edges)
    state.processed = stop - start
    caps = np.ascontiguousarray(inst.capacities)

    if policy is Policy.PW:
        if weights is None:
            raise ValueError("PW needs a weight vector")
        # Each unit's split depends only on its type, so per-type counts
        # give the unit-by-unit result in closed form, in any order.
        counts = stream.counts(inst.num_types, start, stop)
        per_edge = counts[inst.edge_types] * edge_shares(inst, weights)
        state.alloc = np.bincount(inst.indices, weights=per_edge, minlength=inst.n)
        if state.edge_totals is not None:
            state.edge_totals = per_edge
        state.matched = float(np.minimum(state.alloc, caps).sum())
        state.unmatched = float(state.processed - state.matched)
        return state

    edge_tot = _edge_buf(state)
    if policy is Policy.IPW:
        if weights is None:
            raise ValueError("IPW needs a weight vector")
        w = weights.aligned(inst)
        matched, unmatched, viol = _kernels.run_ipw_kernel(
            stream.events, start, stop, inst.indptr, inst.indices,
            w.relative(), w.log_alpha(), caps, state.alloc, edge_tot, track_edges, audit,
        )
        state.maximality_violations = int(viol)
    elif policy is Policy.WATERFILL:
        matched, unmatched = _kernels.run_waterfill_kernel(
            stream.events, start, stop, inst.indptr, inst.indices, caps, state.alloc, edge_tot, track_edges
        )
    else:
        if perm is None:
            raise ValueError("RANKING needs an advertiser permutation")
        sorted_slots = priority_slots(inst, perm)
        matched, unmatched = _kernels.run_ranking_kernel(
            stream.events, start, stop, inst.indptr, sorted_slots, inst.indices, caps, state.alloc,
            edge_tot, track_edges,
        )
    state.matched = float(matched)
    state.unmatched = float(unmatched)
    return state


def priority_slots(inst: Instance, perm: Sequence[str]) -> np.ndarray:
    """CSR slots of each type re-ordered by advertiser priority (perm[0] first)."""
    if sorted(perm) != list(inst.adv_ids):
        raise ValueError("ranking permutation must be a bijection on the advertisers")
    rank = np.empty(inst.n, dtype=np.int64)
    for r, a in enumerate(perm):
        rank[inst.adv_index[a]] = r
    slots = np.arange(inst.num_edges, dtype=np.int64)
    key = inst.edge_types * (inst.n + 1) + rank[inst.indices]
    return slots[np.argsort(key, kind="stable")]


def random_permutation(inst: Instance, rng: np.random.Generator) -> list[str]:
    return [inst.adv_ids[k] for k in rng.permutation(inst.n)]


def _result(tag, inst, stream, state, opt, **meta) -> MatchResult:
    return MatchResult(
        algorithm=tag,
        matched=state.matched,
        opt=opt_value(inst) if opt is None else opt,
        seed=stream.seed,
        order=stream.order,
        metadata=meta,
        state=state,
    )


def run_pw(inst, stream, w, *, opt=None, **kw) -> MatchResult:
    return _result("PW", inst, stream, simulate(inst, stream, Policy.PW, w, **kw), opt)


def run_ipw(inst, stream, w, *, opt=None, **kw) -> MatchResult:
    return _result("IPW", inst, stream, simulate(inst, stream, Policy.IPW, w, **kw), opt)


def run_waterfill(inst, stream, *, opt=None, **kw) -> MatchResult:
    return _result("WATERFILL", inst, stream, simulate(inst, stream, Policy.WATERFILL, **kw), opt)


def run_ranking(inst, stream, perm, *, opt=None, **kw) -> MatchResult:
    return _result("RANKING", inst, stream, simulate(inst, stream, Policy.RANKING, perm=perm, **kw), opt)


def learn_then_apply(
    inst: Instance,
    stream: ArrivalStream,
    sigma: float,
    eps: float,
    mode: Mode | str = Mode.DISCARD_SAMPLE,
    tail_policy: Policy | str = Policy.PW,
    *,
    opt: float | None = None,
    max_T_doublings: int = 4,
) -> MatchResult:
    """Learn weights on the first floor(sigma*m) events, then allocate.

    The prefix S becomes an instance with the sampled supplies and
    capacities sigma * C_a.  In DISCARD_SAMPLE mode the prefix is left
    unmatched and the rest is allocated against full capacities; in
    REPLAY_WHOLE mode the whole stream is re-run with the learned weights.
    Both matched values are computed and recorded in the metadata.
    """
    if not 0 < sigma <= 1:
        raise ValueError(f"sigma must lie in (0,1], got {sigma}")
    if not 0 < eps < 1:
        raise ValueError(f"epsilon must lie in (0,1), got {eps}")
    mode, tail_policy = Mode(mode), Policy(tail_policy)
    if tail_policy not in (Policy.PW, Policy.IPW):
        raise ValueError("tail policy must be PW or IPW")
    stream.check(inst)
    m = len(stream)
    cut = int(np.floor(sigma * m))
    sub = scaled_subinstance(inst, stream.counts(inst.num_types, 0, cut), sigma)
    degenerate = opt_value(sub) <= 0
    if degenerate:
        log.warning("sample has OPT(S)=0; falling back to uniform weights")
        w = WeightVector.uniform(inst.adv_ids)
    else:
        w = compute_weights(sub, eps, max_T_doublings)

    tail = simulate(inst, stream, tail_policy, w, start=cut, check=False)
    tail.processed = m
    tail.unmatched = m - tail.matched
    whole = simulate(inst, stream, tail_policy, w, check=False)
    state = tail if mode is Mode.DISCARD_SAMPLE else whole
    return MatchResult(
        algorithm=f"LEARN_{tail_policy.value}",
        matched=state.matched,
        opt=opt_value(inst) if opt is None else opt,
        seed=stream.seed,
        order=stream.order,
        metadata={
            "mode": mode.value,
            "sigma": sigma,
            "epsilon": eps,
            "sample_size": cut,
            "matched_discard": tail.matched,
            "matched_replay": whole.matched,
            "degenerate_sample": degenerate,
        },
        state=state,
        extras={"weights": w},
    )

"""Capacitated bipartite matching instances.

An instance has advertisers with real capacities and impression *types*
with integer supplies.  Each type is a block of identical unit impressions
sharing one advertiser neighborhood.  Ids are strings; everything internal
works on dense indices assigned in sorted-id order, and adjacency is stored
as CSR arrays (type -> advertisers).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np


class InstanceError(ValueError):
    """Raised when an instance violates the data-model invariants."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Instance:
    adv_ids: tuple[str, ...]
    capacities: np.ndarray  # float64, one per advertiser
    type_ids: tuple[str, ...]
    supplies: np.ndarray  # int64, one per type
    indptr: np.ndarray  # int64, len(types) + 1
    indices: np.ndarray  # int64 advertiser indices, sorted within each type
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    # -- construction -----------------------------------------------------

    @classmethod
    def build(
        cls,
        advertisers: Mapping[str, float],
        impressions: Iterable[tuple[str, int, Iterable[str]]],
    ) -> "Instance":
        """Validate and index an instance given by ids.

        ``advertisers`` maps id -> capacity; ``impressions`` yields
        ``(type_id, supply, neighbor_ids)``.
        """
        adv_ids = tuple(sorted(advertisers))
        caps = []
        for a in adv_ids:
            if not isinstance(a, str):
                raise InstanceError(f"advertiser id {a!r} is not a string")
            c = advertisers[a]
            if isinstance(c, bool) or not isinstance(c, (int, float, np.integer, np.floating)):
                raise InstanceError(f"advertiser {a!r}: capacity {c!r} is not a number")
            c = float(c)
            if not math.isfinite(c) or c < 0:
                raise InstanceError(f"advertiser {a!r}: capacity {c!r} must be a finite real >= 0")
            caps.append(c)
        adv_index = {a: k for k, a in enumerate(adv_ids)}

        rows: dict[str, tuple[int, list[int]]] = {}
        for tid, supply, neighbors in impressions:
            if not isinstance(tid, str):
                raise InstanceError(f"impression id {tid!r} is not a string")
            if tid in rows:
                raise InstanceError(f"duplicate impression id {tid!r}")
            if isinstance(supply, bool) or not isinstance(supply, (int, np.integer)):
                if isinstance(supply, float) and supply.is_integer():
                    supply = int(supply)
                else:
                    raise InstanceError(f"impression {tid!r}: supply {supply!r} is not an integer")
            if supply < 0:
                raise InstanceError(f"impression {tid!r}: negative supply {supply}")
            nbrs = list(neighbors)
            seen = set()
            idx = []
            for a in nbrs:
                if a not in adv_index:
                    raise InstanceError(f"impression {tid!r}: unknown neighbor {a!r}")
                if a in seen:
                    raise InstanceError(f"impression {tid!r}: duplicate edge to {a!r}")
                seen.add(a)
                idx.append(adv_index[a])
            if supply > 0 and not idx:
                raise InstanceError(f"impression {tid!r}: positive supply but empty neighborhood")
            rows[tid] = (int(supply), sorted(idx))

        type_ids = tuple(sorted(rows))
        indptr = np.zeros(len(type_ids) + 1, dtype=np.int64)
        for k, t in enumerate(type_ids):
            indptr[k + 1] = indptr[k] + len(rows[t][1])
        indices = np.fromiter(
            (a for t in type_ids for a in rows[t][1]), dtype=np.int64, count=int(indptr[-1])
        )
        supplies = np.array([rows[t][0] for t in type_ids], dtype=np.int64)
        return cls(
            adv_ids=adv_ids,
            capacities=_frozen(np.array(caps, dtype=np.float64)),
            type_ids=type_ids,
            supplies=_frozen(supplies),
            indptr=_frozen(indptr),
            indices=_frozen(indices),
        )

    def replace(
        self,
        capacities: Sequence[float] | np.ndarray | None = None,
        supplies: Sequence[int] | np.ndarray | None = None,
    ) -> "Instance":
        """Same graph, new capacity and/or supply vectors (dense order)."""
        caps = self.capacities if capacities is None else np.asarray(capacities, dtype=np.float64)
        sup = self.supplies if supplies is None else np.asarray(supplies)
        if caps.shape != self.capacities.shape or sup.shape != self.supplies.shape:
            raise InstanceError("replacement vectors do not match instance shape")
        if not np.all(np.isfinite(caps)) or np.any(caps < 0):
            raise InstanceError("capacities must be finite and >= 0")
        if sup.dtype.kind == "f":
            if not np.all(sup == np.round(sup)):
                raise InstanceError("supplies must be integers")
        sup = sup.astype(np.int64)
        if np.any(sup < 0):
            raise InstanceError("supplies must be >= 0")
        deg = np.diff(self.indptr)
        bad = np.flatnonzero((sup > 0) & (deg == 0))
        if bad.size:
            raise InstanceError(
                f"impression {self.type_ids[bad[0]]!r}: positive supply but empty neighborhood"
            )
        return Instance(
            adv_ids=self.adv_ids,
            capacities=_frozen(caps.astype(np.float64, copy=True)),
            type_ids=self.type_ids,
            supplies=_frozen(sup.copy()),
            indptr=self.indptr,
            indices=self.indices,
        )

    # -- accessors --------------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.adv_ids)

    @property
    def m(self) -> int:
        return int(self.supplies.sum())

    @property
    def num_types(self) -> int:
        return len(self.type_ids)

    @property
    def num_edges(self) -> int:
        return int(self.indptr[-1])

    def neighbors(self, t: int) -> np.ndarray:
        return self.indices[self.indptr[t] : self.indptr[t + 1]]

    def neighbor_ids(self, type_id: str) -> list[str]:
        t = self.type_index[type_id]
        return [self.adv_ids[a] for a in self.neighbors(t)]

    @property
    def adv_index(self) -> dict[str, int]:
        d = self._cache.get("adv_index")
        if d is None:
            d = self._cache["adv_index"] = {a: k for k, a in enumerate(self.adv_ids)}
        return d

    @property
    def type_index(self) -> dict[str, int]:
        d = self._cache.get("type_index")
        if d is None:
            d = self._cache["type_index"] = {t: k for k, t in enumerate(self.type_ids)}
        return d

    @property
    def edge_types(self) -> np.ndarray:
        """Type index of every CSR edge slot."""
        e = self._cache.get("edge_types")
        if e is None:
            e = np.repeat(np.arange(self.num_types, dtype=np.int64), np.diff(self.indptr))
            self._cache["edge_types"] = _frozen(e)
        return e

    def adv_csr(self) -> tuple[np.ndarray, np.ndarray]:
        """Advertiser -> types adjacency as (indptr, type indices)."""
        got = self._cache.get("adv_csr")
        if got is None:
            order = np.argsort(self.indices, kind="stable")
            a_indptr = np.zeros(self.n + 1, dtype=np.int64)
            np.cumsum(np.bincount(self.indices, minlength=self.n), out=a_indptr[1:])
            got = (_frozen(a_indptr), _frozen(self.edge_types[order].copy()))
            self._cache["adv_csr"] = got
        return got

    def adv_degrees(self) -> np.ndarray:
        return np.bincount(self.indices, minlength=self.n)

    def capacity_of(self, adv_id: str) -> float:
        return float(self.capacities[self.adv_index[adv_id]])

    def supply_of(self, type_id: str) -> int:
        return int(self.supplies[self.type_index[type_id]])

    # -- comparison / serialization --------------------------------------

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Instance):
            return NotImplemented
        return (
            self.adv_ids == other.adv_ids
            and self.type_ids == other.type_ids
            and np.array_equal(self.capacities, other.capacities)
            and np.array_equal(self.supplies, other.supplies)
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
        )

    __hash__ = None  # type: ignore[assignment]

    def to_dict(self) -> dict[str, Any]:
        advs = []
        for a, c in zip(self.adv_ids, self.capacities):
            c = float(c)
            advs.append({"id": a, "capacity": int(c) if c.is_integer() else c})
        imps = [
            {
                "id": t,
                "supply": int(self.supplies[k]),
                "neighbors": [self.adv_ids[a] for a in self.neighbors(k)],
            }
            for k, t in enumerate(self.type_ids)
        ]
        return {"advertisers": advs, "impressions": imps}

    @classmethod
    def from_dict(cls, doc: Any) -> "Instance":
        if not isinstance(doc, dict):
            raise InstanceError("instance document must be a JSON object")
        advs = doc.get("advertisers")
        imps = doc.get("impressions")
        if not isinstance(advs, list) or not isinstance(imps, list):
            raise InstanceError("instance needs 'advertisers' and 'impressions' arrays")
        caps: dict[str, float] = {}
        for k, rec in enumerate(advs):
            if not isinstance(rec, dict) or "id" not in rec or "capacity" not in rec:
                raise InstanceError(f"advertiser entry #{k} needs 'id' and 'capacity'")
            if rec["id"] in caps:
                raise InstanceError(f"duplicate advertiser id {rec['id']!r}")
            caps[rec["id"]] = rec["capacity"]
        rows = []
        for k, rec in enumerate(imps):
            if not isinstance(rec, dict) or not {"id", "supply", "neighbors"} <= rec.keys():
                raise InstanceError(f"impression entry #{k} needs 'id', 'supply', 'neighbors'")
            if not isinstance(rec["neighbors"], list):
                raise InstanceError(f"impression {rec['id']!r}: 'neighbors' must be an array")
            rows.append((rec["id"], rec["supply"], rec["neighbors"]))
        return cls.build(caps, rows)


def dumps_instance(inst: Instance) -> str:
    """Canonical JSON text (sorted ids, fixed field order, trailing newline)."""
    return json.dumps(inst.to_dict(), ensure_ascii=False, separators=(",", ":")) + "\n"


def save_instance(inst: Instance, path: str | Path) -> None:
    Path(path).write_text(dumps_instance(inst), encoding="utf-8")


def load_instance(path: str | Path) -> Instance:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"{path}: malformed JSON ({exc})") from exc
    return Instance.from_dict(doc)


def total_supply(inst: Instance) -> int:
    return inst.m


@dataclass
class AllocationState:
    """Mutable per-run allocation record; owned by exactly one run."""

    alloc: np.ndarray  # raw mass per advertiser (PW may exceed capacity)
    matched: float = 0.0
    unmatched: float = 0.0
    processed: int = 0
    edge_totals: np.ndarray | None = None  # per CSR edge slot, when tracked
    maximality_violations: int = 0

    def check_conservation(self, tol: float = 1e-9) -> bool:
        return abs(self.matched + self.unmatched - self.processed) <= tol * max(1, self.processed)


@dataclass
class MatchResult:
    algorithm: str
    matched: float
    opt: float
    seed: int | None = None
    order: str | None = None
    metadata: dict[str, Any] = field(default_factory=dict)
    state: AllocationState | None = field(default=None, repr=False)
    extras: dict[str, Any] = field(default_factory=dict, repr=False)  # not serialized

    @property
    def ratio(self) -> float:
        return self.matched / self.opt if self.opt > 0 else float("nan")

    def to_json(self) -> str:
        doc = {
            "algorithm": self.algorithm,
            "matched": self.matched,
            "opt": self.opt,
            "ratio": self.ratio if self.opt > 0 else None,
            "seed": self.seed,
            "order": self.order,
        }
        if self.state is not None:
            doc["unmatched"] = self.state.unmatched
        doc.update(self.metadata)
        return json.dumps(doc, sort_keys=False)

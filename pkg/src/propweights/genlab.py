"""Instance laboratory: generators, quota rules, arrival orders, day families,
record ingestion and the l1 instance distance.

Impression types are nonempty subsets of a keyphrase base set.  An advertiser
with keyphrase set P is adjacent to every type i with nonzero supply and
i subset of P (subset closure).  Quota rules then set capacities from the
supplies so that a perfect fractional matching exists.

Randomness: every draw comes from ``substream(seed, *keys)``, a numpy
``SeedSequence`` whose spawn key is the tuple of keys (strings are mapped
through CRC-32).  Draws for one (operation, day, type) never depend on how
many other days or types exist.
"""

from __future__ import annotations

import csv
import json
import math
import zlib
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .instance import Instance, InstanceError
from .online import ArrivalStream


class Quota(str, Enum):
    RANDOM = "RANDOM"
    MAXMIN = "MAXMIN"
    LEAST_DEGREE = "LEAST_DEGREE"


class Order(str, Enum):
    RANDOM = "RANDOM"
    CI_DESC = "CI_DESC"
    CI_ASC = "CI_ASC"
    CA_DESC = "CA_DESC"
    CA_ASC = "CA_ASC"


ALL_ORDERS = tuple(Order)


def _key(k) -> int:
    if isinstance(k, str):
        return zlib.crc32(k.encode("utf-8"))
    return int(k) & 0xFFFFFFFF


def substream(seed: int, *keys) -> np.random.Generator:
    """Independent generator for ``(seed, *keys)``; keys are ints or strings."""
    ss = np.random.SeedSequence(entropy=int(seed) & ((1 << 64) - 1), spawn_key=tuple(_key(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, *keys) -> int:
    """A 63-bit integer seed derived from ``(seed, *keys)``."""
    return int(substream(seed, "derive", *keys).integers(0, 2**63 - 1))


def phrase_id(phrases: Iterable[str]) -> str:
    return "+".join(sorted(phrases))


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class GeneratorConfig:
    base_set_size: int = 20
    advertiser_count: int = 4500
    catalog_size: int = 82  # distinct keyphrase sets advertisers choose from
    set_size_weights: tuple[float, ...] = (0.45, 0.35, 0.2)  # P(|P| = 1, 2, 3, ...)
    phrase_zipf: float = 0.8  # keyphrase popularity exponent
    set_zipf: float = 1.0  # catalog popularity exponent
    subset_types: int = 4  # extra types drawn as subsets of advertiser sets
    supply_shape: float = 1.2  # Pareto tail exponent of per-type supply
    total_supply: int = 1_800_000
    quota: str | None = "MAXMIN"
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.base_set_size <= 24:
            raise ValueError("base_set_size must lie in [1, 24]")
        if self.advertiser_count < 1 or self.catalog_size < 1 or self.total_supply < 1:
            raise ValueError("advertiser_count, catalog_size and total_supply must be positive")
        if self.subset_types < 0:
            raise ValueError("subset_types must be >= 0")
        w = self.set_size_weights
        if not w or any(x < 0 for x in w) or sum(w) <= 0 or len(w) > self.base_set_size:
            raise ValueError("set_size_weights must be nonnegative, nonzero, at most base_set_size long")
        if self.supply_shape <= 0:
            raise ValueError("supply_shape must be positive")
        if self.quota is not None:
            Quota(self.quota)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "GeneratorConfig":
        known = {f.name for f in fields(cls)}
        extra = set(doc) - known
        if extra:
            raise ValueError(f"unknown generator config keys: {sorted(extra)}")
        doc = dict(doc)
        if "set_size_weights" in doc:
            doc["set_size_weights"] = tuple(doc["set_size_weights"])
        return cls(**doc)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["set_size_weights"] = list(self.set_size_weights)
        return d

    def with_(self, **kw) -> "GeneratorConfig":
        return GeneratorConfig.from_dict({**self.to_dict(), **kw})


PRESETS: dict[str, GeneratorConfig] = {
    # full daily scale: ~4500 advertisers, ~85 types, ~8000 edges, ~1.8M impressions
    "full": GeneratorConfig(),
    # small enough for 20-seed sweeps in seconds
    "desk": GeneratorConfig(
        base_set_size=12,
        advertiser_count=300,
        catalog_size=40,
        subset_types=4,
        total_supply=60_000,
    ),
    # few advertisers, many impressions: random-order learnability regime
    "theorem": GeneratorConfig(
        base_set_size=4,
        advertiser_count=5,
        catalog_size=5,
        set_size_weights=(0.3, 0.4, 0.3),
        set_zipf=0.0,
        subset_types=3,
        total_supply=50_000,
        quota="MAXMIN",
    ),
}


# ---------------------------------------------------------------------------
# generation


def closure_instance(
    adv_sets: Mapping[str, Iterable[str]],
    type_supplies: Mapping[str, int] | Mapping[frozenset, int],
    capacities: Mapping[str, float] | None = None,
) -> Instance:
    """Instance with subset-closure edges.

    ``type_supplies`` is keyed by phrase sets (frozensets or ``a+b`` ids).
    Types with zero supply are dropped; an advertiser is adjacent to every
    remaining type contained in its phrase set.
    """
    sets = {a: frozenset(p) for a, p in adv_sets.items()}
    types: dict[frozenset, int] = {}
    for t, c in type_supplies.items():
        key = frozenset(t.split("+")) if isinstance(t, str) else frozenset(t)
        if not key:
            raise InstanceError("impression types must be nonempty phrase sets")
        if c > 0:
            types[key] = types.get(key, 0) + int(c)
    rows = []
    for t, c in types.items():
        nbrs = [a for a, p in sets.items() if t <= p]
        rows.append((phrase_id(t), c, nbrs))
    caps = {a: (0.0 if capacities is None else float(capacities[a])) for a in sets}
    return Instance.build(caps, rows)


@dataclass
class _Universe:
    """Phrase sets of a generated advertiser population plus its type list."""

    adv_sets: dict[str, frozenset]
    types: list[frozenset]
    raw: np.ndarray  # day-0 raw supply weights, aligned with ``types``
    scale: float


def _draw_universe(cfg: GeneratorConfig) -> _Universe:
    B = cfg.base_set_size
    phrases = [f"k{j:02d}" for j in range(B)]
    pop = (np.arange(B) + 1.0) ** -cfg.phrase_zipf
    pop /= pop.sum()
    sizes = np.asarray(cfg.set_size_weights, dtype=float)
    sizes /= sizes.sum()

    rng = substream(cfg.seed, "catalog")
    catalog: list[frozenset] = []
    seen: set[frozenset] = set()
    limit = min(cfg.catalog_size, 2**B - 1)
    attempts = 0
    while len(catalog) < limit and attempts < 1000 * limit:
        attempts += 1
        s = 1 + int(rng.choice(len(sizes), p=sizes))
        pick = frozenset(phrases[j] for j in rng.choice(B, size=s, replace=False, p=pop))
        if pick not in seen:
            seen.add(pick)
            catalog.append(pick)

    # short phrase sets are the popular ones
    catalog.sort(key=len)
    cat_pop = (np.arange(len(catalog)) + 1.0) ** -cfg.set_zipf
    cat_pop /= cat_pop.sum()
    width = len(str(cfg.advertiser_count - 1))
    rng = substream(cfg.seed, "advertisers")
    choice = rng.choice(len(catalog), size=cfg.advertiser_count, p=cat_pop)
    adv_sets = {f"a{k:0{width}d}": catalog[c] for k, c in enumerate(choice)}

    types = set(adv_sets.values())
    rng = substream(cfg.seed, "subsets")
    owners = sorted(adv_sets)
    tries = 0
    extra = 0
    while extra < cfg.subset_types and tries < 100 * (cfg.subset_types + 1):
        tries += 1
        base = sorted(adv_sets[owners[int(rng.integers(len(owners)))]])
        if len(base) < 2:
            continue
        r = int(rng.integers(1, len(base)))
        sub = frozenset(rng.choice(base, size=r, replace=False).tolist())
        if sub not in types:
            types.add(sub)
            extra += 1
    type_list = sorted(types, key=phrase_id)
    raw = np.array([_raw_supply(cfg, 0, phrase_id(t)) for t in type_list])
    return _Universe(adv_sets, type_list, raw, cfg.total_supply / raw.sum())


def _raw_supply(cfg: GeneratorConfig, day: int, type_id: str) -> float:
    # Pareto(shape) + 1 >= 1: heavy-tailed, strictly positive
    return 1.0 + float(substream(cfg.seed, "supply", day, type_id).pareto(cfg.supply_shape))


def _round_to_total(raw: np.ndarray, total: int) -> np.ndarray:
    """Largest-remainder rounding with every entry >= 1 and the exact total."""
    k = raw.size
    if total < k:
        raise ValueError("total_supply smaller than the number of types")
    x = raw / raw.sum() * (total - k)
    base = np.floor(x).astype(np.int64)
    short = (total - k) - int(base.sum())
    order = np.lexsort((np.arange(k), -(x - base)))
    base[order[:short]] += 1
    return base + 1


def gen_synthetic(cfg: GeneratorConfig) -> Instance:
    """Synthetic daily instance; capacities from ``cfg.quota`` (zeros if None)."""
    u = _draw_universe(cfg)
    sup = _round_to_total(u.raw, cfg.total_supply)
    inst = closure_instance(u.adv_sets, dict(zip(u.types, sup.tolist())))
    if cfg.quota is not None:
        inst = apply_quota(inst, cfg.quota, cfg.seed)
    return inst


# ---------------------------------------------------------------------------
# quota rules


def _water_fill_values(vals: np.ndarray, amount: float) -> np.ndarray:
    """Increments raising the smallest values first so that they sum to ``amount``."""
    order = np.argsort(vals, kind="stable")
    v = vals[order]
    d = v.size
    level = v[-1] + (amount - (v[-1] * d - v.sum())) / d
    csum = np.cumsum(v)
    for j in range(d):
        nxt = v[j + 1] if j + 1 < d else math.inf
        # raising the first j+1 values to nxt costs (j+1)*nxt - csum[j]
        if (j + 1) * nxt - csum[j] >= amount:
            level = (amount + csum[j]) / (j + 1)
            break
    inc = np.zeros(d)
    inc[order] = np.maximum(level - v, 0.0)
    return inc


def apply_quota(inst: Instance, rule: Quota | str, seed: int = 0) -> Instance:
    """Overwrite capacities with a feasible allocation of all supply.

    RANDOM splits each type's supply by a uniform point on the simplex over
    its neighborhood; MAXMIN processes types in id order and water-fills
    each supply onto the running allocations; LEAST_DEGREE splits each
    supply equally among the minimum-degree neighbors.
    """
    rule = Quota(rule)
    caps = np.zeros(inst.n)
    deg = inst.adv_degrees()
    for i, tid in enumerate(inst.type_ids):
        c = float(inst.supplies[i])
        nb = inst.neighbors(i)
        if c == 0 or nb.size == 0:
            continue
        if rule is Quota.RANDOM:
            share = substream(seed, "quota-random", tid).dirichlet(np.ones(nb.size))
            caps[nb] += c * share
        elif rule is Quota.MAXMIN:
            caps[nb] += _water_fill_values(caps[nb], c)
        else:
            d = deg[nb]
            low = nb[d == d.min()]
            caps[low] += c / low.size
    return inst.replace(capacities=caps)


# ---------------------------------------------------------------------------
# arrival orders


def gen_arrival(inst: Instance, order: Order | str, seed: int = 0) -> ArrivalStream:
    """Unit-event stream for one of the five arrival orders.

    Sorted orders keep each type's units contiguous; ties go to the smaller
    type id.  C_a orders sort by the summed capacity of the neighborhood.
    """
    order = Order(order)
    idx = np.arange(inst.num_types)
    if order is Order.RANDOM:
        events = np.repeat(idx, inst.supplies)
        substream(seed, "arrival").shuffle(events)
        return ArrivalStream(events.astype(np.int64), order=order.value, seed=seed)
    if order in (Order.CI_DESC, Order.CI_ASC):
        key = inst.supplies.astype(np.float64)
    else:
        key = np.bincount(inst.edge_types, weights=inst.capacities[inst.indices], minlength=inst.num_types)
    if order in (Order.CI_DESC, Order.CA_DESC):
        key = -key
    seq = np.lexsort((idx, key))
    events = np.repeat(seq, inst.supplies[seq]).astype(np.int64)
    return ArrivalStream(events, order=order.value, seed=seed)


def gen_iid(inst: Instance, m: int, seed: int = 0) -> tuple[Instance, ArrivalStream]:
    """Draw ``m`` units i.i.d. from the supply distribution of ``inst``.

    Returns the realized instance (drawn counts as supplies, same capacities)
    and its stream in draw order.
    """
    if m < 0:
        raise ValueError("m must be >= 0")
    total = inst.m
    if total == 0:
        raise ValueError("instance has no supply to sample from")
    rng = substream(seed, "iid")
    events = rng.choice(inst.num_types, size=m, p=inst.supplies / total).astype(np.int64)
    real = inst.replace(supplies=np.bincount(events, minlength=inst.num_types).astype(np.int64))
    return real, ArrivalStream(events, order="IID", seed=seed)


# ---------------------------------------------------------------------------
# multi-day families


@dataclass
class DayFamily:
    days: list[Instance]
    drift: float = 0.0
    quota: str | None = None
    config: GeneratorConfig | None = None

    def __post_init__(self):
        if not self.days:
            raise ValueError("a day family needs at least one day")
        ids = self.days[0].adv_ids
        for d, inst in enumerate(self.days):
            if inst.adv_ids != ids:
                raise InstanceError(f"day {d} has a different advertiser universe")


def stack_days(family: DayFamily, seed: int = 0) -> tuple[Instance, ArrivalStream]:
    """Sum the days into one instance and a day-by-day stream.

    Supplies and capacities add up across days; within each day the units
    arrive in random order.
    """
    DayFamily(family.days)  # re-validate universes
    adv_ids = family.days[0].adv_ids
    caps = np.zeros(len(adv_ids))
    supply: Counter = Counter()
    nbrs: dict[str, set[str]] = defaultdict(set)
    for inst in family.days:
        caps += inst.capacities
        for i, t in enumerate(inst.type_ids):
            supply[t] += int(inst.supplies[i])
            nbrs[t].update(inst.adv_ids[a] for a in inst.neighbors(i))
    stacked = Instance.build(
        dict(zip(adv_ids, caps.tolist())),
        [(t, supply[t], sorted(nbrs[t])) for t in nbrs],
    )
    parts, starts, pos = [], [], 0
    for d, inst in enumerate(family.days):
        day_stream = gen_arrival(inst, Order.RANDOM, derive_seed(seed, "daily", d))
        remap = np.array([stacked.type_index[t] for t in inst.type_ids], dtype=np.int64)
        parts.append(remap[day_stream.events] if len(day_stream) else np.zeros(0, dtype=np.int64))
        starts.append(pos)
        pos += len(day_stream)
    events = np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)
    return stacked, ArrivalStream(events, day_starts=tuple(starts), order="DAILY", seed=seed)


def _family(cfg: GeneratorConfig, days: int, drift: float) -> DayFamily:
    if days < 1:
        raise ValueError("days must be >= 1")
    if not 0.0 <= drift <= 1.0:
        raise ValueError("drift must lie in [0, 1]")
    u = _draw_universe(cfg)
    sup = _round_to_total(u.raw, cfg.total_supply)
    ids = [phrase_id(t) for t in u.types]
    out = []
    for d in range(days):
        if d > 0:
            sup = sup.copy()
            for k, tid in enumerate(ids):
                if substream(cfg.seed, "drift-pick", d, tid).random() < drift:
                    sup[k] = max(1, round(u.scale * _raw_supply(cfg, d, tid)))
        inst = closure_instance(u.adv_sets, dict(zip(u.types, sup.tolist())))
        if cfg.quota is not None:
            inst = apply_quota(inst, cfg.quota, derive_seed(cfg.seed, "quota-day", d))
        out.append(inst)
    return DayFamily(out, drift=drift, quota=cfg.quota, config=cfg)


def gen_day_family(cfg: GeneratorConfig, days: int, drift: float) -> DayFamily:
    """Day 0 from ``gen_synthetic``; each later day re-draws each type's
    supply with probability ``drift`` and re-applies the quota rule."""
    if cfg.quota not in (Quota.MAXMIN.value, Quota.LEAST_DEGREE.value):
        raise ValueError("day families need a MAXMIN or LEAST_DEGREE quota")
    return _family(cfg, days, drift)


# ---------------------------------------------------------------------------
# record ingestion


@dataclass(frozen=True)
class AdRecord:
    day: int
    account_id: str
    rank: int
    phrases: frozenset[str]
    avg_bid: float
    impression_count: int
    clicks: int

    def __post_init__(self):
        if self.impression_count < 0:
            raise ValueError("impression_count must be >= 0")


class RecordError(ValueError):
    pass


def parse_records(lines: Iterable[str], source: str = "<records>") -> list[AdRecord]:
    """Tab-separated rows: day, account, rank, phrases, avg_bid, impressions, clicks."""
    out = []
    for lineno, row in enumerate(csv.reader(lines, delimiter="\t"), start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 7:
            raise RecordError(f"{source}:{lineno}: expected 7 tab-separated fields, got {len(row)}")
        try:
            rec = AdRecord(
                day=int(row[0]),
                account_id=row[1].strip(),
                rank=int(row[2]),
                phrases=frozenset(row[3].split()),
                avg_bid=float(row[4]),
                impression_count=int(row[5]),
                clicks=int(row[6]),
            )
        except ValueError as exc:
            raise RecordError(f"{source}:{lineno}: {exc}") from exc
        if not rec.account_id:
            raise RecordError(f"{source}:{lineno}: empty account id")
        out.append(rec)
    return out


def read_records(path: str | Path) -> list[AdRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_records(fh, source=str(path))


def ingest_records(records: Sequence[AdRecord], top_k: int = 20) -> dict[int, Instance]:
    """Per-day instances (capacities zero) from raw ad records.

    The base set is the ``top_k`` keyphrases by total impressions across all
    days.  For each (day, keyphrase set) only the rows of the rank with the
    largest total impressions are kept.  A row's type is its keyphrase set
    cut down to the base set; rows with an empty cut are dropped.
    """
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    if not records:
        raise RecordError("no records")
    freq: Counter = Counter()
    for r in records:
        for p in r.phrases:
            freq[p] += r.impression_count
    base = frozenset(p for p, _ in sorted(freq.items(), key=lambda kv: (-kv[1], kv[0]))[:top_k])

    by_key: dict[tuple[int, frozenset], dict[int, list[AdRecord]]] = defaultdict(lambda: defaultdict(list))
    for r in records:
        by_key[(r.day, r.phrases)][r.rank].append(r)
    kept: dict[int, list[AdRecord]] = defaultdict(list)
    for (day, _), ranks in by_key.items():
        best = min(ranks, key=lambda rk: (-sum(x.impression_count for x in ranks[rk]), rk))
        kept[day].extend(ranks[best])

    accounts = sorted({r.account_id for r in records})
    days = range(min(r.day for r in records), max(r.day for r in records) + 1)
    out = {}
    for d in days:
        rows = kept.get(d)
        if not rows:
            raise RecordError(f"empty day {d}")
        supply: Counter = Counter()
        interest: dict[str, list[frozenset]] = defaultdict(list)
        for r in rows:
            t = r.phrases & base
            if not t:
                continue
            supply[t] += r.impression_count
            interest[r.account_id].append(t)
        if not any(supply.values()):
            raise RecordError(f"empty day {d}: no impressions on the base keyphrases")
        # one advertiser may hold several phrase sets; close over each
        rows_out = []
        for t, c in supply.items():
            if c <= 0:
                continue
            nbrs = sorted(a for a, ts in interest.items() if any(t <= s for s in ts))
            rows_out.append((phrase_id(t), c, nbrs))
        out[d] = Instance.build({a: 0.0 for a in accounts}, rows_out)
    return out


# ---------------------------------------------------------------------------
# distance


def instance_distance(i1: Instance, i2: Instance, normalized: bool = False) -> float:
    """l1 distance of supply vectors plus l1 distance of capacity vectors.

    Ids missing from one instance count as zero.  With ``normalized`` each
    vector is first divided by its own l1 mass.
    """

    def vec(ids, vals, keys):
        d = dict(zip(ids, vals.tolist()))
        v = np.array([d.get(k, 0.0) for k in keys], dtype=np.float64)
        if normalized:
            s = v.sum()
            v = v / s if s > 0 else v
        return v

    tkeys = sorted(set(i1.type_ids) | set(i2.type_ids))
    akeys = sorted(set(i1.adv_ids) | set(i2.adv_ids))
    s = np.abs(vec(i1.type_ids, i1.supplies, tkeys) - vec(i2.type_ids, i2.supplies, tkeys)).sum()
    c = np.abs(vec(i1.adv_ids, i1.capacities, akeys) - vec(i2.adv_ids, i2.capacities, akeys)).sum()
    return float(s + c)


def save_config(cfg: GeneratorConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8")


def load_config(path: str | Path) -> GeneratorConfig:
    return GeneratorConfig.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

import numpy as np
import pytest
from hypothesis import given, strategies as st

from helpers import random_instance
from propweights.genlab import (
    PRESETS,
    AdRecord,
    DayFamily,
    GeneratorConfig,
    Order,
    Quota,
    RecordError,
    apply_quota,
    closure_instance,
    derive_seed,
    gen_arrival,
    gen_day_family,
    gen_iid,
    gen_synthetic,
    ingest_records,
    instance_distance,
    load_config,
    parse_records,
    save_config,
    stack_days,
)
from propweights.instance import Instance, dumps_instance
from propweights.optimum import opt_value

SMALL = PRESETS["desk"].with_(advertiser_count=40, base_set_size=8, catalog_size=15, total_supply=3000)


def _b2():
    return closure_instance({"a1": ["p1"], "a2": ["p1", "p2"]}, {"p1": 4, "p2": 2, "p1+p2": 3})


def test_closure_example():
    inst = _b2()
    assert inst.neighbor_ids("p1") == ["a1", "a2"]
    assert inst.neighbor_ids("p2") == ["a2"]
    assert inst.neighbor_ids("p1+p2") == ["a2"]
    assert list(inst.capacities) == [0.0, 0.0]


def test_closure_drops_zero_supply_types():
    inst = closure_instance({"a1": ["p1"], "a2": ["p1", "p2"]}, {"p1": 4, "p2": 0, "p1+p2": 3})
    assert "p2" not in inst.type_index


def test_least_degree_split_on_b2():
    # degrees: a1 -> 1 ({p1}), a2 -> 3; {p1} goes wholly to a1
    inst = apply_quota(_b2(), Quota.LEAST_DEGREE)
    assert list(inst.adv_degrees()) == [1, 3]
    assert list(inst.capacities) == [4.0, 5.0]
    tie = apply_quota(closure_instance({"a": ["p"], "b": ["p"]}, {"p": 3}), "LEAST_DEGREE")
    assert list(tie.capacities) == [1.5, 1.5]


def test_maxmin_is_lexicographic_water_fill():
    inst = Instance.build({"a": 0, "b": 0}, [("x", 4, ["a"]), ("y", 6, ["a", "b"])])
    assert list(apply_quota(inst, Quota.MAXMIN).capacities) == [5.0, 5.0]
    inst = Instance.build({"a": 0, "b": 0}, [("x", 8, ["a"]), ("y", 6, ["a", "b"])])
    assert list(apply_quota(inst, Quota.MAXMIN).capacities) == [8.0, 6.0]


@given(st.integers(0, 2**32 - 1), st.sampled_from(list(Quota)))
def test_every_quota_gives_perfect_matching(seed, rule):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, max_adv=8, max_types=10, max_supply=40)
    q = apply_quota(inst, rule, seed)
    assert q.capacities.sum() == pytest.approx(q.m, rel=1e-12)
    assert abs(opt_value(q) - q.m) <= 1e-9 * max(1, q.m)


@pytest.mark.parametrize("rule", list(Quota))
def test_generated_quota_opt_equals_supply(rule):
    inst = gen_synthetic(SMALL.with_(quota=rule.value, seed=3))
    assert abs(opt_value(inst) - inst.m) <= 1e-9 * inst.m


def test_arrival_orders():
    inst = Instance.build({"a": 1, "b": 10}, [("x", 2, ["a"]), ("y", 3, ["b"]), ("z", 2, ["a", "b"])])
    # supplies (2,3,2); capacity sums (1,10,11)
    assert list(gen_arrival(inst, Order.CI_DESC).events) == [1, 1, 1, 0, 0, 2, 2]
    assert list(gen_arrival(inst, Order.CI_ASC).events) == [0, 0, 2, 2, 1, 1, 1]
    assert list(gen_arrival(inst, Order.CA_DESC).events) == [2, 2, 1, 1, 1, 0, 0]
    assert list(gen_arrival(inst, Order.CA_ASC).events) == [0, 0, 1, 1, 1, 2, 2]
    for o in Order:
        s = gen_arrival(inst, o, 5)
        assert np.array_equal(np.bincount(s.events, minlength=3), inst.supplies)
        s.check(inst)


def test_random_order_is_seeded_permutation():
    inst = gen_synthetic(SMALL)
    a, b, c = (gen_arrival(inst, "RANDOM", s) for s in (1, 1, 2))
    assert np.array_equal(a.events, b.events) and not np.array_equal(a.events, c.events)
    assert np.array_equal(np.bincount(a.events, minlength=inst.num_types), inst.supplies)


def test_gen_iid():
    inst = gen_synthetic(SMALL)
    real, s = gen_iid(inst, 500, 4)
    assert real.m == 500 and len(s) == 500
    s.check(real)
    assert real.adv_ids == inst.adv_ids and np.array_equal(real.capacities, inst.capacities)
    with pytest.raises(ValueError):
        gen_iid(inst, -1)


def test_stack_days():
    inst = gen_synthetic(SMALL)
    one, s1 = stack_days(DayFamily([inst]), 0)
    assert one == inst and s1.day_starts == (0,) and s1.order == "DAILY"
    two, s2 = stack_days(DayFamily([inst, inst]), 0)
    assert np.array_equal(two.supplies, 2 * inst.supplies)
    assert two.capacities == pytest.approx(2 * inst.capacities)
    assert s2.day_starts == (0, inst.m) and len(s2) == 2 * inst.m
    # each day's block is a permutation of that day's units
    assert np.array_equal(np.bincount(s2.events[inst.m:], minlength=inst.num_types), inst.supplies)


def test_family_drift_zero_identical():
    fam = gen_day_family(SMALL, 4, 0.0)
    for a, b in zip(fam.days, fam.days[1:]):
        assert a == b and instance_distance(a, b) == 0.0


def test_family_drift_monotone_on_average():
    def mean_eta(drift):
        vals = []
        for seed in range(20):
            fam = gen_day_family(SMALL.with_(seed=seed), 3, drift)
            vals += [instance_distance(a, b) for a, b in zip(fam.days, fam.days[1:])]
        return np.mean(vals)

    assert mean_eta(1.0) > mean_eta(0.1)


def test_family_twenty_one_days_and_quota_guard():
    fam = gen_day_family(SMALL, 21, 0.3)
    assert len(fam.days) == 21
    for d in fam.days:
        assert abs(opt_value(d) - d.m) <= 1e-9 * d.m
    with pytest.raises(ValueError):
        gen_day_family(SMALL.with_(quota="RANDOM"), 3, 0.3)
    with pytest.raises(ValueError):
        gen_day_family(SMALL, 0, 0.3)
    with pytest.raises(ValueError):
        gen_day_family(SMALL, 2, 1.5)


def test_distance_example():
    i1 = Instance.build({"a": 2, "b": 1}, [("x", 2, ["a"]), ("y", 1, ["b"])])
    i2 = Instance.build({"a": 2, "b": 2}, [("x", 3, ["a"]), ("y", 1, ["b"])])
    assert instance_distance(i1, i2) == 2.0
    # normalized: supplies (2/3,1/3) vs (3/4,1/4); caps (2/3,1/3) vs (1/2,1/2)
    assert instance_distance(i1, i2, normalized=True) == pytest.approx(1 / 6 + 1 / 3)


def test_distance_metric_properties():
    rng = np.random.default_rng(0)
    for _ in range(50):
        a, b, c = (random_instance(rng, max_adv=5, max_types=6, max_supply=10) for _ in range(3))
        for norm in (False, True):
            dab = instance_distance(a, b, norm)
            assert dab == pytest.approx(instance_distance(b, a, norm))
            assert dab <= instance_distance(a, c, norm) + instance_distance(c, b, norm) + 1e-9
            assert instance_distance(a, a, norm) == 0.0


def _rec(day, acc, rank, phrases, imps):
    return AdRecord(day, acc, rank, frozenset(phrases.split()), 1.0, imps, 0)


def test_ingest_single_record():
    out = ingest_records([_rec(0, "a1", 1, "p1", 5)], top_k=1)
    inst = out[0]
    assert list(inst.type_ids) == ["p1"] and list(inst.supplies) == [5]
    assert inst.neighbor_ids("p1") == ["a1"]


def test_ingest_rank_filter_and_base_set():
    recs = [
        _rec(0, "a1", 1, "p1 p2", 10),
        _rec(0, "a2", 2, "p1 p2", 30),  # this rank wins for {p1,p2} on day 0
        _rec(0, "a3", 1, "p1", 4),
        _rec(0, "a4", 1, "zz", 1),  # falls outside the top-2 base
    ]
    inst = ingest_records(recs, top_k=2)[0]
    assert sorted(inst.type_ids) == ["p1", "p1+p2"]
    assert inst.supply_of("p1+p2") == 30 and inst.supply_of("p1") == 4
    assert inst.neighbor_ids("p1+p2") == ["a2"]
    assert inst.neighbor_ids("p1") == ["a2", "a3"]
    assert list(inst.adv_ids) == ["a1", "a2", "a3", "a4"]


def test_ingest_errors():
    with pytest.raises(RecordError, match="empty day 1"):
        ingest_records([_rec(0, "a", 1, "p", 1), _rec(2, "a", 1, "p", 1)])
    with pytest.raises(RecordError):
        ingest_records([])
    good = "0\ta1\t1\tp1 p2\t0.5\t10\t1\n"
    assert parse_records([good])[0].phrases == {"p1", "p2"}
    with pytest.raises(RecordError, match=":2:"):
        parse_records([good, "0\ta1\t1\tp1\n"])
    with pytest.raises(RecordError, match=":3:"):
        parse_records([good, "\n", "0\ta1\tone\tp1\t0.5\t10\t1\n"])


def test_determinism_and_config_round_trip(tmp_path):
    assert dumps_instance(gen_synthetic(SMALL)) == dumps_instance(gen_synthetic(SMALL))
    assert gen_synthetic(SMALL) != gen_synthetic(SMALL.with_(seed=1))
    f1, f2 = gen_day_family(SMALL, 3, 0.5), gen_day_family(SMALL, 3, 0.5)
    assert all(a == b for a, b in zip(f1.days, f2.days))
    save_config(SMALL, tmp_path / "c.json")
    assert load_config(tmp_path / "c.json") == SMALL
    assert derive_seed(5, "x", 1) == derive_seed(5, "x", 1) != derive_seed(5, "x", 2)
    with pytest.raises(ValueError):
        GeneratorConfig(base_set_size=30)


@pytest.mark.parametrize("seed", range(3))
def test_subset_closure_invariant(seed):
    inst = gen_synthetic(SMALL.with_(seed=seed))
    sets = {t: frozenset(t.split("+")) for t in inst.type_ids}
    for i, t in enumerate(inst.type_ids):
        for a in inst.neighbor_ids(t):
            for u, su in sets.items():
                if su <= sets[t]:
                    assert a in inst.neighbor_ids(u)

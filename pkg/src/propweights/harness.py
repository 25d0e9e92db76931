"""Experiment orchestration: learnability sweeps, adversarial orders, daily
order, day-over-day robustness, the random-order learnability check, and
CSV/SVG reporting.

Work is split into independent cells.  A cell rebuilds its instance (or day
family) from the experiment config, so any cell reproduces its rows in
isolation, serially or in a worker process.  Per-cell randomness is derived
from (master seed, repetition, purpose).
"""

from __future__ import annotations

import csv
import functools
import io
import json
import logging
import math
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .genlab import (
    PRESETS,
    DayFamily,
    GeneratorConfig,
    Order,
    _family,
    apply_quota,
    derive_seed,
    gen_arrival,
    gen_synthetic,
    ingest_records,
    instance_distance,
    read_records,
    stack_days,
    substream,
)
from .instance import Instance, load_instance
from .online import (
    ArrivalStream,
    Mode,
    Policy,
    learn_then_apply,
    random_permutation,
    simulate,
)
from .optimum import opt_value
from .weights import WeightVector, compute_weights

log = logging.getLogger(__name__)


class Kind(str, Enum):
    LEARNABILITY = "LEARNABILITY"
    ADVERSARIAL = "ADVERSARIAL"
    DAILY_ORDER = "DAILY_ORDER"
    ROBUSTNESS = "ROBUSTNESS"
    THEOREM_RANDOM_ORDER = "THEOREM_RANDOM_ORDER"


DEFAULT_SIGMAS = (0.01, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0)
BASELINES = ("WATERFILL", "RANKING")
_ALIASES = {"G": "WATERFILL", "R": "RANKING"}


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = Kind.LEARNABILITY.value
    sigmas: tuple[float, ...] = DEFAULT_SIGMAS
    epsilon: float = 0.1
    delta: float = 0.05
    algorithms: tuple[str, ...] = ("PW", "IPW", "WATERFILL", "RANKING")
    orders: tuple[str, ...] = ("RANDOM",)
    quota: str = "MAXMIN"
    repetitions: int = 4
    seed: int = 0
    generator: Any = "desk"  # preset name, or a GeneratorConfig dict (may hold "preset")
    instance: str | None = None  # fixed instance JSON instead of a generator
    records: str | None = None  # record file for day families
    top_k: int = 20
    days: int | None = None  # default 21 for ROBUSTNESS, 7 for DAILY_ORDER
    drift: float = 0.3
    start_day: int = 8
    name: str | None = None

    def __post_init__(self):
        Kind(self.kind)
        if not self.sigmas or any(not 0 < s <= 1 for s in self.sigmas):
            raise ValueError("sigma values must lie in (0,1]")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0,1)")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0,1)")
        for o in self.orders:
            Order(o)
        for a in self.algorithms:
            if _ALIASES.get(a, a) not in ("PW", "IPW") + BASELINES:
                raise ValueError(f"unknown algorithm {a!r}")

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(doc) - known
        if extra:
            raise ValueError(f"unknown experiment config keys: {sorted(extra)}")
        doc = dict(doc)
        for k in ("sigmas", "algorithms", "orders"):
            if k in doc:
                doc[k] = tuple(doc[k])
        if "algorithms" in doc:
            doc["algorithms"] = tuple(_ALIASES.get(a, a) for a in doc["algorithms"])
        if "kind" in doc:
            doc["kind"] = str(doc["kind"]).upper()
        return cls(**doc)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("sigmas", "algorithms", "orders"):
            d[k] = list(d[k])
        return d

    @property
    def num_days(self) -> int:
        if self.days is not None:
            return self.days
        return 7 if self.kind == Kind.DAILY_ORDER.value else 21

    def key(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @property
    def label(self) -> str:
        return self.name or self.kind.lower()

    def generator_config(self) -> GeneratorConfig:
        g = self.generator
        if isinstance(g, GeneratorConfig):
            base = g
        elif isinstance(g, str):
            base = PRESETS[g]
        else:
            g = dict(g)
            preset = g.pop("preset", None)
            base = PRESETS[preset].with_(**g) if preset else GeneratorConfig.from_dict(g)
        return base.with_(quota=self.quota)

    def rep_seeds(self) -> list[int]:
        return [derive_seed(self.seed, "rep", r) for r in range(self.repetitions)]


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    return ExperimentConfig.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


CSV_COLUMNS = (
    "experiment", "day", "algorithm", "order", "quota", "sigma", "seed",
    "matched", "opt", "ratio", "eta_prev_day", "wallclock_ms",
)


@dataclass
class ResultRow:
    experiment: str
    day: int | None
    algorithm: str
    order: str
    quota: str
    sigma: float | None
    seed: int
    matched: float | None
    opt: float | None
    ratio: float | None
    eta_prev_day: float | None = None
    wallclock_ms: float = 0.0
    # outside the CSV contract
    eta_normalized: float | None = None
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    def sort_key(self):
        return (
            self.experiment,
            -1 if self.day is None else self.day,
            -1.0 if self.sigma is None else self.sigma,
            self.order,
            self.algorithm,
            self.seed,
        )

    def comparable(self) -> tuple:
        """Everything except wallclock, for determinism checks."""
        d = asdict(self)
        d.pop("wallclock_ms")
        return tuple(d.values())


def _row(cfg, *, algorithm, order, seed, matched, opt, day=None, sigma=None, ms=0.0, eta=None, eta_n=None):
    ratio = matched / opt if opt > 0 else float("nan")
    return ResultRow(
        experiment=cfg.label, day=day, algorithm=algorithm, order=order, quota=cfg.quota, sigma=sigma,
        seed=seed, matched=matched, opt=opt, ratio=ratio, eta_prev_day=eta, wallclock_ms=ms,
        eta_normalized=eta_n,
    )


# ---------------------------------------------------------------------------
# contexts (rebuilt per process and cached)


@functools.lru_cache(maxsize=8)
def _fixed_instance(cfg_key: str) -> Instance:
    cfg = ExperimentConfig.from_dict(json.loads(cfg_key))
    if cfg.instance:
        inst = load_instance(cfg.instance)
        if not np.any(inst.capacities > 0):
            inst = apply_quota(inst, cfg.quota, cfg.seed)
        return inst
    gcfg = cfg.generator_config()
    if cfg.kind == Kind.DAILY_ORDER.value:
        inst, _ = _daily(cfg_key)
        return inst
    return gen_synthetic(gcfg)


@functools.lru_cache(maxsize=8)
def _day_family(cfg_key: str, days: int) -> DayFamily:
    cfg = ExperimentConfig.from_dict(json.loads(cfg_key))
    if cfg.records:
        per_day = ingest_records(read_records(cfg.records), cfg.top_k)
        insts = [apply_quota(per_day[d], cfg.quota, derive_seed(cfg.seed, "quota-day", d)) for d in sorted(per_day)]
        return DayFamily(insts[:days], quota=cfg.quota)
    gcfg = cfg.generator_config()
    if cfg.kind == Kind.ROBUSTNESS.value and cfg.quota not in ("MAXMIN", "LEAST_DEGREE"):
        raise ValueError("robustness families need a MAXMIN or LEAST_DEGREE quota")
    return _family(gcfg, days, cfg.drift)


@functools.lru_cache(maxsize=8)
def _daily(cfg_key: str) -> tuple[Instance, ArrivalStream]:
    cfg = ExperimentConfig.from_dict(json.loads(cfg_key))
    return stack_days(_day_family(cfg_key, cfg.num_days), cfg.seed)


def _stream(cfg: ExperimentConfig, inst: Instance, order: str, seed: int) -> ArrivalStream:
    if order == "DAILY":
        # a fresh within-day shuffle per repetition
        return stack_days(_day_family(cfg.key(), cfg.num_days), seed)[1]
    return gen_arrival(inst, order, derive_seed(seed, "arrival"))


def _orders(cfg: ExperimentConfig) -> tuple[str, ...]:
    if cfg.kind == Kind.DAILY_ORDER.value:
        return ("DAILY",)
    if cfg.kind == Kind.ADVERSARIAL.value and cfg.orders == ("RANDOM",):
        return tuple(o.value for o in Order)
    return cfg.orders


def training_instance(inst: Instance, sigma: float, quota: str, quota_seed: int, seed: int) -> Instance:
    """Quota'd instance built from a uniform random floor(sigma*m)-unit subset."""
    k = int(math.floor(sigma * inst.m))
    rng = substream(seed, "sample", round(sigma * 1_000_000))
    counts = rng.multivariate_hypergeometric(inst.supplies, k) if k else np.zeros(inst.num_types, dtype=np.int64)
    sub = inst.replace(supplies=counts.astype(np.int64))
    return apply_quota(sub, quota, quota_seed)


def _weights(train: Instance, eps: float) -> tuple[WeightVector, bool]:
    if opt_value(train) <= 0:
        log.warning("training instance has OPT=0; using uniform weights")
        return WeightVector.uniform(train.adv_ids), True
    return compute_weights(train, eps), False


def _timed(fn, *a, **kw):
    t = time.perf_counter()
    out = fn(*a, **kw)
    return out, (time.perf_counter() - t) * 1000.0


# ---------------------------------------------------------------------------
# cells


def _cell_learn(cfg_key: str, sigma: float, rep: int) -> list[ResultRow]:
    cfg = ExperimentConfig.from_dict(json.loads(cfg_key))
    inst = _fixed_instance(cfg_key)
    seed = cfg.rep_seeds()[rep]
    opt = opt_value(inst)
    train = training_instance(inst, sigma, cfg.quota, cfg.seed, seed)
    w, _ = _weights(train, cfg.epsilon)
    rows = []
    for order in _orders(cfg):
        stream = _stream(cfg, inst, order, seed)
        for algo in ("PW", "IPW"):
            if algo not in cfg.algorithms:
                continue
            st, ms = _timed(simulate, inst, stream, algo, w, check=False)
            rows.append(_row(cfg, algorithm=algo, order=order, seed=seed, matched=st.matched, opt=opt, sigma=sigma, ms=ms))
    return rows


def _baseline_states(inst: Instance, stream: ArrivalStream, seed: int, algos: Iterable[str]):
    out = {}
    for algo in algos:
        if algo == "WATERFILL":
            out[algo] = _timed(simulate, inst, stream, Policy.WATERFILL, check=False)
        elif algo == "RANKING":
            perm = random_permutation(inst, substream(seed, "ranking"))
            out[algo] = _timed(simulate, inst, stream, Policy.RANKING, perm=perm, check=False)
    return out


def _cell_baseline(cfg_key: str, rep: int) -> list[ResultRow]:
    """Baselines ignore the training sample: run once, replicate over sigma."""
    cfg = ExperimentConfig.from_dict(json.loads(cfg_key))
    inst = _fixed_instance(cfg_key)
    seed = cfg.rep_seeds()[rep]
    opt = opt_value(inst)
    rows = []
    for order in _orders(cfg):
        stream = _stream(cfg, inst, order, seed)
        for algo, (st, ms) in _baseline_states(inst, stream, seed, [a for a in cfg.algorithms if a in BASELINES]).items():
            for sigma in cfg.sigmas:
                rows.append(_row(cfg, algorithm=algo, order=order, seed=seed, matched=st.matched, opt=opt, sigma=sigma, ms=ms))
    return rows


def _cell_robust(cfg_key: str, day: int) -> list[ResultRow]:
    cfg = ExperimentConfig.from_dict(json.loads(cfg_key))
    fam = _day_family(cfg_key, cfg.num_days)
    today, prev = fam.days[day], fam.days[day - 1]
    opt = opt_value(today)
    eta = instance_distance(prev, today)
    eta_n = instance_distance(prev, today, normalized=True)
    w1, _ = _weights(prev, cfg.epsilon)
    stacked, _ = stack_days(DayFamily(fam.days[:day]))
    wall, _ = _weights(stacked, cfg.epsilon)
    rows = []
    for seed in cfg.rep_seeds():
        stream = gen_arrival(today, Order.RANDOM, derive_seed(seed, "arrival", day))
        for tag, w in (("1", w1), ("all", wall)):
            for algo in ("PW", "IPW"):
                if algo not in cfg.algorithms:
                    continue
                st, ms = _timed(simulate, today, stream, algo, w, check=False)
                rows.append(_row(cfg, algorithm=f"{algo}_{tag}", order="RANDOM", seed=seed, matched=st.matched,
                                 opt=opt, day=day, ms=ms, eta=eta, eta_n=eta_n))
        base = _baseline_states(today, stream, derive_seed(seed, "day", day), [a for a in cfg.algorithms if a in BASELINES])
        for algo, (st, ms) in base.items():
            rows.append(_row(cfg, algorithm=algo, order="RANDOM", seed=seed, matched=st.matched, opt=opt,
                             day=day, ms=ms, eta=eta, eta_n=eta_n))
    return rows


def theorem_sample_bound(n: int, sigma: float, eps: float, delta: float) -> float:
    """m above which the random-order guarantee is stated, constants set to 1."""
    return n * n / (sigma * eps * eps) * math.log(n / delta)


def _cell_theorem(cfg_key: str, sigma: float, rep: int) -> list[ResultRow]:
    cfg = ExperimentConfig.from_dict(json.loads(cfg_key))
    inst = _fixed_instance(cfg_key)
    seed = cfg.rep_seeds()[rep]
    opt = opt_value(inst)
    stream = gen_arrival(inst, Order.RANDOM, derive_seed(seed, "arrival"))
    res, ms = _timed(learn_then_apply, inst, stream, sigma, cfg.epsilon, Mode.DISCARD_SAMPLE, Policy.PW, opt=opt)
    cut = res.metadata["sample_size"]
    post = inst.replace(supplies=stream.counts(inst.num_types, cut))
    return [
        _row(cfg, algorithm="ALG1", order="RANDOM", seed=seed, matched=res.matched, opt=opt, sigma=sigma, ms=ms),
        _row(cfg, algorithm="ALG1_POST", order="RANDOM", seed=seed, matched=res.matched, opt=opt_value(post),
             sigma=sigma, ms=ms),
    ]


def _run_cell(task: tuple) -> list[ResultRow]:
    fn, args, stub = task
    try:
        return fn(*args)
    except Exception as exc:  # a failed cell becomes a failed row
        log.error("cell %s%r failed: %s", fn.__name__, args[1:], exc)
        row = ResultRow(**stub, matched=None, opt=None, ratio=None, error=f"{type(exc).__name__}: {exc}")
        log.debug("%s", traceback.format_exc())
        return [row]


def _tasks(cfg: ExperimentConfig) -> list[tuple]:
    key = cfg.key()
    kind = Kind(cfg.kind)
    stub = dict(experiment=cfg.label, quota=cfg.quota, order="", day=None, sigma=None, seed=cfg.seed)
    tasks = []
    if kind in (Kind.LEARNABILITY, Kind.ADVERSARIAL, Kind.DAILY_ORDER):
        for r in range(cfg.repetitions):
            tasks.append((_cell_baseline, (key, r), {**stub, "algorithm": "BASELINES", "seed": cfg.rep_seeds()[r]}))
            for s in cfg.sigmas:
                tasks.append((_cell_learn, (key, s, r), {**stub, "algorithm": "LEARN", "sigma": s, "seed": cfg.rep_seeds()[r]}))
    elif kind is Kind.ROBUSTNESS:
        if cfg.num_days < cfg.start_day + 1 or cfg.start_day < 1:
            raise ValueError(
                f"robustness needs start_day >= 1 and days > start_day (got {cfg.num_days}, {cfg.start_day})"
            )
        for d in range(cfg.start_day, cfg.num_days):
            tasks.append((_cell_robust, (key, d), {**stub, "algorithm": "ROBUST", "day": d}))
    else:
        inst = _fixed_instance(key)
        for s in cfg.sigmas:
            bound = theorem_sample_bound(inst.n, s, cfg.epsilon, cfg.delta)
            if inst.m < bound:
                log.warning("m=%d is below n^2/(sigma eps^2) ln(n/delta)=%.0f for sigma=%g; "
                            "the guarantee is asymptotic here", inst.m, bound, s)
            for r in range(cfg.repetitions):
                tasks.append((_cell_theorem, (key, s, r), {**stub, "algorithm": "ALG1", "sigma": s, "seed": cfg.rep_seeds()[r]}))
    return tasks


def _min_rows(cfg: ExperimentConfig, rows: list[ResultRow]) -> list[ResultRow]:
    groups: dict[tuple, list[ResultRow]] = {}
    for r in rows:
        if not r.failed:
            groups.setdefault((r.algorithm, r.sigma, r.seed), []).append(r)
    out = []
    for (algo, sigma, seed), rs in groups.items():
        worst = min(rs, key=lambda r: (r.ratio, r.order))
        out.append(ResultRow(
            experiment=cfg.label, day=None, algorithm=algo, order="MIN", quota=cfg.quota, sigma=sigma, seed=seed,
            matched=worst.matched, opt=worst.opt, ratio=worst.ratio, wallclock_ms=0.0,
        ))
    return out


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> list[ResultRow]:
    """Run every cell (bounded worker pool when jobs > 1); rows in canonical order."""
    tasks = _tasks(cfg)
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_run_cell, tasks))
    else:
        parts = [_run_cell(t) for t in tasks]
    rows = [r for part in parts for r in part]
    if cfg.kind == Kind.ADVERSARIAL.value:
        rows += _min_rows(cfg, rows)
    rows.sort(key=ResultRow.sort_key)
    return rows


def run_learnability(cfg: ExperimentConfig, jobs: int = 1) -> list[ResultRow]:
    return run_experiment(_as(cfg, Kind.LEARNABILITY), jobs)


def run_adversarial(cfg: ExperimentConfig, jobs: int = 1) -> list[ResultRow]:
    return run_experiment(_as(cfg, Kind.ADVERSARIAL), jobs)


def run_daily_order(cfg: ExperimentConfig, jobs: int = 1) -> list[ResultRow]:
    return run_experiment(_as(cfg, Kind.DAILY_ORDER), jobs)


def run_robustness(cfg: ExperimentConfig, jobs: int = 1) -> list[ResultRow]:
    return run_experiment(_as(cfg, Kind.ROBUSTNESS), jobs)


def run_theorem_random_order(cfg: ExperimentConfig, jobs: int = 1) -> list[ResultRow]:
    return run_experiment(_as(cfg, Kind.THEOREM_RANDOM_ORDER), jobs)


def _as(cfg: ExperimentConfig, kind: Kind) -> ExperimentConfig:
    if cfg.kind == kind.value:
        return cfg
    return ExperimentConfig.from_dict({**cfg.to_dict(), "kind": kind.value})


def robustness_bound_violations(rows: Sequence[ResultRow], eps: float) -> list[ResultRow]:
    """PW_1 rows with matched < (1-eps) OPT - 2 eta_raw - 1e-6."""
    return [
        r for r in rows
        if r.algorithm == "PW_1" and not r.failed
        and r.matched < (1 - eps) * r.opt - 2 * r.eta_prev_day - 1e-6
    ]


# ---------------------------------------------------------------------------
# reporting


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def rows_to_csv(rows: Sequence[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def read_csv(path: str | Path) -> list[ResultRow]:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            def num(k, cast=float):
                return cast(rec[k]) if rec[k] != "" else None

            out.append(ResultRow(
                experiment=rec["experiment"], day=num("day", int), algorithm=rec["algorithm"], order=rec["order"],
                quota=rec["quota"], sigma=num("sigma"), seed=int(rec["seed"]), matched=num("matched"),
                opt=num("opt"), ratio=num("ratio"), eta_prev_day=num("eta_prev_day"),
                wallclock_ms=num("wallclock_ms") or 0.0,
            ))
    return out


def mean_ratios(rows: Iterable[ResultRow], by: str = "sigma") -> dict[str, dict[Any, tuple[float, float, float]]]:
    """algorithm -> x -> (mean, min, max) of the ratio, skipping failed rows."""
    acc: dict[str, dict[Any, list[float]]] = {}
    for r in rows:
        if r.failed or r.ratio is None or math.isnan(r.ratio):
            continue
        acc.setdefault(r.algorithm, {}).setdefault(getattr(r, by), []).append(r.ratio)
    return {a: {x: (float(np.mean(v)), min(v), max(v)) for x, v in xs.items()} for a, xs in acc.items()}


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")


def _chart(title: str, xlabel: str, series: dict, y0: int, width=640, height=320) -> list[str]:
    left, right, top, bottom = 60, 150, 30, 40
    pw, ph = width - left - right, height - top - bottom
    xs = sorted({x for s in series.values() for x in s})
    if not xs:
        return []

    def px(x):
        k = xs.index(x)
        return left + (pw * k / (len(xs) - 1) if len(xs) > 1 else pw / 2)

    def py(y):
        y = min(max(y, 0.0), 1.05)
        return y0 + top + ph * (1 - y / 1.05)

    out = [f'<g font-family="sans-serif" font-size="11">',
           f'<text x="{left}" y="{y0 + 18}" font-size="13">{_esc(title)}</text>',
           f'<rect x="{left}" y="{y0 + top}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>']
    for t in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = py(t)
        out.append(f'<line x1="{left - 4}" y1="{y:.2f}" x2="{left + pw}" y2="{y:.2f}" stroke="#ddd"/>')
        out.append(f'<text x="{left - 8}" y="{y + 4:.2f}" text-anchor="end">{t:.2f}</text>')
    for x in xs:
        out.append(f'<text x="{px(x):.2f}" y="{y0 + top + ph + 16}" text-anchor="middle">{_esc(_xlabel(x))}</text>')
    out.append(f'<text x="{left + pw / 2:.2f}" y="{y0 + height - 4}" text-anchor="middle">{_esc(xlabel)}</text>')
    for k, (algo, pts) in enumerate(sorted(series.items())):
        color = _PALETTE[k % len(_PALETTE)]
        keys = sorted(pts)
        line = " ".join(f"{px(x):.2f},{py(pts[x][0]):.2f}" for x in keys)
        out.append(f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for x in keys:
            mean, lo, hi = pts[x]
            out.append(f'<line x1="{px(x):.2f}" y1="{py(lo):.2f}" x2="{px(x):.2f}" y2="{py(hi):.2f}" stroke="{color}"/>')
            out.append(f'<circle cx="{px(x):.2f}" cy="{py(mean):.2f}" r="2.5" fill="{color}"/>')
        ly = y0 + top + 14 * k + 8
        out.append(f'<line x1="{left + pw + 10}" y1="{ly}" x2="{left + pw + 30}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 34}" y="{ly + 4}">{_esc(algo)}</text>')
    out.append("</g>")
    return out


def _xlabel(x) -> str:
    return f"{x:g}" if isinstance(x, float) else str(x)


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def rows_to_svg(rows: Sequence[ResultRow]) -> str:
    """One line chart per experiment: mean ratio vs sigma (or vs day), min/max whiskers."""
    height = 320
    charts: list[str] = []
    for k, exp in enumerate(sorted({r.experiment for r in rows})):
        sub = [r for r in rows if r.experiment == exp]
        by_day = all(r.day is not None for r in sub)
        if any(r.order == "MIN" for r in sub):
            sub = [r for r in sub if r.order == "MIN"]
            title = f"{exp} (worst order)"
        else:
            title = exp
        series = mean_ratios(sub, by="day" if by_day else "sigma")
        charts += _chart(title, "day" if by_day else "sigma", series, y0=k * height)
    total = max(1, len({r.experiment for r in rows})) * height
    head = f'<svg xmlns="http://www.w3.org/2000/svg" width="640" height="{total}" viewBox="0 0 640 {total}">'
    return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>', *charts, "</svg>"]) + "\n"


def report(rows: Sequence[ResultRow], out_csv: str | Path | None, out_svg: str | Path | None = None) -> None:
    if not rows:
        raise ValueError("report needs at least one row")
    if out_csv is not None:
        Path(out_csv).write_text(rows_to_csv(rows), encoding="utf-8")
    if out_svg is not None:
        Path(out_svg).write_text(rows_to_svg(rows), encoding="utf-8")

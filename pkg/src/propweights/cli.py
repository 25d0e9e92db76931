"""Command line entry point: solve, weights, simulate, gen, experiment."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import genlab, harness
from .instance import load_instance, save_instance
from .online import Mode, Policy, learn_then_apply, random_permutation, run_ipw, run_pw, run_ranking, run_waterfill
from .optimum import min_vertex_cut, opt_value
from .weights import compute_weights, load_weights, save_weights

log = logging.getLogger("propweights")


def _dump(doc) -> None:
    sys.stdout.write(json.dumps(doc, sort_keys=True) + "\n")


def cmd_solve(args) -> int:
    inst = load_instance(args.instance)
    doc = {"opt": opt_value(inst)}
    if args.cut:
        doc["cut"] = min_vertex_cut(inst).to_dict()
    _dump(doc)
    return 0


def cmd_weights(args) -> int:
    inst = load_instance(args.instance)
    w = compute_weights(inst, args.epsilon, args.max_doublings)
    if args.output:
        save_weights(w, args.output)
    else:
        _dump(w.to_dict())
    log.info("R(alpha)=%.6g OPT=%.6g updates=%d", w.info["value"], w.info["opt"], w.info["updates"])
    return 0


def cmd_simulate(args) -> int:
    inst = load_instance(args.instance)
    stream = genlab.gen_arrival(inst, args.order.upper(), args.seed)
    algo = args.algo.upper()
    if args.learn_sigma is not None:
        if algo not in ("PW", "IPW"):
            raise SystemExit("--learn-sigma needs --algo pw or ipw")
        mode = {"discard": Mode.DISCARD_SAMPLE, "replay": Mode.REPLAY_WHOLE}[args.mode]
        res = learn_then_apply(inst, stream, args.learn_sigma, args.epsilon, mode, algo)
    elif algo in ("PW", "IPW"):
        if not args.weights:
            raise SystemExit(f"--algo {args.algo} needs --weights or --learn-sigma")
        w = load_weights(args.weights)
        res = (run_pw if algo == "PW" else run_ipw)(inst, stream, w)
    elif algo == "WATERFILL":
        res = run_waterfill(inst, stream)
    else:
        perm = random_permutation(inst, genlab.substream(args.seed, "ranking"))
        res = run_ranking(inst, stream, perm)
    sys.stdout.write(res.to_json() + "\n")
    return 0


def _gen_config(args) -> genlab.GeneratorConfig:
    cfg = genlab.load_config(args.config) if args.config else genlab.PRESETS[args.preset]
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.quota is not None:
        over["quota"] = args.quota.upper()
    return cfg.with_(**over) if over else cfg


def cmd_gen(args) -> int:
    if args.what == "synthetic":
        inst = genlab.gen_synthetic(_gen_config(args))
        save_instance(inst, args.output)
        log.info("n=%d types=%d edges=%d m=%d", inst.n, inst.num_types, inst.num_edges, inst.m)
        return 0
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    if args.what == "family":
        fam = genlab.gen_day_family(_gen_config(args), args.days, args.drift)
        days = dict(enumerate(fam.days))
    else:
        per_day = genlab.ingest_records(genlab.read_records(args.records), args.top_k)
        quota = (args.quota or "MAXMIN").upper()
        seed = args.seed or 0
        days = {d: genlab.apply_quota(inst, quota, genlab.derive_seed(seed, "quota-day", d)) for d, inst in per_day.items()}
    width = len(str(max(days)))
    for d, inst in days.items():
        save_instance(inst, out / f"day{d:0{width}d}.json")
    log.info("wrote %d day instances to %s", len(days), out)
    return 0


def cmd_experiment(args) -> int:
    cfg = harness.load_experiment_config(args.config)
    rows = harness.run_experiment(cfg, jobs=args.jobs)
    harness.report(rows, args.out, args.svg)
    failed = [r for r in rows if r.failed]
    for r in failed:
        log.error("failed cell: %s sigma=%s day=%s seed=%s: %s", r.algorithm, r.sigma, r.day, r.seed, r.error)
    if cfg.kind == harness.Kind.ROBUSTNESS.value:
        bad = harness.robustness_bound_violations(rows, cfg.epsilon)
        if bad:
            log.warning("%d PW_1 rows fall below (1-eps)OPT - 2 eta", len(bad))
    log.info("%d rows, %d failed", len(rows), len(failed))
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="propweights", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="exact offline optimum")
    s.add_argument("--instance", required=True)
    s.add_argument("--cut", action="store_true", help="also print the cut certificate")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("weights", help="compute proportional weights")
    s.add_argument("--instance", required=True)
    s.add_argument("--epsilon", type=float, default=0.1)
    s.add_argument("--max-doublings", type=int, default=4)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_weights)

    s = sub.add_parser("simulate", help="run one online allocator")
    s.add_argument("--instance", required=True)
    s.add_argument("--order", default="random", choices=[o.value.lower() for o in genlab.Order])
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--algo", required=True, choices=[x.value.lower() for x in Policy])
    s.add_argument("--weights")
    s.add_argument("--learn-sigma", type=float)
    s.add_argument("--epsilon", type=float, default=0.1)
    s.add_argument("--mode", choices=["discard", "replay"], default="replay")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("gen", help="generate or ingest instances")
    s.add_argument("what", choices=["synthetic", "family", "ingest"])
    s.add_argument("-o", "--output", required=True, help="file (synthetic) or directory (family, ingest)")
    s.add_argument("--preset", default="desk", choices=sorted(genlab.PRESETS))
    s.add_argument("--config", help="generator config JSON (overrides --preset)")
    s.add_argument("--seed", type=int)
    s.add_argument("--quota", choices=[q.value.lower() for q in genlab.Quota])
    s.add_argument("--days", type=int, default=21)
    s.add_argument("--drift", type=float, default=0.3)
    s.add_argument("--records", help="tab-separated record file (ingest)")
    s.add_argument("--top-k", type=int, default=20)
    s.set_defaults(func=cmd_gen)

    s = sub.add_parser("experiment", help="run an experiment config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True, help="CSV output")
    s.add_argument("--svg", help="SVG chart output")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "gen" and args.what == "ingest" and not args.records:
        raise SystemExit("gen ingest needs --records")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())

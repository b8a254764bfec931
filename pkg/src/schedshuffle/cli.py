"""Command-line entry point: corpus generation, policy sweeps, aggregation, oracle."""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .analysis import analyze
from .generator import GROUPS, TASK_COUNTS, GenerationError, generate_corpus, group_interval, load_corpus
from .metrics import TraceAccumulator, entropy_report, fmt
from .model import ConfigError, TaskSet
from .oracle import OracleRefusal, exact_slot_distribution_result
from .policies import POLICIES, SELECTIONS
from .simulator import DeadlineMissError, SimConfig, parse_exec_time, run

EXIT_OK, EXIT_CONFIG, EXIT_MISS = 0, 2, 3
SCHEMA = 1


def _int_list(text: str) -> list[int]:
    """``'0-3,7'`` -> ``[0, 1, 2, 3, 7]``."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def _names(text: str, allowed) -> list[str]:
    names = [s.strip() for s in text.split(",") if s.strip()]
    for n in names:
        if n not in allowed:
            raise ConfigError(f"unknown value {n!r}; expected one of {sorted(allowed)}")
    return names


def method_name(policy: str, selection: str, exec_time: str = "wcet") -> str:
    name = f"{policy}:{selection}"
    return name if exec_time == "wcet" else f"{name}@{exec_time}"


def _dump(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# gen

def cmd_gen(args) -> int:
    groups = _int_list(args.groups)
    for g in groups:
        group_interval(g)
    counts = _int_list(args.tasks_per_group)
    if args.sets_per_subgroup < 0:
        raise ConfigError("--sets-per-subgroup must be >= 0")
    manifest = generate_corpus(args.out, seed=args.seed, groups=groups, task_counts=counts,
                               sets_per_subgroup=args.sets_per_subgroup)
    print(f"wrote {len(manifest['sets'])} task sets to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# run

def _load_inputs(args):
    """``[(meta, TaskSet)]`` from a corpus directory or task-set files."""
    items = []
    if args.corpus:
        for entry, ts in load_corpus(args.corpus):
            items.append((entry, ts))
    for path in args.taskset or []:
        ts = TaskSet.load(path)
        name = ts.name or Path(path).stem
        items.append(({"name": name, "group": None}, ts))
    if not items:
        raise ConfigError("nothing to run: pass --corpus and/or --taskset")
    return items


def _run_job(job):
    meta, ts_dict, set_index, policy, selection, hps, exec_time, seed, strict, keep_slots = job
    ts = TaskSet.from_dict(ts_dict)
    cfg = SimConfig(policy=policy, selection=selection, hyper_periods=hps, seed=seed, exec_time=exec_time,
                    set_index=set_index, strict=strict, instrument=(policy == "tspp-approx"))
    acc = TraceAccumulator(ts)
    try:
        trace = run(ts, analyze(ts), cfg, sink=acc.add, keep_trace=False)
    except DeadlineMissError as exc:
        return {"name": meta["name"], "miss": {"slot": exc.slot, "task_id": ts[exc.task_index].id,
                                                "policy": policy, "selection": selection}}
    dist = acc.distribution()
    report = entropy_report(dist, ts, acc.range_ratios(), trace.switches_per_hyper_period)
    rep = report.to_dict()
    if not keep_slots:
        del rep["slot_min_entropy"]
    stats = dict(trace.stats)
    if "mean_budget_ratio" in stats:
        stats["mean_budget_ratio"] = fmt(stats["mean_budget_ratio"])
    return {
        "name": meta["name"],
        "result": {
            "schema": SCHEMA,
            "set": meta["name"],
            "group": meta.get("group"),
            "task_count": len(ts),
            "utilization": fmt(ts.utilization),
            "max_utilization": fmt(float(ts.utilizations.max())),
            "hyper_period": ts.hyper_period,
            "policy": policy,
            "selection": selection,
            "exec_time": exec_time,
            "method": method_name(policy, selection, exec_time),
            "hyper_periods": hps,
            "seed": seed,
            "set_index": set_index,
            "summary": trace.summary(),
            "stats": stats,
            "report": rep,
        },
        "distribution": dist.to_csv() if keep_slots else None,
    }


def _run_file_stem(result) -> str:
    return f"{result['set']}__{result['method'].replace(':', '_').replace('@', '__')}"


def _write_runs_table(out: Path) -> None:
    rows = [json.loads(p.read_text()) for p in sorted((out / "runs").glob("*.json"))]
    cols = ["set", "group", "method", "utilization", "max_utilization", "hyper_periods", "misses",
            "context_switches_per_hyper_period", "schedule_min_entropy", "schedule_shannon_entropy",
            "entropy_bound", "mean_range_ratio", "eps", "mean_budget_ratio"]
    with open(out / "runs.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            rep = r["report"]
            w.writerow([r["set"], "" if r["group"] is None else r["group"], r["method"], r["utilization"],
                        r["max_utilization"], r["hyper_periods"], r["summary"]["misses"],
                        rep["context_switches_per_hyper_period"], rep["schedule_min_entropy"],
                        rep["schedule_shannon_entropy"], rep["entropy_bound"], rep["mean_range_ratio"],
                        rep["eps"], r["stats"].get("mean_budget_ratio", "")])


def cmd_run(args) -> int:
    policies = _names(args.policy, POLICIES)
    selections = _names(args.selection, SELECTIONS)
    parse_exec_time(args.exec_time)
    if args.hyper_periods < 1:
        raise ConfigError("--hyper-periods must be >= 1")
    if args.workers < 1:
        raise ConfigError("--workers must be >= 1")
    items = _load_inputs(args)
    jobs = [
        (meta, ts.to_dict(), index, pol, sel, args.hyper_periods, args.exec_time, args.seed,
         args.strict_deadlines, args.save_distributions)
        for index, (meta, ts) in enumerate(items)
        for pol in policies
        for sel in selections
    ]
    out = Path(args.out)
    (out / "runs").mkdir(parents=True, exist_ok=True)
    if args.workers == 1:
        results = map(_run_job, jobs)
        pool = None
    else:
        pool = ProcessPoolExecutor(max_workers=args.workers)
        results = pool.map(_run_job, jobs)
    missed = []
    unstrict_misses = 0
    try:
        for res in results:
            if "miss" in res:
                missed.append(res)
                continue
            r = res["result"]
            stem = _run_file_stem(r)
            _dump(out / "runs" / f"{stem}.json", r)
            if res["distribution"] is not None:
                (out / "runs" / f"{stem}.dist.csv").write_text(res["distribution"])
            unstrict_misses += r["summary"]["misses"]
    finally:
        if pool is not None:
            pool.shutdown()
    _write_runs_table(out)
    for m in missed:
        d = m["miss"]
        print(f"deadline miss: set {m['name']} {d['policy']}:{d['selection']} task {d['task_id']} "
              f"at slot {d['slot']}", file=sys.stderr)
    if missed:
        return EXIT_MISS
    if unstrict_misses:
        print(f"warning: {unstrict_misses} deadline misses recorded", file=sys.stderr)
    print(f"wrote {len(jobs)} run reports to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# analyze

def _num(text):
    if text in ("", None):
        return None
    return float(text)


def _mean(values):
    values = [v for v in values if v is not None and math.isfinite(v)]
    return sum(values) / len(values) if values else None


def _group_label(group) -> str:
    return f"[{group / 10:.1f}, {(group + 1) / 10:.1f}]"


def cmd_analyze(args) -> int:
    rows = []
    for src in args.input:
        runs = Path(src) / "runs"
        if not runs.is_dir():
            raise ConfigError(f"{src} has no runs/ directory")
        rows.extend(json.loads(p.read_text()) for p in sorted(runs.glob("*.json")))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    cells = {}
    for r in rows:
        cells.setdefault((r["group"] if r["group"] is not None else -1, r["method"]), []).append(r)

    group_cols = ["group", "utilization_interval", "method", "sets", "mean_schedule_entropy",
                  "mean_schedule_min_entropy", "zero_min_entropy_percent", "mean_range_ratio",
                  "mean_budget_ratio", "mean_context_switches_per_hyper_period", "mean_eps"]
    with open(out / "groups.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(group_cols)
        for (group, method), rs in sorted(cells.items()):
            rep = [r["report"] for r in rs]
            h = [_num(x["schedule_min_entropy"]) for x in rep]
            zero = 100.0 * sum(1 for v in h if v == 0.0) / len(h)
            interval = "" if group < 0 else "[{:.2f}, {:.2f}]".format(*group_interval(group))
            w.writerow([
                "" if group < 0 else group, interval, method, len(rs),
                fmt(_mean(_num(x["schedule_shannon_entropy"]) for x in rep)),
                fmt(_mean(h)),
                fmt(zero),
                fmt(_mean(_num(x["mean_range_ratio"]) for x in rep)),
                fmt(_mean(_num(r["stats"].get("mean_budget_ratio")) for r in rs)),
                fmt(_mean(_num(x["context_switches_per_hyper_period"]) for x in rep)),
                fmt(_mean(_num(x["eps"]) for x in rep)),
            ])

    with open(out / "scatter.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["set", "group", "method", "max_utilization", "schedule_min_entropy", "entropy_bound"])
        for r in sorted(rows, key=lambda r: (r["method"], r["set"])):
            w.writerow([r["set"], "" if r["group"] is None else r["group"], r["method"], r["max_utilization"],
                        r["report"]["schedule_min_entropy"], r["report"]["entropy_bound"]])

    table_groups = [g for g in GROUPS if g >= 4]
    methods = sorted({m for (_, m) in cells})
    with open(out / "zero_entropy_table.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method"] + [_group_label(g) for g in table_groups])
        for m in methods:
            line = [m]
            for g in table_groups:
                rs = cells.get((g, m))
                if not rs:
                    line.append("")
                    continue
                zero = sum(1 for r in rs if _num(r["report"]["schedule_min_entropy"]) == 0.0)
                line.append(fmt(100.0 * zero / len(rs)))
            w.writerow(line)
    print(f"aggregated {len(rows)} runs into {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# oracle and inspect

def _taskset_arg(args) -> TaskSet:
    if args.taskset and args.pairs:
        raise ConfigError("pass either --taskset or --pairs, not both")
    if args.taskset:
        return TaskSet.load(args.taskset)
    if args.pairs:
        try:
            pairs = [tuple(int(x) for x in item.split(":")) for item in args.pairs.split(",")]
        except ValueError:
            raise ConfigError(f"--pairs expects 'period:wcet,...', got {args.pairs!r}") from None
        if any(len(p) != 2 for p in pairs):
            raise ConfigError(f"--pairs expects 'period:wcet,...', got {args.pairs!r}")
        return TaskSet.from_pairs(pairs)
    raise ConfigError("pass --taskset or --pairs")


def cmd_oracle(args) -> int:
    ts = _taskset_arg(args)
    _names(args.policy, POLICIES)
    _names(args.selection, SELECTIONS)
    try:
        res = exact_slot_distribution_result(ts, args.policy, args.selection, args.horizon,
                                             max_states=args.max_states)
    except OracleRefusal as exc:
        print(f"oracle refused: {exc}; use 'run' for a Monte-Carlo estimate", file=sys.stderr)
        return EXIT_CONFIG
    dist = res.distribution
    report = entropy_report(dist, ts)
    payload = {
        "schema": SCHEMA,
        "policy": args.policy,
        "selection": args.selection,
        "hyper_periods_iterated": res.hyper_periods,
        "peak_states": res.max_states,
        "miss_probability": fmt(res.miss_probability),
        "report": report.to_dict(),
        "distribution": dist.to_dict(),
    }
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _dump(out / "oracle.json", payload)
        (out / "distribution.csv").write_text(dist.to_csv())
    for q in args.query or []:
        try:
            slot, task_id = q.split(":")
            slot = int(slot)
            col = len(ts) if task_id == "idle" else ts.ids.index(int(task_id))
        except ValueError:
            raise ConfigError(f"--query expects 'slot:task_id', got {q!r}") from None
        if not 0 <= slot < dist.L:
            raise ConfigError(f"slot {slot} outside [0, {dist.L})")
        print(f"Pr(x_{slot} = {task_id}) = {fmt(dist.probs[slot, col])}")
    print(f"schedule min-entropy {fmt(report.schedule_min_entropy)} bits "
          f"(bound {fmt(report.entropy_bound)}), schedule entropy {fmt(report.schedule_shannon_entropy)} bits")
    return EXIT_OK


def cmd_inspect(args) -> int:
    ts = _taskset_arg(args)
    print(analyze(ts).to_json(ts))
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="schedshuffle", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
        p.add_argument("--out", required=out_required, help="output directory")
        p.add_argument("--workers", type=int, default=1, help="parallel worker processes")

    p = sub.add_parser("gen", help="generate a task-set corpus")
    common(p)
    p.add_argument("--groups", default="0-9", help="utilization groups, e.g. '0-9' or '2,5'")
    p.add_argument("--tasks-per-group", default=",".join(map(str, TASK_COUNTS)),
                   help="task counts, one subgroup each")
    p.add_argument("--sets-per-subgroup", type=int, default=1)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("run", help="simulate policies on task sets and write per-run reports")
    common(p)
    p.add_argument("--corpus", help="corpus directory containing manifest.json")
    p.add_argument("--taskset", action="append", help="task-set JSON file (repeatable)")
    p.add_argument("--policy", default="tspp-exact", help=f"comma list of {sorted(POLICIES)}")
    p.add_argument("--selection", default="weighted", help=f"comma list of {sorted(SELECTIONS)}")
    p.add_argument("--hyper-periods", type=int, default=1000)
    p.add_argument("--exec-time", default="wcet", help="'wcet' or 'uniform:<low>'")
    p.add_argument("--strict-deadlines", action="store_true", help="stop at the first deadline miss (exit 3)")
    p.add_argument("--save-distributions", action="store_true",
                   help="also write per-slot distributions and min-entropies")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("analyze", help="aggregate run reports into per-group tables")
    common(p)
    p.add_argument("input", nargs="+", help="run output directories")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("oracle", help="exact slot distribution of a tiny task set")
    common(p, out_required=False)
    p.add_argument("--taskset", help="task-set JSON file")
    p.add_argument("--pairs", help="inline task set 'period:wcet,...'")
    p.add_argument("--policy", default="tspp-exact")
    p.add_argument("--selection", default="uniform")
    p.add_argument("--horizon", type=int, help="report this hyper-period instead of the stationary one")
    p.add_argument("--max-states", type=int, default=200_000)
    p.add_argument("--query", action="append", help="print Pr for 'slot:task_id' (repeatable)")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("inspect", help="print the offline analysis of a task set as JSON")
    p.add_argument("--taskset", help="task-set JSON file")
    p.add_argument("--pairs", help="inline task set 'period:wcet,...'")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, GenerationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

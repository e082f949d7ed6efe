"""``vipkit`` command line: reproducible experiments over the library modules.

Every subcommand takes ``--spec exp.json`` (flags override its fields) and
writes into the spec's output directory, which is bound to the spec's hash by
``manifest.json``. CSV outputs start with a ``# vipkit spec_hash=...`` line.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import experiment as ex
from .commsim import collect_trace, fanout_label, geomean, h2d_volume, policy_rankings, sweep
from .errors import ConfigError, VipkitError
from .graph import read_binary_csr, read_roles, write_binary_csr, write_roles
from .partition import read_partition_labels, PartitionMap, write_partition_labels
from .pipesim import RESOURCES, costs_from_trace, simulate_pipeline
from .policies import build_cache
from .reorder import apply_reorder, build_reorder
from .sampling import SeedSpec
from .vip import partition_vip


def _csv_list(cast):
    def parse(text):
        try:
            return [cast(x) for x in text.split(",") if x.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad list {text!r}") from None
    return parse


class Context:
    """Spec, output directory and lazily loaded inputs of one CLI invocation."""

    def __init__(self, spec: dict, threads: int):
        self.spec = spec
        self.threads = threads
        self.out = ex.claim_dir(spec["output_dir"], spec)
        self.header = ex.header(spec)
        self._g = self._roles = self._part = None

    @property
    def seeds(self) -> SeedSpec:
        return SeedSpec(int(self.spec["seed"]))

    @property
    def graph(self):
        if self._g is None:
            p = self.out / "graph.vcsr"
            self._g = read_binary_csr(p) if p.exists() else ex.build_graph(self.spec)
        return self._g

    @property
    def roles(self):
        if self._roles is None:
            p = self.out / "roles.txt"
            n = self.graph.num_vertices
            self._roles = read_roles(p, n) if p.exists() else ex.build_roles(self.spec, n)
        return self._roles

    @property
    def part(self):
        if self._part is None:
            p = self.out / "parts.txt"
            if p.exists():
                labels = read_partition_labels(p, self.graph.num_vertices, self.spec["K"])
                self._part = PartitionMap(labels, self.spec["K"])
            else:
                self._part = ex.build_partition(self.spec, self.graph, self.roles)
        return self._part

    def fanouts(self):
        return [tuple(f) for f in self.spec["fanouts"]]

    def open_csv(self, name):
        fh = open(self.out / name, "w", newline="")
        fh.write(f"# {self.header}\n")
        return fh, csv.writer(fh)


# -- subcommands ------------------------------------------------------------


def cmd_gen(ctx: Context, args) -> None:
    out = Path(args.out) if args.out else ctx.out / "graph.vcsr"
    write_binary_csr(ctx.graph, out)
    roles_out = Path(args.roles_out) if args.roles_out else out.parent / "roles.txt"
    write_roles(ctx.roles, roles_out, ctx.header)
    print(f"wrote {out} (n={ctx.graph.num_vertices}, m={ctx.graph.num_edges}) and {roles_out}")


def cmd_partition(ctx: Context, args) -> None:
    out = ctx.out / "parts.txt"
    write_partition_labels(ctx.part, out, ctx.header)
    print(f"wrote {out} sizes={ctx.part.sizes.tolist()}")


def cmd_vip(ctx: Context, args) -> None:
    g, roles, part = ctx.graph, ctx.roles, ctx.part
    for fo in ctx.fanouts():
        d = ctx.out / "vip" / fanout_label(fo)
        d.mkdir(parents=True, exist_ok=True)
        for k in range(part.K):
            s = partition_vip(g, roles, part, k, ctx.spec["batch_size"], fo)
            s.write_binary(d / f"vip_{k}.bin")
            s.write_csv(d / f"vip_{k}.csv", comment=ctx.header)
    print(f"wrote VIP vectors under {ctx.out / 'vip'}")


def _rankings(ctx: Context, policy, fo, trace):
    return policy_rankings(policy, ctx.graph, ctx.roles, ctx.part, fo, ctx.spec["batch_size"],
                           ctx.seeds, trace, ctx.spec["sim_epochs"])


def _trace(ctx: Context, fo):
    return collect_trace(ctx.graph, ctx.roles, ctx.part, fo, ctx.spec["batch_size"],
                         ctx.spec["epochs"], ctx.seeds, threads=ctx.threads)


def cmd_rank(ctx: Context, args) -> None:
    for fo in ctx.fanouts():
        trace = _trace(ctx, fo) if "oracle" in ctx.spec["policies"] else None
        for policy in ctx.spec["policies"]:
            d = ctx.out / "rank" / policy / fanout_label(fo)
            d.mkdir(parents=True, exist_ok=True)
            for r in _rankings(ctx, policy, fo, trace):
                with open(d / f"rank_{r.partition}.txt", "w") as fh:
                    fh.write(f"# {ctx.header}\n")
                    for v in r.order.tolist():
                        fh.write(f"{v} {r.scores[v]!r}\n")
    print(f"wrote rankings under {ctx.out / 'rank'}")


def cmd_cache(ctx: Context, args) -> None:
    for fo in ctx.fanouts():
        trace = _trace(ctx, fo) if "oracle" in ctx.spec["policies"] else None
        for policy in ctx.spec["policies"]:
            ranks = _rankings(ctx, policy, fo, trace)
            for a in ctx.spec["alphas"]:
                plan = build_cache(ranks, a, ctx.graph.num_vertices)
                plan.write(ctx.out / "cache" / policy / fanout_label(fo) / f"alpha_{a!r}",
                           {"seed": ctx.spec["seed"], "fanouts": list(fo),
                            "spec_hash": ex.spec_hash(ctx.spec)})
    print(f"wrote cache plans under {ctx.out / 'cache'}")


def cmd_simulate(ctx: Context, args) -> None:
    res = sweep(ctx.graph, ctx.roles, ctx.part, ctx.fanouts(), ctx.spec["batch_size"],
                ctx.spec["epochs"], ctx.spec["alphas"], ctx.spec["policies"], ctx.seeds,
                ctx.spec["sim_epochs"], threads=ctx.threads, keep_traces=False)
    res.write_csv(ctx.out / "comm.csv", ctx.header)
    res.write_summary(ctx.out / "summary.csv", ctx.header)
    if args.trace:
        fo = ctx.fanouts()[0]
        tr = collect_trace(ctx.graph, ctx.roles, ctx.part, fo, ctx.spec["batch_size"],
                           ctx.spec["epochs"], ctx.seeds, keep_hops=True, threads=ctx.threads)
        tr.write_csv(ctx.out / f"trace_{fanout_label(fo)}.csv")
    print(f"wrote {ctx.out / 'comm.csv'} and {ctx.out / 'summary.csv'}")


def _vip_reorder(ctx: Context, fo):
    scores = [partition_vip(ctx.graph, ctx.roles, ctx.part, k, ctx.spec["batch_size"], fo)
              for k in range(ctx.part.K)]
    return build_reorder(ctx.part, scores)


def cmd_reorder(ctx: Context, args) -> None:
    fo = ctx.fanouts()[0]
    rmap = _vip_reorder(ctx, fo)
    d = ctx.out / "reorder"
    d.mkdir(exist_ok=True)
    rmap.write(d / "map.txt")
    g2, r2, p2 = apply_reorder(ctx.graph, ctx.roles, ctx.part, rmap)
    write_binary_csr(g2, d / "graph.vcsr")
    write_roles(r2, d / "roles.txt", ctx.header)
    write_partition_labels(p2, d / "parts.txt", ctx.header)

    trace = _trace(ctx, fo)
    fh, w = ctx.open_csv("h2d.csv")
    with fh:
        w.writerow(["ordering", "gamma", "fanouts", "epoch", "partition", "transfers"])
        for name in ("identity", "vip"):
            for gamma in ctx.spec["gammas"]:
                for k in range(ctx.part.K):
                    order = ctx.part.members[k] if name == "identity" else rmap.local_order(k)
                    vol = h2d_volume(ctx.graph, ctx.part, k, order, gamma, trace)
                    for e, t in enumerate(vol.tolist()):
                        w.writerow([name, gamma, fanout_label(fo), e, k, t])
    print(f"wrote {d} and {ctx.out / 'h2d.csv'}")


def cmd_pipeline(ctx: Context, args) -> None:
    cfg = ex.cluster_config(ctx.spec)
    if args.config:
        from .pipesim import ClusterConfig
        cfg = ClusterConfig.from_dict(dict(json.loads(Path(args.config).read_text()), K=ctx.spec["K"]))
    fo = ctx.fanouts()[0]
    gamma = args.gamma if args.gamma is not None else 0.1
    trace = _trace(ctx, fo)
    ranks = _rankings(ctx, ctx.spec["pipeline_policy"], fo, trace)
    orderings = [_vip_reorder(ctx, fo).local_order(k) for k in range(ctx.part.K)]
    fh, w = ctx.open_csv("pipeline.csv")
    last = None
    with fh:
        w.writerow(["mode", "alpha", "gamma", "makespan"] + [f"busy_{r}" for r in RESOURCES])
        for a in ctx.spec["alphas"]:
            plan = build_cache(ranks, a, ctx.graph.num_vertices)
            costs = costs_from_trace(trace, ctx.part, plan, orderings, gamma, epoch=0)
            for mode, piped in (("serial", False), ("pipelined", True)):
                r = simulate_pipeline(costs, cfg, piped)
                w.writerow([mode, a, gamma, repr(r.makespan)] + [repr(r.busy[x]) for x in RESOURCES])
                last = r
    last.write_csv(ctx.out / "pipeline_schedule.csv")
    last.write_timeline(ctx.out / "pipeline_timeline.csv")
    print(f"wrote {ctx.out / 'pipeline.csv'}")


def _read_csv(path):
    with open(path) as fh:
        rows = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(rows))


def cmd_report(ctx: Context, args) -> None:
    d = Path(args.input_dir) if args.input_dir else ctx.out
    summary = d / "summary.csv"
    if not summary.exists():
        raise ConfigError(f"{summary} not found; run `vipkit simulate` first")
    expected = ex.spec_hash(ctx.spec) if args.spec else None
    h = ex.check_csv_header(summary, expected)
    for extra in ("comm.csv", "h2d.csv", "pipeline.csv"):
        if (d / extra).exists():
            ex.check_csv_header(d / extra, h)

    rows = _read_csv(summary)
    policies = list(dict.fromkeys(r["policy"] for r in rows))
    alphas = sorted({float(r["alpha"]) for r in rows})
    misses, imp = {}, {}
    for r in rows:
        key = (r["policy"], float(r["alpha"]))
        misses.setdefault(key, []).append(float(r["avg_misses"]))
        imp.setdefault(key, []).append(float(r["improvement_vs_nocache"]))

    lines = [f"# vipkit spec_hash={h}",
             "average per-epoch remote misses (mean over fanouts) / geomean improvement vs no cache",
             "policy".ljust(8) + "".join(f"alpha={a:<12g}" for a in alphas)]
    for p in policies:
        cells = []
        for a in alphas:
            m = float(np.mean(misses[(p, a)]))
            cells.append(f"{m:.1f}/{geomean(imp[(p, a)]):.3f}".ljust(18))
        lines.append(p.ljust(8) + "".join(cells))
    (d / "report.txt").write_text("\n".join(lines) + "\n")

    with open(d / "improvement.dat", "w") as fh:
        fh.write(f"# vipkit spec_hash={h}\n# alpha " + " ".join(policies) + "\n")
        for a in alphas:
            vals = []
            for p in policies:
                g = geomean(imp[(p, a)])
                vals.append("nan" if math.isinf(g) else repr(g))
            fh.write(f"{a!r} " + " ".join(vals) + "\n")
    plot = [
        "set logscale y",
        "set xlabel 'replication factor'",
        "set ylabel 'geomean improvement vs no cache'",
        "set key top left",
        "plot " + ", ".join(f"'improvement.dat' using 1:{i + 2} with linespoints title '{p}'"
                            for i, p in enumerate(policies)),
    ]
    (d / "improvement.gp").write_text("\n".join(plot) + "\n")
    print("\n".join(lines))


COMMANDS = {
    "gen": cmd_gen, "partition": cmd_partition, "vip": cmd_vip, "rank": cmd_rank,
    "cache": cmd_cache, "simulate": cmd_simulate, "reorder": cmd_reorder,
    "pipeline": cmd_pipeline, "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", help="experiment spec JSON")
    common.add_argument("--out-dir", help="output directory (overrides spec output_dir)")
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: $VIPKIT_THREADS or 1)")
    common.add_argument("--seed", type=int, help="global sampling seed")
    common.add_argument("--K", type=int, help="number of partitions")
    common.add_argument("--fanouts", action="append", type=_csv_list(int),
                        help="comma separated fanouts, nearest hop first; repeatable")
    common.add_argument("--batch-size", type=int)
    common.add_argument("--epochs", type=int)
    common.add_argument("--alphas", type=_csv_list(float))
    common.add_argument("--policies", type=_csv_list(str))
    common.add_argument("--gammas", type=_csv_list(float))

    p = argparse.ArgumentParser(prog="vipkit", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate or import a graph and roles")
    g.add_argument("--kind")
    g.add_argument("--n", type=int)
    g.add_argument("--d", type=int)
    g.add_argument("--m", type=int)
    g.add_argument("--rows", type=int)
    g.add_argument("--cols", type=int)
    g.add_argument("--graph-seed", type=int)
    g.add_argument("--edge-list", help="import a text edge list instead of generating")
    g.add_argument("--directed", action="store_true", help="keep edge-list direction")
    g.add_argument("--train", type=float)
    g.add_argument("--out", help="binary CSR output path")
    g.add_argument("--roles-out")

    pp = sub.add_parser("partition", parents=[common], help="partition the graph")
    pp.add_argument("--method", choices=["random", "bfs_greedy", "from_file"])
    pp.add_argument("--labels", help="label file for --method from_file")
    pp.add_argument("--part-seed", type=int)

    for name, hlp in (("vip", "analytic VIP vectors per partition"),
                      ("rank", "per-partition rankings for every policy"),
                      ("cache", "cache plans for every policy and alpha"),
                      ("reorder", "VIP reordering and host-to-device volumes")):
        sub.add_parser(name, parents=[common], help=hlp)
    s = sub.add_parser("simulate", parents=[common], help="communication sweep over policies and alphas")
    s.add_argument("--trace", action="store_true", help="also write the sampling trace CSV")
    pl = sub.add_parser("pipeline", parents=[common], help="pipeline makespan per alpha")
    pl.add_argument("--config", help="cluster config JSON")
    pl.add_argument("--gamma", type=float)
    r = sub.add_parser("report", parents=[common], help="summary table of misses and improvement, plus gnuplot data")
    r.add_argument("--input-dir")
    return p


def _overrides(args) -> dict:
    o = {
        "seed": args.seed, "K": args.K, "fanouts": args.fanouts, "batch_size": args.batch_size,
        "epochs": args.epochs, "alphas": args.alphas, "policies": args.policies,
        "gammas": args.gammas, "output_dir": args.out_dir,
    }
    if args.command == "gen":
        if args.edge_list:
            o["graph"] = {"edge_list": args.edge_list, "undirected": not args.directed}
        elif args.kind:
            params = {k: getattr(args, k) for k in ("n", "d", "m", "rows", "cols")
                      if getattr(args, k) is not None}
            o["graph"] = {"kind": args.kind, "seed": args.graph_seed if args.graph_seed is not None
                          else (args.seed or 0), **params}
        if args.train is not None:
            o["roles"] = {"train": args.train, "seed": 0}
        if args.out and args.out_dir is None:
            o["output_dir"] = str(Path(args.out).parent)
    if args.command == "partition" and (args.method or args.labels or args.part_seed is not None):
        method = args.method or ("from_file" if args.labels else "bfs_greedy")
        o["partition"] = {"method": method, "seed": args.part_seed or 0}
        if args.labels:
            o["partition"]["path"] = args.labels
    return o


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        threads = args.threads if args.threads is not None else int(os.environ.get("VIPKIT_THREADS", "1"))
        if threads < 1:
            raise ConfigError("--threads must be >= 1")
        overrides = _overrides(args)
        if args.command == "gen" and args.seed is not None and "graph" in overrides:
            overrides.pop("seed")
        spec = ex.load_spec(args.spec, overrides)
        COMMANDS[args.command](Context(spec, threads), args)
    except (VipkitError, OSError, ValueError, KeyError) as exc:
        print(f"vipkit: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

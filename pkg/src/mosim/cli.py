"""Command-line front end.

Subcommands: simulate, generate, crash-sweep, compare, emit-plots.
Global flags --config/--trace/--seed/--out mirror the library entry
points.  Exit codes: 0 success, 2 trace parse error, 3 config error,
4 other simulation error.
"""

import argparse
import os
import sys

from . import config as cfgmod
from . import failure, report, runner, workload
from .errors import ConfigError, ParseError, SimulationError, UnsortedTrace

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_CONFIG = 3
EXIT_SIM = 4


def build_parser():
    p = argparse.ArgumentParser(
        prog="mosim",
        description="Trace-driven memory-over-storage controller simulator")
    p.add_argument("--config", help="YAML config file (defaults built in)")
    p.add_argument("--trace", help="trace file: '<tick> <L|S> <0xADDR> <size>'")
    p.add_argument("--seed", type=int, default=1, help="generator seed")
    p.add_argument("--out", default="out", help="output directory")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one platform over a trace")
    s.add_argument("--label", help="report label override")

    g = sub.add_parser("generate", help="write a synthetic trace")
    g.add_argument("--kind", choices=workload.GENERATOR_KINDS, required=True)
    g.add_argument("--footprint", type=int, required=True, help="bytes")
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--access-size", type=int, default=4096)
    g.add_argument("--tick-step", type=int, default=0, help="ps between records")

    c = sub.add_parser("crash-sweep", help="power-failure verdict per injection point")
    c.add_argument("--points", type=int, default=0,
                   help="sample N instants instead of every event boundary")

    sub.add_parser("compare", help="all controller platforms plus the mmap comparator")

    e = sub.add_parser("emit-plots", help="re-render figures from summary/breakdown CSVs")
    e.add_argument("--from-dir", required=True, help="directory holding the CSVs")

    sub.add_parser("write-config", help="write the default config YAML to --out")
    return p


def _load_config(args):
    if args.config:
        return cfgmod.load_config(args.config)
    return cfgmod.config_from_dict(None)


def _load_trace(args, cfg):
    if not args.trace:
        raise ParseError("--trace is required for this command")
    return workload.parse_trace(args.trace, cfg)


def cmd_simulate(args):
    cfg = _load_config(args)
    records = _load_trace(args, cfg)
    rep = runner.run_platform(cfg, records, label=args.label)
    os.makedirs(args.out, exist_ok=True)
    files = report.emit_report_bundle([rep], args.out)
    print(rep.summary_text())
    print("report bundle: %s" % ", ".join(sorted(files.values())))
    return EXIT_OK


def cmd_generate(args):
    cfg = _load_config(args)
    records = workload.generate(args.kind, args.footprint, args.count,
                                args.seed, access_size=args.access_size,
                                tick_step=args.tick_step)
    os.makedirs(args.out, exist_ok=True)
    path = args.trace or os.path.join(args.out, "%s.trace" % args.kind)
    workload.write_trace(records, path)
    print("wrote %d records to %s" % (len(records), path))
    return EXIT_OK


def cmd_crash_sweep(args):
    cfg = _load_config(args)
    records = _load_trace(args, cfg)
    if args.points:
        horizon = _probe_horizon(cfg, records)
        step = max(1, horizon // args.points)
        plan = failure.CrashPlan(injection_times=[i * step for i in range(1, args.points + 1)])
    else:
        plan = failure.CrashPlan(every_event=True)
    verdicts = failure.crash_sweep(cfg, records, plan)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "crash_sweep.csv")
    report.write_crash_csv(verdicts, path)
    bad = [v for v in verdicts if not v.ok]
    print("crash sweep: %d injection points, %d violations -> %s"
          % (len(verdicts), len(bad), path))
    return EXIT_OK if not bad else EXIT_SIM


def _probe_horizon(cfg, records):
    rep = runner.run_platform(cfg, records)
    return rep.makespan_ps


def cmd_compare(args):
    cfg = _load_config(args)
    records = _load_trace(args, cfg)
    reports = runner.run_comparison(cfg, records, workers=1)
    os.makedirs(args.out, exist_ok=True)
    files = report.emit_report_bundle(reports, args.out)
    for rep in reports:
        print(rep.summary_text())
        print()
    print("report bundle: %s" % ", ".join(sorted(files.values())))
    return EXIT_OK


def cmd_emit_plots(args):
    rows = report.read_breakdown_csv(os.path.join(args.from_dir, "breakdown.csv"))
    # rebuild minimal report shims for the renderers
    from .metrics import MetricsReport, read_reports_csv
    summary = read_reports_csv(os.path.join(args.from_dir, "summary.csv"))
    reports = []
    for row in summary:
        rep = MetricsReport(row["label"])
        rep.requests = int(row["requests"])
        rep.hits = int(row["hits"])
        rep.misses = int(row["misses"])
        rep.total_latency_ps = int(row["total_latency_ps"])
        rep.makespan_ps = int(row["makespan_ps"])
        rep.total_bytes = 0
        for cls in ("nvdimm", "flash_array", "interface", "queueing", "software"):
            rep.class_ps[cls] = int(row["lat_%s_ps" % cls])
        reports.append(rep)
    os.makedirs(args.out, exist_ok=True)
    report.render_breakdown_figure(reports, os.path.join(args.out, "breakdown.png"))
    report.render_amat_figure(reports, os.path.join(args.out, "amat.png"))
    report.render_throughput_figure(reports, os.path.join(args.out, "throughput.png"))
    print("figures written to %s" % args.out)
    return EXIT_OK


def cmd_write_config(args):
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "config.yaml")
    cfgmod.write_default_config(path)
    print("wrote %s" % path)
    return EXIT_OK


_COMMANDS = {
    "simulate": cmd_simulate,
    "generate": cmd_generate,
    "crash-sweep": cmd_crash_sweep,
    "compare": cmd_compare,
    "emit-plots": cmd_emit_plots,
    "write-config": cmd_write_config,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ParseError, UnsortedTrace) as exc:
        print("trace error: %s" % exc, file=sys.stderr)
        return EXIT_PARSE
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as exc:
        print("simulation error: %s" % exc, file=sys.stderr)
        return EXIT_SIM


if __name__ == "__main__":
    sys.exit(main())

"""Command-line surface: run, sweep, compare, gen-traces, validate, init-config."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import harness
from .scenario import PRESET_NAMES, default_config_text, load_config, preset
from .traces import generate_traces, load_traces, save_traces


def _scenario_from_args(args) -> "Scenario":
    if getattr(args, "config", None):
        scn = load_config(Path(args.config))
    else:
        scn = preset(args.preset)
    if getattr(args, "regime", None):
        slot = scn.slot_length_s
        if args.regime == "fast" and slot is None:
            slot = scn.model.layer_deadline_s / 10.0
        scn = replace(scn, regime=args.regime, slot_length_s=slot if args.regime == "fast" else None)
    if getattr(args, "trials", None):
        scn = replace(scn, trials=args.trials)
    return scn


def _traces_for(scn, args):
    if getattr(args, "traces", None):
        return load_traces(Path(args.traces))
    return generate_traces(
        scn.trace_spec, scn.model.num_layers, scn.model.num_experts, scn.model.top_k
    )


def _print_summary(rows, tokens):
    summary = harness.summarize(rows, tokens)
    header = f"{'scheme':<18} {'J/token':>12} {'latency s':>10} {'miss rate':>10} {'bound':>10}"
    print(header)
    print("-" * len(header))
    for scheme, stats in summary.items():
        print(
            f"{scheme:<18} {stats['mean_energy_per_token_j']:>12.6g} "
            f"{stats['mean_latency_s']:>10.4g} {stats['infeasible_token_rate']:>10.4g} "
            f"{stats['mean_bound']:>10.4g}"
        )


def cmd_run(args) -> int:
    scn = _scenario_from_args(args)
    traces = _traces_for(scn, args)
    rows, result = harness.run_all(scn, traces)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    harness.write_report_csv(rows, out / "report.csv")
    harness.write_plan_csv(result.plan_rows, out / "plan_trial0.csv", trial=0)
    if result.slot_rows:
        harness.write_slots_csv(result.slot_rows, out / "slots_trial0.csv", trial=0)
    _print_summary(rows, scn.trace_spec.tokens)
    if result.infeasible_layers:
        print(f"infeasible layer instances: {len(result.infeasible_layers)}")
    print(f"wrote {out / 'report.csv'}")
    return 0


def cmd_sweep(args) -> int:
    scn = _scenario_from_args(args)
    traces = _traces_for(scn, args)
    grid = [float(x) for x in args.grid.split(",")]
    rows = harness.sweep(scn, traces, args.axis, grid)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"report_{args.axis}.csv"
    harness.write_report_csv(rows, path)
    print(f"wrote {path}")
    return 0


def cmd_compare(args) -> int:
    scn = _scenario_from_args(args)
    traces = _traces_for(scn, args)
    rows, _ = harness.run_all(scn, traces)
    _print_summary(rows, scn.trace_spec.tokens)
    return 0


def cmd_gen_traces(args) -> int:
    scn = load_config(Path(args.spec)) if args.spec else preset(args.preset)
    traces = generate_traces(
        scn.trace_spec, scn.model.num_layers, scn.model.num_experts, scn.model.top_k
    )
    save_traces(traces, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_validate(args) -> int:
    import csv

    from .error_budget import SKIP, ExpertMapping
    from .selection import SelectionPlan

    scn = _scenario_from_args(args)
    traces = _traces_for(scn, args)
    by_layer: dict[int, list[dict]] = {}
    with open(args.plan) as fh:
        for record in csv.DictReader(fh):
            by_layer.setdefault(int(record["layer"]), []).append(record)

    plans: dict[int, SelectionPlan] = {}
    for layer, records in by_layer.items():
        records.sort(key=lambda r: int(r["token"]))
        token_nodes, token_mappings, token_bounds = [], [], []
        loads: dict[int, int] = {}
        for r in records:
            nodes = tuple(int(v) for v in r["nodes"].split(";") if v)
            targets = []
            for pair in r["mapping"].split(";"):
                _src, dst = pair.split(":")
                targets.append(SKIP if dst == "skip" else int(dst))
            token_nodes.append(nodes)
            token_mappings.append(ExpertMapping(tuple(targets)))
            token_bounds.append(float(r["bound"]))
            for v in nodes:
                loads[v] = loads.get(v, 0) + 1
        # The objective is not part of the plan file; recompute it for the
        # stored loads so the validator's objective check is meaningful.
        draw = harness.draw_channel(scn, args.trial)
        tables = harness._layer_tables(scn, draw, layer, traces[layer].num_tokens)
        objective = float(sum(tables[v].energies[loads.get(v, 0)] for v in sorted(tables)))
        plans[layer] = SelectionPlan(token_nodes, token_mappings, token_bounds, loads, objective)

    violations = harness.validate_plan(scn, traces, plans, trial=args.trial)
    if violations:
        for v in violations:
            print(f"VIOLATION: {v}")
        return 1
    print("ok")
    return 0


def cmd_init_config(args) -> int:
    text = default_config_text(args.preset)
    Path(args.out).write_text(text)
    print(f"wrote {args.out}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="siftmoe", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config_required=False):
        p.add_argument("--config", required=config_required, help="INI scenario file")
        if not config_required:
            p.add_argument("--preset", default="switch8", choices=PRESET_NAMES)
        p.add_argument("--regime", choices=["slow", "fast"], default=None)
        p.add_argument("--trials", type=int, default=None)
        p.add_argument("--traces", default=None, help="trace file (jsonl); default: synthetic")

    p = sub.add_parser("run", help="run all schemes, write report and plan CSVs")
    add_common(p)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="sweep one axis with common random numbers")
    add_common(p)
    p.add_argument("--axis", required=True, choices=list(harness.SWEEP_AXES))
    p.add_argument("--grid", required=True, help="comma-separated values (Hz, s, or cap)")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="print per-scheme aggregates")
    add_common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gen-traces", help="generate synthetic traces")
    p.add_argument("--spec", default=None, help="INI file with [traces] and [model]")
    p.add_argument("--preset", default="switch8", choices=PRESET_NAMES)
    p.add_argument("--out", default="traces.jsonl")
    p.set_defaults(func=cmd_gen_traces)

    p = sub.add_parser("validate", help="check a plan CSV against the constraints")
    add_common(p)
    p.add_argument("--plan", required=True)
    p.add_argument("--trial", type=int, default=0)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("init-config", help="write a preset as an editable INI")
    p.add_argument("--preset", default="switch8", choices=PRESET_NAMES)
    p.add_argument("--out", default="scenario.ini")
    p.set_defaults(func=cmd_init_config)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

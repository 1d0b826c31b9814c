"""Command-line entry point.

Exit codes: 0 success, 2 input or validation error, 3 a declared
expectation, demo stage or verification check failed.
"""

from __future__ import annotations

import argparse
import itertools
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import yaml

from strongfed.demo import demo_pegcycle
from strongfed.simnet.engine import sim_run
from strongfed.simnet.metrics import check_expectations
from strongfed.simnet.scenario import Scenario, ScenarioError, load_scenario, scenario_from_dict
from strongfed.simnet.trace import TraceError, read_trace, write_trace
from strongfed.verify import verify_trace

EXIT_OK, EXIT_INPUT, EXIT_FAILED = 0, 2, 3
REPORT_SCHEMA = "strongfed-report/1"

GRID_ALIASES = {"k": "federation.k", "n": "federation.n", "e": "adversary.equivocators"}


class UsageError(Exception):
    pass


# --- scenarios -------------------------------------------------------------------


def bundled_scenarios() -> dict[str, Path]:
    root = resources.files("strongfed") / "scenarios"
    return {Path(p.name).stem: Path(str(p)) for p in root.iterdir() if p.name.endswith(".yaml")}


def resolve_scenario(ref: str) -> Scenario:
    """Load a scenario from a file path, or by bundled name."""
    path = Path(ref)
    if path.is_file():
        try:
            return load_scenario(path)
        except OSError as e:
            raise ScenarioError(f"cannot read {ref}: {e}") from None
    bundled = bundled_scenarios()
    if ref in bundled:
        return load_scenario(bundled[ref])
    raise ScenarioError(f"{ref}: no such file or bundled scenario (bundled: {', '.join(sorted(bundled))})")


def _with_seed(sc: Scenario, seed: int | None) -> Scenario:
    if seed is None:
        return sc
    d = sc.to_dict()
    d["seed"] = seed
    return scenario_from_dict(d)


def _write_json(doc: Any, path: str | None) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


# --- simulate ----------------------------------------------------------------------


def simulate_document(sc: Scenario) -> tuple[dict, list[dict]]:
    metrics, trace = sim_run(sc)
    m = metrics.as_dict()
    rows = check_expectations(m, sc.expectations)
    doc = {
        "schema": REPORT_SCHEMA,
        "scenario": sc.to_dict(),
        "metrics": {k: v for k, v in m.items() if k != "scenario"},
        "expectations": rows,
        "passed": all(r["ok"] for r in rows),
    }
    return doc, trace


def _summary(doc: dict) -> list[str]:
    sc, m = doc["scenario"], doc["metrics"]
    f = sc["federation"]
    lines = [
        f"scenario {sc['name']} (seed {sc['seed']}, {sc['duration']:g} s, {f['k']}-of-{f['n']})",
        f"  blocks {m['blocks']}  forks {m['forks']}  stalls {len(m['stalls'])}  main height {m['main_height']}",
    ]
    if m.get("audit_final"):
        a = m["audit_final"]
        lines.append(f"  peg audit: locked {a['locked']}  circulating {a['circulating']}  max |delta| {m['audit_max_abs_delta']}")
    for r in doc["expectations"]:
        mark = "PASS" if r["ok"] else "FAIL"
        lines.append(f"  {mark}  {r['metric']}: expected {r['expected']}, got {r['actual']}")
    return lines


def cmd_simulate(args: argparse.Namespace) -> int:
    sc = _with_seed(resolve_scenario(args.scenario), args.seed)
    doc, trace = simulate_document(sc)
    if args.out:
        _write_json(doc, args.out)
    if args.trace:
        write_trace(trace, args.trace)
    if not args.quiet:
        print("\n".join(_summary(doc)))
    return EXIT_OK if doc["passed"] else EXIT_FAILED


# --- demo --------------------------------------------------------------------------


def cmd_demo(args: argparse.Namespace) -> int:
    say = None if args.quiet else print
    result = demo_pegcycle(break_auth=args.break_auth, say=say)
    if args.out:
        Path(args.out).write_text("\n".join(result.lines) + "\n")
    if result.failed_stage is not None:
        print(f"demo failed at stage: {result.failed_stage}", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


# --- verify ------------------------------------------------------------------------


def cmd_verify(args: argparse.Namespace) -> int:
    report = verify_trace(read_trace(args.trace_file))
    if report.violation is not None:
        print(f"INVALID {report.violation}")
        return EXIT_FAILED
    if not args.quiet:
        print(f"valid: {report.side_blocks} sidechain blocks, {report.main_blocks} main-chain blocks, {report.txs} transactions")
    return EXIT_OK


# --- sweep -------------------------------------------------------------------------


def _parse_values(text: str) -> list:
    out: list = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, _, hi = part.partition("..")
            try:
                a, b = int(lo), int(hi)
            except ValueError:
                raise UsageError(f"bad range {part!r}") from None
            if b < a:
                raise UsageError(f"empty range {part!r}")
            out.extend(range(a, b + 1))
        else:
            out.append(yaml.safe_load(part))
    return out


def parse_grid(items: Sequence[str]) -> dict[str, list]:
    """``["k=5,6", "n=8", "e=0..4"]`` -> ordered axis -> values."""
    grid: dict[str, list] = {}
    for item in items:
        key, sep, vals = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise UsageError(f"grid axis {item!r} is not KEY=VALUES")
        values = _parse_values(vals)
        if not values:
            raise UsageError(f"grid axis {key} has no values")
        grid[GRID_ALIASES.get(key, key)] = values
    if not grid:
        raise UsageError("empty parameter grid")
    return grid


def parse_seeds(text: str) -> list[int]:
    seeds = _parse_values(text)
    if not seeds:
        raise UsageError("empty seed list")
    if not all(isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in seeds):
        raise UsageError("seeds must be non-negative integers")
    return seeds


def _set_path(doc: dict, path: str, value: Any) -> None:
    parts = path.split(".")
    cur = doc
    for p in parts[:-1]:
        if cur.get(p) is None:
            cur[p] = {}
        cur = cur[p]
        if not isinstance(cur, dict):
            raise UsageError(f"grid axis {path}: {p} is not a section")
    cur[parts[-1]] = value


def sweep_cells(template: Scenario, grid: dict[str, list], seeds: Sequence[int]) -> list[tuple[dict, Scenario]]:
    """Validated scenarios for every grid point and seed, in grid order."""
    cells = []
    axes = list(grid)
    for combo in itertools.product(*(grid[a] for a in axes)):
        point = dict(zip(axes, combo))
        for seed in seeds:
            d = template.to_dict()
            d["expectations"] = {}
            d["seed"] = seed
            for path, value in point.items():
                _set_path(d, path, value)
            try:
                sc = scenario_from_dict(d)
            except ScenarioError as e:
                label = ", ".join(f"{k}={v}" for k, v in point.items())
                raise ScenarioError(f"grid cell {label}: {e}") from None
            cells.append((point, sc))
    return cells


def _run_cell(sc: Scenario) -> dict:
    m, _ = sim_run(sc)
    return {
        "blocks": m.blocks,
        "forks": m.forks,
        "fork_proof": m.fork_proof_constructed,
        "stall_time": m.stall_time,
        "halted": len(m.halted),
    }


def sweep(template: Scenario, grid: dict[str, list], seeds: Sequence[int], jobs: int = 1) -> dict:
    cells = sweep_cells(template, grid, seeds)
    scenarios = [sc for _, sc in cells]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell, scenarios))
    else:
        results = [_run_cell(sc) for sc in scenarios]
    runs = [{"point": point, "seed": sc.seed, **res} for (point, sc), res in zip(cells, results)]
    table: list[dict] = []
    for point, group in itertools.groupby(runs, key=lambda r: tuple(r["point"].items())):
        group = list(group)
        table.append(
            {
                "point": dict(point),
                "seeds": [r["seed"] for r in group],
                "min_blocks": min(r["blocks"] for r in group),
                "forked_runs": sum(1 for r in group if r["forks"]),
                "fork_proofs": sum(1 for r in group if r["fork_proof"]),
                "stalled_runs": sum(1 for r in group if r["stall_time"] > 0),
            }
        )
    return {"schema": REPORT_SCHEMA, "template": template.name, "grid": grid, "seeds": list(seeds), "cells": table, "runs": runs}


def _short(path: str) -> str:
    for alias, full in GRID_ALIASES.items():
        if full == path:
            return alias
    return path


def render_sweep(report: dict) -> list[str]:
    axes = list(report["grid"])
    heads = [_short(a) for a in axes] + ["seeds", "min blocks", "forked", "fork proofs", "stalled"]
    rows = [
        [str(c["point"][a]) for a in axes]
        + [str(len(c["seeds"])), str(c["min_blocks"]), str(c["forked_runs"]), str(c["fork_proofs"]), str(c["stalled_runs"])]
        for c in report["cells"]
    ]
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(heads)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(heads, widths))]
    lines += ["  ".join(v.rjust(w) for v, w in zip(r, widths)) for r in rows]
    lines += boundary_lines(report)
    return lines


def boundary_lines(report: dict) -> list[str]:
    """Per (k, n): the smallest equivocator count that produced a fork."""
    e_axis, k_axis, n_axis = GRID_ALIASES["e"], GRID_ALIASES["k"], GRID_ALIASES["n"]
    if e_axis not in report["grid"]:
        return []
    first: dict[tuple, int | None] = {}
    for c in report["cells"]:
        p = c["point"]
        key = (p.get(k_axis), p.get(n_axis))
        first.setdefault(key, None)
        if c["forked_runs"] and (first[key] is None or p[e_axis] < first[key]):
            first[key] = p[e_axis]
    out = []
    for (k, n), e in first.items():
        label = f"k={k} n={n}" if k is not None and n is not None else "template"
        found = f"forks first at e={e}" if e is not None else "no forks in grid"
        expect = f" (2k-n = {2 * k - n})" if k is not None and n is not None else ""
        out.append(f"{label}: {found}{expect}")
    return out


def cmd_sweep(args: argparse.Namespace) -> int:
    seeds = parse_seeds(args.seeds)
    grid = parse_grid(args.grid)
    template = resolve_scenario(args.scenario)
    if args.duration is not None:
        d = template.to_dict()
        d["duration"] = args.duration
        template = scenario_from_dict(d)
    report = sweep(template, grid, seeds, jobs=args.jobs)
    if args.out:
        _write_json(report, args.out)
    if not args.quiet:
        print("\n".join(render_sweep(report)))
    return EXIT_OK


# --- list --------------------------------------------------------------------------


def cmd_scenarios(args: argparse.Namespace) -> int:
    for name, path in sorted(bundled_scenarios().items()):
        sc = load_scenario(path)
        desc = " ".join(sc.description.split())
        print(f"{name:20s} {desc[:100]}")
    return EXIT_OK


# --- entry -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="strongfed", description="Federated sidechain simulator and peg tools.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one scenario and check its expectations")
    s.add_argument("scenario", help="scenario file, or the name of a bundled scenario")
    s.add_argument("--seed", type=int, help="override the scenario seed")
    s.add_argument("--out", help="write the metrics document here ('-' for stdout)")
    s.add_argument("--trace", help="write the event trace here")
    s.add_argument("--quiet", action="store_true", help="suppress the summary")
    s.set_defaults(fn=cmd_simulate)

    d = sub.add_parser("demo-pegcycle", help="scripted lock, mint, transfer, swap, peg-out and withdrawal")
    d.add_argument("--break-auth", action="store_true", help="send the peg-out without its authorization proof")
    d.add_argument("--out", help="also write the narrative log here")
    d.add_argument("--quiet", action="store_true")
    d.set_defaults(fn=cmd_demo)

    v = sub.add_parser("verify", help="independently re-validate a trace")
    v.add_argument("trace_file")
    v.add_argument("--quiet", action="store_true")
    v.set_defaults(fn=cmd_verify)

    w = sub.add_parser("sweep", help="run a scenario across a parameter grid and seeds")
    w.add_argument("scenario", help="template scenario file or bundled name")
    w.add_argument("grid", nargs="+", help="axes such as k=5,6 n=8 e=0..4 or network.drop_rate=0,0.01")
    w.add_argument("--seeds", default="0", help="seed list, e.g. 0,1,2 or 0..9 (default 0)")
    w.add_argument("--duration", type=float, help="override the template duration (seconds)")
    w.add_argument("--jobs", type=int, default=1, help="run cells in this many processes")
    w.add_argument("--out", help="write the sweep report here ('-' for stdout)")
    w.add_argument("--quiet", action="store_true")
    w.set_defaults(fn=cmd_sweep)

    ls = sub.add_parser("scenarios", help="list bundled scenarios")
    ls.set_defaults(fn=cmd_scenarios)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code else EXIT_OK
    try:
        return args.fn(args)
    except (ScenarioError, TraceError, UsageError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

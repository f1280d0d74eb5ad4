"""Command-line entry point.

Exit codes: 0 success, 1 error (bad input, schema violation, I/O), 2 golden
mismatch. Outputs are JSON, CSV or JSON-lines only.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .core import CapacityError, DomainError

log = logging.getLogger("spa")

EXIT_OK, EXIT_ERROR, EXIT_MISMATCH = 0, 1, 2


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _emp(text: str) -> str:
    if text in ("task", "full") or (text.startswith("marginal:") and len(text) > len("marginal:")):
        return text
    raise argparse.ArgumentTypeError("--emp must be task, full or marginal:<space>")


def _source(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--builtin", help="name of a built-in scenario")
    g.add_argument("--file", type=Path, help="path to a scenario JSON document")


def _overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--m", type=int, help="maximum plan length")
    p.add_argument("--n", type=int, help="empowerment horizon in policies")
    p.add_argument("--tf", type=int, help="final time T_f")
    p.add_argument("--emp", type=_emp, help="empowerment variant: task, full or marginal:<space>")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    common.add_argument("--seed", type=int, default=0, help="seed for randomized benchmark placements")
    common.add_argument("--parallel", action="store_true",
                        help="compute independent empowerment horizons in worker processes")
    ap = argparse.ArgumentParser(prog="spa", description="Factorized goal-conditioned planning with empowerment.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common], help="run a scenario and compare against its golden values")
    _source(p)
    _overrides(p)
    p.add_argument("--out", type=Path, help="directory for plan_report.json and metrics.json")
    p.add_argument("--format", choices=("json", "csv"), default="json", help="plan report format")

    p = sub.add_parser("empmap", parents=[common], help="grid empowerment heatmaps as CSV")
    _source(p)
    p.add_argument("--ns", type=_ints, help="horizons, e.g. 1,3,5 (default from the scenario)")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")

    p = sub.add_parser("bench", parents=[common], help="timing benchmarks as CSV")
    p.add_argument("kind", choices=("scaling", "large_grid"))
    p.add_argument("--max-spaces", type=int, default=4, help="scaling: largest number of secondary spaces")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--N", type=_ints, default=[25, 100], help="large_grid: grid sizes (perfect squares)")
    p.add_argument("--niss", type=int, default=2, help="large_grid: number of secondary spaces")
    p.add_argument("--methods", default="ihdr,spa", help="scaling: comma-separated methods")
    p.add_argument("--out", type=Path, help="CSV path (default stdout)")

    p = sub.add_parser("lifelong", parents=[common], help="run the lifelong learning loop")
    _source(p)
    p.add_argument("--prior", type=float, help="point-mass valence prior for unknown features (bits)")
    p.add_argument("--m", type=int, help="plan length for every environment")
    p.add_argument("--n", type=int, help="empowerment horizon")
    p.add_argument("--out", type=Path, help="directory for lifelong.jsonl and transfer_report.json")

    p = sub.add_parser("validate", parents=[common], help="check scenario documents against the schema")
    p.add_argument("files", nargs="+", type=Path)

    p = sub.add_parser("export", parents=[common], help="print a built-in scenario document or the schema")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--builtin")
    g.add_argument("--schema", action="store_true")

    sub.add_parser("list", parents=[common], help="list built-in scenarios")
    return ap


def _load(args):
    from .scenarios import load_scenario
    return load_scenario(args.builtin if args.builtin else args.file)


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _print_golden(rows) -> None:
    for r in rows:
        mark = "ok" if r["ok"] else "MISMATCH"
        print(f"{mark:8s} {r['metric']}: expected {r['expected']!r} (tol {r['tol']}), got {r['actual']!r}"
              + (f"  [{r['tag']}]" if r["tag"] else ""))


def cmd_solve(args) -> int:
    from .scenarios import run_scenario
    sc = _load(args)
    overrides = dict(m=args.m, n=args.n, emp=args.emp, horizon=args.tf)
    if any(v is not None for v in overrides.values()):
        sc = sc.with_overrides(**overrides)
        sc.doc.pop("expected", None)
        log.info("overrides given; golden values skipped")
    result = run_scenario(sc)
    summary = {k: result[k] for k in ("scenario", "pipeline", "metrics", "golden", "status")}
    if args.out:
        if "report" in result:
            if args.format == "json":
                _write_json(args.out / "plan_report.json", result["report"])
            else:
                _write_report_csv(args.out / "plan_report.csv", result["report"])
        if "log" in result:
            args.out.mkdir(parents=True, exist_ok=True)
            (args.out / "lifelong.jsonl").write_text(result["log"])
        _write_json(args.out / "metrics.json", summary)
    print(json.dumps({"scenario": sc.name, "status": result["status"],
                      **({"best": result["metrics"]["best"]} if "best" in result["metrics"] else {})}))
    _print_golden(result["golden"])
    return EXIT_OK if result["status"] == "ok" else EXIT_MISMATCH


def _write_report_csv(path: Path, report: dict) -> None:
    import csv
    path.parent.mkdir(parents=True, exist_ok=True)
    best = report["best"]["policies"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["policies", "final_state", "final_empowerment", "valence", "best"])
        for e in report["plans"]:
            w.writerow([" ".join(e["policies"]), json.dumps(e["final_state"], sort_keys=True),
                        f"{e['final_empowerment']:.12g}", f"{e['valence']:.12g}", int(e["policies"] == best)])


def cmd_empmap(args) -> int:
    from .scenarios import compare_golden, run_empmap, write_empmaps
    sc = _load(args)
    ns = args.ns if args.ns is not None else sc.params.get("ns", [1, 3, 5])
    if not ns or any(n < 1 for n in ns):
        raise DomainError("empowerment horizons must be >= 1")
    if args.parallel:
        with ProcessPoolExecutor() as pool:
            result = run_empmap(sc, ns, pool)
    else:
        result = run_empmap(sc, ns)
    paths = write_empmaps(result, args.out)
    for p in paths:
        print(p)
    rows = compare_golden(result["metrics"], {k: v for k, v in sc.doc.get("expected", {}).items()
                                              if k in result["metrics"]})
    _print_golden(rows)
    return EXIT_OK if all(r["ok"] for r in rows) else EXIT_MISMATCH


def cmd_bench(args) -> int:
    from .baseline import BENCH_COLUMNS, large_grid_benchmark, scaling_benchmark, write_benchmark_csv
    if args.trials < 0:
        raise DomainError("--trials must be >= 0")
    if args.kind == "scaling":
        methods = tuple(m for m in args.methods.split(",") if m)
        rows = scaling_benchmark(range(1, args.max_spaces + 1), args.trials, args.seed, methods=methods)
    else:
        rows = large_grid_benchmark(tuple(args.N), args.niss, trials=args.trials, seed=args.seed)
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        write_benchmark_csv(rows, args.out)
        print(args.out)
    else:
        import csv
        w = csv.DictWriter(sys.stdout, fieldnames=BENCH_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{r[k]:.6f}" if k == "seconds" else r[k]) for k in BENCH_COLUMNS})
    return EXIT_OK


def cmd_lifelong(args) -> int:
    from .scenarios import ScenarioError, run_scenario
    sc = _load(args)
    if sc.pipeline != "lifelong":
        raise ScenarioError(f"scenario {sc.name!r} has no ground-truth transformations (pipeline {sc.pipeline})")
    p = sc.doc.setdefault("params", {})
    changed = False
    for key, val in (("prior", args.prior), ("m", args.m), ("n", args.n)):
        if val is not None:
            p[key] = val
            changed = True
    if args.m is not None:
        for env in sc.doc["environments"]:
            env.pop("m", None)
    if changed:
        sc.doc.pop("expected", None)
    result = run_scenario(sc)
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "lifelong.jsonl").write_text(result["log"])
        _write_json(args.out / "transfer_report.json",
                    {k: result[k] for k in ("scenario", "metrics", "golden", "status")})
    else:
        sys.stdout.write(result["log"])
    _print_golden(result["golden"])
    return EXIT_OK if result["status"] == "ok" else EXIT_MISMATCH


def cmd_validate(args) -> int:
    from .scenarios import load_scenario
    bad = 0
    for f in args.files:
        try:
            load_scenario(f)
            print(f"{f}: valid")
        except DomainError as exc:
            print(f"{f}: {exc}", file=sys.stderr)
            bad += 1
    return EXIT_ERROR if bad else EXIT_OK


def cmd_export(args) -> int:
    from .scenarios import builtin_document, schema
    doc = schema() if args.schema else builtin_document(args.builtin)
    print(json.dumps(doc, indent=2))
    return EXIT_OK


def cmd_list(args) -> int:
    from .scenarios import BUILTINS, builtin_names
    for name in builtin_names():
        print(f"{name}\t{BUILTINS[name].get('pipeline', 'plan')}")
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "empmap": cmd_empmap, "bench": cmd_bench, "lifelong": cmd_lifelong,
            "validate": cmd_validate, "export": cmd_export, "list": cmd_list}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (DomainError, CapacityError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

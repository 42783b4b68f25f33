#!/usr/bin/env python3
"""Command-line surface for RMA systems on triangulated Laman graphs.

Exit codes: 0 verdict pass, 2 degenerate orbit or formula violation, 1 error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import pandas as pd

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from src.analysis import (  # noqa: E402
    AnalysisError,
    canonical_partition,
    check_index_formula,
    check_inertia_formula,
    enumerate_line_equilibria,
    orbit_record,
)
from src.dynamics import Configuration, DynamicsError, flow, newton_refine  # noqa: E402
from src.harness import (  # noqa: E402
    SpecError,
    Tolerances,
    load_sampler,
    load_system_spec,
    load_tolerances,
    morse_report,
    run_genericity_scan,
)
from src.interaction_laws import LawError  # noqa: E402
from src.tlg_graph import TLGError  # noqa: E402

log = logging.getLogger("rmas_runner")

EXIT_OK, EXIT_ERROR, EXIT_VIOLATION = 0, 1, 2
DEFAULT_TOLERANCES = ROOT / "configs" / "tolerances.v1.json"


# ----------------------- helpers -----------------------
def _tolerances(args, spec=None) -> tuple[Tolerances, dict | None]:
    tol, meta = load_tolerances(args.tolerances)
    if spec is not None:
        tol = tol.override(**spec.tolerances)
    return tol.override(col_tol=args.tol_collinear, zero_tol=args.tol_zero_eig), meta


def _start(spec, args) -> Configuration:
    if args.positions:
        return Configuration.from_points(json.loads(args.positions))
    starts = spec.starts()
    if not starts:
        raise SpecError("no initial configuration in the system file; pass --positions")
    k = args.start or 0
    if not 0 <= k < len(starts):
        raise SpecError(f"--start {k} out of range (have {len(starts)})")
    return starts[k]


def _equilibrium(spec, args, tol: Tolerances) -> Configuration:
    cfg = _start(spec, args)
    if args.no_refine:
        return cfg
    fr = flow(spec.system, cfg, tol.flow_tol, tol.flow_t_max, tol.rtol, tol.atol, tol.collision_floor)
    return newton_refine(spec.system, fr.config)


# ----------------------- output writers -----------------------
def write_jsonl(records: list[dict], out: str | Path | None = None):
    text = "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)
    _emit(text, out)


def write_json(records: list[dict], out: str | Path | None = None):
    _emit(json.dumps(records, indent=2, sort_keys=True) + "\n", out)


def _flat(v):
    return json.dumps(v) if isinstance(v, (list, dict)) else v


def write_csv(records: list[dict], csv_path: str | Path | None = None):
    """Flatten records with pandas; a final `__aggregate__` row carries column means."""
    df = pd.json_normalize(records)
    for c in df.columns:
        df[c] = df[c].map(_flat)
    df.insert(0, "id", [f"{r.get('kind', 'row')}-{i}" for i, r in enumerate(records)])
    footer = {"id": "__aggregate__", **df.select_dtypes("number").mean().round(6).to_dict()}
    df = pd.concat([df, pd.DataFrame([footer])], ignore_index=True)
    _emit(df.to_csv(index=False), csv_path)


SCORECARD_COLUMNS = [
    "kind", "inertia", "nondegenerate", "case_vector", "holds", "orbits", "degenerate", "repaired", "residual",
]


def write_scorecard(records: list[dict], md: str | Path | None = None):
    def fmt(x):
        if x is None:
            return "—"
        if isinstance(x, float):
            return f"{x:.3g}"
        return str(x)

    cols = [c for c in SCORECARD_COLUMNS if any(c in r for r in records)]
    lines = ["# RMAS Scorecard", ""]
    verdict = next((r for r in records if r.get("kind") in ("verdict", "summary")), None)
    if verdict is not None:
        ok = verdict.get("equivariant_morse", verdict.get("passed"))
        lines += [f"**Verdict:** {'pass' if ok else 'fail'}", ""]
    lines += ["| # | " + " | ".join(cols) + " |", "|---|" + "---|" * len(cols)]
    for i, r in enumerate(records):
        if r is verdict:
            continue
        lines.append(f"| {i} | " + " | ".join(fmt(r.get(c)) for c in cols) + " |")
    _emit("\n".join(lines) + "\n", md)


WRITERS = {"jsonl": write_jsonl, "json": write_json, "csv": write_csv, "md": write_scorecard}


def _emit(text: str, out: str | Path | None):
    if out:
        Path(out).write_text(text, encoding="utf-8")
        print(f"[ok] wrote {out}", file=sys.stderr)
    else:
        sys.stdout.write(text)


# ----------------------- verbs -----------------------
def cmd_validate(args) -> tuple[list[dict], int]:
    spec = load_system_spec(args.spec)
    g = spec.system.graph
    rec = {
        "kind": "system",
        "graph": g.to_dict(),
        "edges": [list(e) for e in g.edge_list],
        "laws": spec.system.ensemble.describe(),
        "class_f": spec.system.ensemble.admissible,
        "initial_configurations": len(spec.initial_configurations),
        "meta": spec.meta,
    }
    return [rec], EXIT_OK


def cmd_partition(args) -> tuple[list[dict], int]:
    spec = load_system_spec(args.spec)
    tol, _ = _tolerances(args, spec)
    cfg = _equilibrium(spec, args, tol) if args.refine else _start(spec, args)
    part = canonical_partition(spec.system.graph, cfg, tol.col_tol)
    return [{"kind": "partition", "positions": cfg.points().tolist(), "partition": part.to_list()}], EXIT_OK


def cmd_inertia(args) -> tuple[list[dict], int]:
    spec = load_system_spec(args.spec)
    tol, _ = _tolerances(args, spec)
    rec = orbit_record(spec.system, _equilibrium(spec, args, tol), tol.col_tol, tol.zero_tol)
    return [{"kind": "equilibrium", **rec.to_dict()}], EXIT_OK if rec.nondegenerate else EXIT_VIOLATION


def cmd_flow(args) -> tuple[list[dict], int]:
    spec = load_system_spec(args.spec)
    tol, _ = _tolerances(args, spec)
    out = []
    starts = [_start(spec, args)] if args.positions else spec.starts()
    for k, cfg in enumerate(starts):
        fr = flow(spec.system, cfg, tol.flow_tol, tol.flow_t_max, tol.rtol, tol.atol, tol.collision_floor)
        rec = {"kind": "flow", "start": k, **fr.to_dict()}
        if args.refine:
            rec["refined"] = newton_refine(spec.system, fr.config).to_dict()
        out.append(rec)
    return out, EXIT_OK


def cmd_line_eq(args) -> tuple[list[dict], int]:
    spec = load_system_spec(args.spec)
    tol, _ = _tolerances(args, spec)
    recs = enumerate_line_equilibria(spec.system, tol.col_tol, tol.zero_tol, tol.residual_tol, tol.dedup_tol)
    code = EXIT_OK if all(r.nondegenerate for r in recs) else EXIT_VIOLATION
    return [{"kind": "line_orbit", **r.to_dict()} for r in recs], code


def cmd_check(args) -> tuple[list[dict], int]:
    spec = load_system_spec(args.spec)
    tol, _ = _tolerances(args, spec)
    system = spec.system
    if args.formula == "index-formula":
        cfg = _equilibrium(spec, args, tol)
        rep = check_index_formula(system, cfg, tol.col_tol, tol.zero_tol, tol.residual_tol)
        out = [{"kind": "index_formula", **rep.to_dict()}]
    elif args.positions or args.start is not None:
        cfg = _equilibrium(spec, args, tol)
        rep = check_inertia_formula(system, cfg, tol.col_tol, tol.zero_tol, tol.residual_tol)
        out = [{"kind": "inertia_formula", **rep.to_dict()}]
    else:
        out = []
        for r in enumerate_line_equilibria(system, tol.col_tol, tol.zero_tol, tol.residual_tol, tol.dedup_tol):
            rep = check_inertia_formula(system, r.configuration, tol.col_tol, tol.zero_tol, tol.residual_tol)
            out.append({"kind": "inertia_formula", "case_vector": [c.value for c in r.case_vector], **rep.to_dict()})
    return out, EXIT_OK if all(r["holds"] for r in out) else EXIT_VIOLATION


def cmd_scan(args) -> tuple[list[dict], int]:
    spec = load_system_spec(args.spec)
    tol, meta = _tolerances(args, spec)
    injected = []
    for path in args.inject or []:
        other = load_system_spec(path)
        if other.system.graph.edges != spec.system.graph.edges:
            raise SpecError(f"{path}: injected ensemble is defined on a different graph")
        injected.append(other.system.ensemble)
    report = run_genericity_scan(
        spec.system.graph,
        load_sampler(args.sampler),
        samples=args.samples,
        seed=args.seed,
        workers=args.workers,
        tolerances=tol,
        extra_ensembles=injected,
    )
    print(f"[ok] scan: {report.samples} samples in {report.wall_time:.2f}s", file=sys.stderr)
    records = report.to_records()
    if meta:
        records[-1]["tolerance_config"] = meta
    return records, EXIT_OK if report.passed else EXIT_VIOLATION


def cmd_report(args) -> tuple[list[dict], int]:
    spec = load_system_spec(args.spec)
    tol, _ = _tolerances(args, spec)
    report = morse_report(spec, tol)
    return report.to_records(), EXIT_OK if report.passed else EXIT_VIOLATION


# ----------------------- entry point -----------------------
def _add_common(p: argparse.ArgumentParser):
    p.add_argument("spec", help="system definition file (YAML/JSON), or - for stdin")
    p.add_argument("--tol-collinear", type=float, default=None, help="collinearity tolerance")
    p.add_argument("--tol-zero-eig", type=float, default=None, help="zero-eigenvalue tolerance")
    p.add_argument("--tolerances", default=str(DEFAULT_TOLERANCES), help="tolerance config JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None, help="output path (default: stdout)")
    p.add_argument("--format", choices=sorted(WRITERS), default="jsonl")
    p.add_argument("-v", "--verbose", action="count", default=0)


def _add_start(p: argparse.ArgumentParser, refine: str):
    p.add_argument("--start", type=int, default=None, help="index into the file's initial configurations (default 0)")
    p.add_argument("--positions", default=None, help="JSON list of [a, b] points, overrides --start")
    if refine == "opt-in":
        p.add_argument("--refine", action="store_true", help="flow and Newton-refine to an equilibrium first")
        p.set_defaults(no_refine=False)
    else:
        p.add_argument("--no-refine", action="store_true", help="use the start as given")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(description="RMA systems on triangulated Laman graphs")
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("validate", help="parse and validate a system file")
    _add_common(p)
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("partition", help="canonical partition of a configuration")
    _add_common(p)
    _add_start(p, "opt-in")
    p.set_defaults(fn=cmd_partition)

    p = sub.add_parser("inertia", help="inertia at the equilibrium reached from a start")
    _add_common(p)
    _add_start(p, "opt-out")
    p.set_defaults(fn=cmd_inertia)

    p = sub.add_parser("flow", help="integrate the gradient flow from each start")
    _add_common(p)
    _add_start(p, "opt-in")
    p.set_defaults(fn=cmd_flow)

    p = sub.add_parser("line-eq", help="enumerate critical line configurations")
    _add_common(p)
    p.set_defaults(fn=cmd_line_eq)

    p = sub.add_parser("check", help="verify the index formula or the inertia formula")
    p.add_argument("formula", choices=["index-formula", "inertia-formula"])
    _add_common(p)
    _add_start(p, "opt-out")
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("scan", help="genericity scan over sampled ensembles on the system's graph")
    _add_common(p)
    p.add_argument("--sampler", default=None, help="sampler YAML (default: S(k,c), k in [0.5,2], c in [0.25,4])")
    p.add_argument("--inject", action="append", help="extra system file whose ensemble is scanned as well")
    p.set_defaults(fn=cmd_scan)

    p = sub.add_parser("report", help="full equivariant-Morse report")
    _add_common(p)
    p.set_defaults(fn=cmd_report)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
        format="[%(levelname)s] %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        records, code = args.fn(args)
    except (SpecError, TLGError, LawError, DynamicsError, AnalysisError, json.JSONDecodeError) as e:
        log.error("%s: %s", type(e).__name__, e)
        return EXIT_ERROR
    WRITERS[args.format](records, args.out)
    if code == EXIT_VIOLATION:
        print("[warn] degenerate orbit or formula violation found", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())

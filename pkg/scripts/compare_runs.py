#!/usr/bin/env python3
"""
Compare two runner CSV exports (A vs B) and write:
- reports/diff.csv
- reports/diff.md (markdown table)
With --gate TOL the script exits non-zero when any numeric cell moved by more than TOL,
which turns it into a reproducibility check for same-seed runs.
"""
from __future__ import annotations

import argparse
from pathlib import Path

import pandas as pd

ROOT = Path(__file__).resolve().parents[1]
OUT = ROOT / "reports"

SHOW = ["orbits", "degenerate", "repaired", "formula_violations", "residual"]


def load_csv(p: Path) -> pd.DataFrame:
    df = pd.read_csv(p)
    return df[df["id"] != "__aggregate__"].copy()


def coerce_numeric(df: pd.DataFrame) -> pd.DataFrame:
    for c in df.columns:
        if c == "id":
            continue
        df[c] = pd.to_numeric(df[c], errors="coerce")
    return df


def diff_frames(a: pd.DataFrame, b: pd.DataFrame) -> pd.DataFrame:
    a = coerce_numeric(a).set_index("id")
    b = coerce_numeric(b).set_index("id")
    cols = [c for c in a.columns if c in b.columns and not (a[c].isna().all() and b[c].isna().all())]
    ids = sorted(set(a.index) & set(b.index))
    return b.loc[ids, cols] - a.loc[ids, cols]


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--a", type=Path, required=True, help="runner CSV (baseline)")
    ap.add_argument("--b", type=Path, required=True, help="runner CSV (new)")
    ap.add_argument("--out", type=Path, default=OUT)
    ap.add_argument("--gate", type=float, default=None, help="fail if any |B - A| exceeds this")
    args = ap.parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)

    a, b = load_csv(args.a), load_csv(args.b)
    if sorted(a["id"]) != sorted(b["id"]):
        print("[warn] record ids differ between runs")
    diff = diff_frames(a, b)
    out_csv = args.out / "diff.csv"
    diff.to_csv(out_csv)

    present = [c for c in SHOW if c in diff.columns]
    lines = ["## Run-to-Run Diff (B - A)\n", f"**A:** {args.a}", f"**B:** {args.b}", ""]
    lines += ["| Record | " + " | ".join(present) + " |", "|" + " --- |" * (len(present) + 1)]
    for rid in diff.index:
        row = [rid] + [f"{diff.loc[rid, c]:+.3g}" if pd.notna(diff.loc[rid, c]) else "" for c in present]
        lines.append("| " + " | ".join(row) + " |")
    worst = float(diff.abs().max().max()) if not diff.empty else 0.0
    lines += ["", f"Largest absolute change: **{worst:.3g}**"]
    (args.out / "diff.md").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("Wrote:", out_csv, "and", args.out / "diff.md")

    if args.gate is not None and not worst <= args.gate:
        raise SystemExit(f"runs differ by {worst:.3g} > {args.gate:g}")
    return 0


if __name__ == "__main__":
    main()

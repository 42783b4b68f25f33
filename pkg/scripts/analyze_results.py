#!/usr/bin/env python3
"""
Reads a CSV written by `rmas_runner.py ... --format csv` and writes:
- reports/orbits_bar.png      (scan: line orbits per sample)
- reports/degenerate_bar.png  (scan: degenerate orbits per sample)
- reports/index_bar.png       (report/line-eq: Morse index n+ per orbit)
- reports/n_zero_bar.png      (report/line-eq: zero eigenvalues per orbit)
- reports/summary.csv
- reports/summary.md
"""
from __future__ import annotations

import argparse
import json
from pathlib import Path

import matplotlib.pyplot as plt
import pandas as pd

ROOT = Path(__file__).resolve().parents[1]
CSV = ROOT / "reports" / "results.csv"
OUT = ROOT / "reports"

NUMERIC = ["orbits", "degenerate", "repaired", "formula_violations", "residual", "seed", "sample"]


def _load(csv: Path) -> pd.DataFrame:
    df = pd.read_csv(csv)
    # drop the aggregate footer row if present
    df = df[df["id"] != "__aggregate__"].copy()
    for c in NUMERIC:
        if c in df.columns:
            df[c] = pd.to_numeric(df[c], errors="coerce")
    if "inertia" in df.columns:
        tri = df["inertia"].dropna().map(json.loads)
        for k, name in enumerate(("n_plus", "n_zero", "n_minus")):
            df.loc[tri.index, name] = tri.map(lambda t, k=k: t[k])
    return df.reset_index(drop=True)


def _bar(df, col, out: Path, fname, ylabel=None):
    plt.figure(figsize=(10, 5))
    plt.bar(df["id"], df[col])
    plt.title(col.replace("_", " ").title())
    plt.xlabel("Record")
    plt.ylabel(ylabel or col)
    plt.xticks(rotation=90)
    plt.tight_layout()
    plt.savefig(out / fname, dpi=180)
    plt.close()


def main(argv: list[str] | None = None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--csv", type=Path, default=CSV, help="runner CSV export")
    ap.add_argument("--out", type=Path, default=OUT, help="output directory")
    args = ap.parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)
    df = _load(args.csv)

    charts = []
    samples = df[df["kind"] == "sample"] if "kind" in df else df.iloc[0:0]
    if not samples.empty:
        _bar(samples, "orbits", args.out, "orbits_bar.png", "Line orbits")
        _bar(samples, "degenerate", args.out, "degenerate_bar.png", "Degenerate orbits")
        charts += ["orbits_bar.png", "degenerate_bar.png"]
    orbits = df.dropna(subset=["n_plus"]) if "n_plus" in df else df.iloc[0:0]
    if not orbits.empty:
        _bar(orbits, "n_plus", args.out, "index_bar.png", "Morse index n+")
        _bar(orbits, "n_zero", args.out, "n_zero_bar.png", "n0")
        charts += ["index_bar.png", "n_zero_bar.png"]

    summary = {
        "records": len(df),
        "samples": len(samples),
        "mean_orbits": samples["orbits"].mean() if not samples.empty else None,
        "degenerate": int(samples["degenerate"].sum()) if not samples.empty else None,
        "repaired": int(samples["repaired"].sum()) if not samples.empty else None,
        "orbits_with_inertia": len(orbits),
        "nondegenerate_share": float((orbits["n_zero"] == 3).mean()) if not orbits.empty else None,
        "max_residual": df["residual"].max() if "residual" in df else None,
    }
    pd.DataFrame([summary]).to_csv(args.out / "summary.csv", index=False)

    md = ["## RMAS results summary\n", f"- Records: **{summary['records']}**"]
    if summary["samples"]:
        md += [
            f"- Samples: **{summary['samples']}**, mean line orbits **{summary['mean_orbits']:.2f}**",
            f"- Degenerate / repaired: **{summary['degenerate']} / {summary['repaired']}**",
        ]
    if summary["orbits_with_inertia"]:
        md.append(f"- Nondegenerate share (n0 = 3): **{summary['nondegenerate_share']:.3f}**")
    if charts:
        md += ["", "### Charts"] + [f"- `{args.out.name}/{c}`" for c in charts]
    (args.out / "summary.md").write_text("\n".join(md) + "\n", encoding="utf-8")
    print("Wrote charts + tables to", args.out)
    return summary


if __name__ == "__main__":
    main()

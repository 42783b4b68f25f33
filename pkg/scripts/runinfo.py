#!/usr/bin/env python3
"""Provenance stamp for a results folder: git state, platform, package versions, config hashes."""
import hashlib
import json
import platform
import subprocess
from importlib import metadata
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
OUT = ROOT / "reports"

PACKAGES = ["numpy", "scipy", "networkx", "PyYAML", "pandas", "matplotlib", "pytest", "flake8"]


def sh(*cmd):
    try:
        return subprocess.check_output(cmd, text=True, stderr=subprocess.DEVNULL).strip()
    except Exception:
        return ""


def package_versions() -> dict[str, str]:
    out = {}
    for name in PACKAGES:
        try:
            out[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            out[name] = ""
    return out


def config_hashes() -> dict[str, str]:
    """sha256[:12] of every tolerance, sampler and system file under configs/."""
    files = sorted((ROOT / "configs").glob("tolerances.*.json"))
    files += sorted((ROOT / "configs").glob("sampler.*.yaml"))
    files += sorted((ROOT / "configs" / "systems").glob("*.yaml"))
    return {str(p.relative_to(ROOT)): hashlib.sha256(p.read_bytes()).hexdigest()[:12] for p in files}


def main(out: Path = OUT) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    packages = package_versions()
    configs = config_hashes()
    info = {
        "git_commit": sh("git", "-C", str(ROOT), "rev-parse", "HEAD"),
        "git_status_porcelain": sh("git", "-C", str(ROOT), "status", "--porcelain"),
        "platform": {
            "system": platform.system(),
            "release": platform.release(),
            "python": platform.python_version(),
            "processor": platform.processor(),
        },
        "packages": packages,
        "configs": configs,
    }

    pkg_line = ", ".join(f"{k}={v}" for k, v in packages.items() if v)
    md = [
        "### Run Info",
        f"- Git commit: `{info['git_commit']}`",
        f"- Python: `{info['platform']['python']}` on {info['platform']['system']} {info['platform']['release']}",
        f"- Packages: {pkg_line}",
        "",
        "| config | sha256-12 |",
        "|---|---|",
    ]
    md += [f"| `{k}` | `{v}` |" for k, v in configs.items()]
    md += [
        "",
        "<details><summary>git status --porcelain</summary>\n\n```\n" + info["git_status_porcelain"] + "\n```\n</details>",
    ]
    (out / "runinfo.json").write_text(json.dumps(info, indent=2), encoding="utf-8")
    (out / "runinfo.md").write_text("\n".join(md) + "\n", encoding="utf-8")
    print(f"Wrote {out}/runinfo.{{json,md}}")
    return info


if __name__ == "__main__":
    main()

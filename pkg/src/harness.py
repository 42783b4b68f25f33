"""System definition files, tolerance configs, genericity scans and Morse reports."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import yaml

from src.analysis import (
    CriticalOrbitRecord,
    NotEquilibrium,
    NotRepairable,
    canonical_orbit_form,
    check_index_formula,
    check_inertia_formula,
    enumerate_line_equilibria,
    orbit_record,
    part_subsystem,
    repair_degenerate,
)
from src.dynamics import (
    CollisionApproach,
    Configuration,
    NotConverged,
    RMASystem,
    SingularGaugeJacobian,
    Stalled,
    flow,
    newton_refine,
    null_vectors,
    field_hessian,
    random_configuration,
    restrict_configuration,
)
from src.interaction_laws import Ensemble, InteractionLaw, LawError, law_from_params, make_bump, sum_laws
from src.tlg_graph import TLGError, TLGraph, build_tlg, edge_key, recognize_tlg

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class SpecError(ValueError):
    pass


# ----------------------- tolerances -----------------------
@dataclass(frozen=True)
class Tolerances:
    col_tol: float = 1e-9
    zero_tol: float = 1e-8
    residual_tol: float = 1e-10
    flow_tol: float = 1e-10
    flow_t_max: float = 1e4
    rtol: float = 1e-8
    atol: float = 1e-10
    collision_floor: float = 1e-8
    dedup_tol: float = 1e-9
    match_tol: float = 1e-6

    def override(self, **changes) -> "Tolerances":
        known = {f.name for f in dataclasses.fields(self)}
        unknown = sorted(set(changes) - known)
        if unknown:
            raise SpecError(f"unknown tolerance keys: {unknown}")
        return dataclasses.replace(self, **{k: float(v) for k, v in changes.items() if v is not None})

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _sha12(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


def load_tolerances(path: str | Path | None) -> tuple[Tolerances, dict | None]:
    """Tolerance defaults plus a provenance stamp (path, sha256-12)."""
    if not path:
        return Tolerances(), None
    p = Path(path)
    if not p.exists():
        log.warning("tolerance file %s not found; using defaults", p)
        return Tolerances(), None
    txt = p.read_text(encoding="utf-8")
    cfg = json.loads(txt)
    tol = Tolerances().override(**cfg.get("tolerances", {}))
    return tol, {"id": cfg.get("id", "unknown"), "path": str(p), "sha256_12": _sha12(txt)}


# ----------------------- system definition files -----------------------
@dataclass(frozen=True)
class SystemSpec:
    system: RMASystem
    initial_configurations: tuple[Configuration, ...] = ()
    random_initial: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def starts(self) -> list[Configuration]:
        """Supplied initial configurations followed by the seeded random ones."""
        out = list(self.initial_configurations)
        count = int(self.random_initial.get("count", 0))
        if count:
            rng = np.random.default_rng(int(self.random_initial.get("seed", 0)))
            scale = float(self.random_initial.get("scale", 2.0))
            out += [random_configuration(self.system.n, rng, scale) for _ in range(count)]
        return out


def _parse_graph(section) -> TLGraph:
    if not isinstance(section, dict):
        raise SpecError("graph section must be a mapping")
    try:
        if "edges" in section:
            return recognize_tlg(section["edges"])
        steps = []
        for s in section.get("steps", []):
            if isinstance(s, dict):
                steps.append((int(s["vertex"]), tuple(s["parents"])))
            else:
                steps.append((int(s[0]), tuple(s[1])))
        return build_tlg(section["base_edge"], steps)
    except TLGError as e:
        raise SpecError(f"graph: {e}") from e
    except (KeyError, TypeError, ValueError) as e:
        raise SpecError(f"graph: malformed section ({e})") from e


def _parse_law(entry: dict, where: str) -> InteractionLaw:
    params = {k: v for k, v in entry.items() if k not in ("family", "edge", "bumps")}
    try:
        law = law_from_params(entry.get("family", "standard"), **params)
        for b in entry.get("bumps", []):
            law = sum_laws(law, make_bump(b["d0"], b.get("value", 0.0), b.get("slope", 0.0), b["width"]))
    except (LawError, KeyError, TypeError) as e:
        raise SpecError(f"{where}: {e}") from e
    return law


def _parse_laws(section, graph: TLGraph) -> Ensemble:
    section = section or {}
    default = section.get("default")
    laws: dict = {}
    for entry in section.get("edges", []):
        try:
            e = edge_key(*(int(x) for x in entry["edge"]))
        except (KeyError, TypeError, ValueError) as err:
            raise SpecError(f"laws: bad edge entry {entry!r}") from err
        if e not in graph.edges:
            raise SpecError(f"laws: edge {e} is not in the graph")
        if e in laws:
            raise SpecError(f"laws: edge {e} has more than one law entry")
        laws[e] = _parse_law(entry, f"laws[{e[0]}-{e[1]}]")
    for e in graph.edge_list:
        if e not in laws:
            if default is None:
                raise SpecError(f"laws: edge {e} has no law and no default is given")
            laws[e] = _parse_law(default, "laws.default")
    return Ensemble(laws)


def _parse_configs(raw, n: int) -> tuple[Configuration, ...]:
    out = []
    for k, pts in enumerate(raw or []):
        arr = np.asarray(pts, dtype=float)
        if arr.shape != (n, 2):
            raise SpecError(f"initial_configurations[{k}] must list {n} points, got shape {arr.shape}")
        out.append(Configuration.from_points(arr))
    return tuple(out)


def parse_system_spec(data, meta: dict | None = None) -> SystemSpec:
    if not isinstance(data, dict):
        raise SpecError("system definition must be a mapping")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SpecError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    graph = _parse_graph(data.get("graph"))
    ensemble = _parse_laws(data.get("laws"), graph)
    tol = data.get("tolerances") or {}
    Tolerances().override(**tol)
    return SystemSpec(
        system=RMASystem(graph, ensemble),
        initial_configurations=_parse_configs(data.get("initial_configurations"), graph.n),
        random_initial=dict(data.get("random_initial") or {}),
        tolerances=dict(tol),
        meta={"name": data.get("name", ""), "schema_version": version, **(meta or {})},
    )


def load_system_spec(source: str | Path) -> SystemSpec:
    """Read a YAML/JSON system definition from a path, or from stdin for '-'."""
    if str(source) == "-":
        text, where = sys.stdin.read(), "<stdin>"
    else:
        p = Path(source)
        if not p.exists():
            raise SpecError(f"system file {p} not found")
        text, where = p.read_text(encoding="utf-8"), str(p)
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise SpecError(f"{where}: cannot parse ({e})") from e
    return parse_system_spec(data, {"path": where, "sha256_12": _sha12(text)})


# ----------------------- samplers -----------------------
@dataclass(frozen=True)
class Sampler:
    """Weighted choice of law families with uniform parameter ranges."""

    id: str
    families: tuple[tuple[str, float, tuple[tuple[str, float, float], ...]], ...]

    @classmethod
    def from_dict(cls, cfg: dict) -> "Sampler":
        entries = cfg.get("families") or [{"family": cfg.get("family", "standard"), "ranges": cfg.get("ranges", {})}]
        fams = []
        for e in entries:
            ranges = tuple((k, float(lo), float(hi)) for k, (lo, hi) in sorted((e.get("ranges") or {}).items()))
            fams.append((e.get("family", "standard"), float(e.get("weight", 1.0)), ranges))
        return cls(cfg.get("id", "sampler"), tuple(fams))

    def draw(self, rng: np.random.Generator) -> InteractionLaw:
        if len(self.families) == 1:
            fam, _, ranges = self.families[0]
        else:
            w = np.array([f[1] for f in self.families])
            fam, _, ranges = self.families[int(rng.choice(len(w), p=w / w.sum()))]
        return law_from_params(fam, **{k: rng.uniform(lo, hi) for k, lo, hi in ranges})

    def ensemble(self, graph: TLGraph, rng: np.random.Generator) -> Ensemble:
        return Ensemble({e: self.draw(rng) for e in graph.edge_list})

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "families": [
                {"family": f, "weight": w, "ranges": {k: [lo, hi] for k, lo, hi in r}} for f, w, r in self.families
            ],
        }


DEFAULT_SAMPLER = Sampler.from_dict(
    {"id": "standard-v1", "family": "standard", "ranges": {"k": [0.5, 2.0], "c": [0.25, 4.0]}}
)


def load_sampler(path: str | Path | None) -> Sampler:
    if not path:
        return DEFAULT_SAMPLER
    p = Path(path)
    try:
        cfg = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as e:
        raise SpecError(f"sampler {p}: {e}") from e
    return Sampler.from_dict(cfg)


# ----------------------- genericity scan -----------------------
@dataclass(frozen=True)
class ScanReport:
    graph: dict
    sampler_id: str
    samples: int
    seed: int
    tolerances: dict
    records: tuple[dict, ...]
    wall_time: float = field(default=0.0, compare=False)

    @property
    def orbit_counts(self) -> list[int]:
        return [r["orbits"] for r in self.records]

    @property
    def degenerate_count(self) -> int:
        return sum(r["degenerate"] for r in self.records)

    @property
    def repaired_count(self) -> int:
        return sum(r["repaired"] for r in self.records)

    @property
    def violations(self) -> int:
        return sum(r["formula_violations"] for r in self.records)

    @property
    def bound(self) -> int:
        return 3 ** (self.graph["n"] - 2)

    @property
    def passed(self) -> bool:
        return self.degenerate_count == 0 and self.violations == 0

    def summary(self) -> dict:
        return {
            "kind": "summary",
            "graph": self.graph,
            "sampler": self.sampler_id,
            "samples": self.samples,
            "seed": self.seed,
            "tolerances": self.tolerances,
            "total_orbits": sum(self.orbit_counts),
            "max_orbits": max(self.orbit_counts, default=0),
            "bound": self.bound,
            "degenerate": self.degenerate_count,
            "repaired": self.repaired_count,
            "formula_violations": self.violations,
            "passed": self.passed,
        }

    def to_records(self) -> list[dict]:
        return [{"kind": "sample", **r} for r in self.records] + [self.summary()]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.to_records())


def _scan_one(task) -> dict:
    graph, sampler, index, seed, tol, injected = task
    if injected is None:
        ensemble = sampler.ensemble(graph, np.random.default_rng(seed))
    else:
        ensemble = injected
    system = RMASystem(graph, ensemble)
    recs = enumerate_line_equilibria(system, tol.col_tol, tol.zero_tol, tol.residual_tol, tol.dedup_tol)
    violations = sum(r.predicted_inertia is not None and r.predicted_inertia != r.inertia for r in recs)
    degenerate = [r for r in recs if not r.nondegenerate]
    repaired = 0
    for r in degenerate:
        try:
            repair_degenerate(system, r, tol.zero_tol, tol.residual_tol)
            repaired += 1
        except NotRepairable as e:
            log.warning("scan: sample %d orbit %s not repaired: %s", index, [c.value for c in r.case_vector], e)
    return {
        "sample": index,
        "seed": seed,
        "injected": injected is not None,
        "orbits": len(recs),
        "degenerate": len(degenerate),
        "repaired": repaired,
        "formula_violations": int(violations),
        "inertias": [r.inertia.to_list() for r in recs],
        "laws": ensemble.describe(),
    }


def run_genericity_scan(
    graph: TLGraph,
    sampler: Sampler = DEFAULT_SAMPLER,
    samples: int = 100,
    seed: int = 0,
    workers: int = 1,
    tolerances: Tolerances | None = None,
    extra_ensembles: Sequence[Ensemble] = (),
) -> ScanReport:
    """Enumerate line orbits for i.i.d. sampled ensembles and tally degeneracies.

    Sample i uses seed + i. Hand-built ensembles in `extra_ensembles` are
    appended after the sampled ones.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    tol = tolerances or Tolerances()
    tasks = [(graph, sampler, i, seed + i, tol, None) for i in range(samples)]
    tasks += [(graph, sampler, samples + k, None, tol, ens) for k, ens in enumerate(extra_ensembles)]

    t0 = time.perf_counter()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_scan_one, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        rows = [_scan_one(t) for t in tasks]
    rows.sort(key=lambda r: r["sample"])
    wall = time.perf_counter() - t0
    log.info("scan: %d samples on N=%d in %.2fs", len(rows), graph.n, wall)
    return ScanReport(
        graph=graph.to_dict(),
        sampler_id=sampler.id,
        samples=samples,
        seed=seed,
        tolerances=tol.to_dict(),
        records=tuple(rows),
        wall_time=wall,
    )


# ----------------------- morse report -----------------------
@dataclass
class MorseReport:
    line_orbits: list[CriticalOrbitRecord]
    inertia_checks: list[dict]
    equilibria: list[dict]
    subsystems: dict
    flow_failures: list[dict]
    meta: dict

    @property
    def verdict(self) -> dict:
        line_ok = all(r.nondegenerate for r in self.line_orbits)
        eq_ok = all(e["nondegenerate"] for e in self.equilibria)
        idx_ok = all(e["index_formula"]["holds"] for e in self.equilibria)
        inertia_ok = all(c["holds"] for c in self.inertia_checks)
        null_ok = all(e["null_space_ok"] for e in self.equilibria)
        sub_ok = all(e["subsystems_consistent"] for e in self.equilibria)
        passed = line_ok and eq_ok and idx_ok and inertia_ok and null_ok and sub_ok and not self.flow_failures
        return {
            "kind": "verdict",
            "line_orbits": len(self.line_orbits),
            "equilibria": len(self.equilibria),
            "subsystems_enumerated": len(self.subsystems),
            "all_nondegenerate": line_ok and eq_ok,
            "index_formula": idx_ok,
            "inertia_formula": inertia_ok,
            "null_space": null_ok,
            "subsystems_consistent": sub_ok,
            "flow_failures": len(self.flow_failures),
            "equivariant_morse": passed,
        }

    @property
    def passed(self) -> bool:
        return self.verdict["equivariant_morse"]

    def to_records(self) -> list[dict]:
        out = []
        for rec, chk in zip(self.line_orbits, self.inertia_checks or [None] * len(self.line_orbits)):
            row = {"kind": "line_orbit", **rec.to_dict()}
            if chk is not None:
                row["inertia_formula"] = chk
            out.append(row)
        out += [{"kind": "equilibrium", **e} for e in self.equilibria]
        out += [{"kind": "flow_failure", **f} for f in self.flow_failures]
        out.append({**self.verdict, "meta": self.meta})
        return out


def _null_space_ok(system: RMASystem, cfg: Configuration, tol: float = 1e-10) -> bool:
    H = field_hessian(system, cfg)
    scale = np.linalg.norm(H)
    return all(np.linalg.norm(H @ v) <= tol * max(scale, 1.0) for v in null_vectors(cfg))


def _matches(cfg: Configuration, pool: Iterable[Configuration], tol: float) -> bool:
    return any(cfg.allclose(c, tol) for c in pool)


def morse_report(spec: SystemSpec, tolerances: Tolerances | None = None) -> MorseReport:
    """Line orbits, flow-found equilibria and per-part subsystem checks for one system.

    Explicit `tolerances` win; otherwise the defaults are overridden by the
    system file's own `tolerances:` section.
    """
    tol = tolerances if tolerances is not None else Tolerances().override(**spec.tolerances)
    system = spec.system
    line: list[CriticalOrbitRecord] = []
    if system.ensemble.admissible:
        line = enumerate_line_equilibria(system, tol.col_tol, tol.zero_tol, tol.residual_tol, tol.dedup_tol)
    else:
        log.warning("report: ensemble has laws outside class F; line enumeration skipped")
    checks = []
    if system.graph.steps:
        for rec in line:
            checks.append(
                check_inertia_formula(system, rec.configuration, tol.col_tol, tol.zero_tol, tol.residual_tol).to_dict()
            )

    sub_cache: dict[frozenset, list[Configuration] | None] = {}
    equilibria: list[dict] = []
    seen: list[Configuration] = []
    failures: list[dict] = []
    for k, start in enumerate(spec.starts()):
        try:
            fr = flow(system, start, tol.flow_tol, tol.flow_t_max, tol.rtol, tol.atol, tol.collision_floor)
        except (Stalled, CollisionApproach) as e:
            log.warning("report: flow %d failed: %s", k, e)
            failures.append({"start": k, "error": type(e).__name__, "message": str(e), **e.result.to_dict()})
            continue
        try:
            cfg = newton_refine(system, fr.config)
        except SingularGaugeJacobian as e:
            log.warning("report: equilibrium from start %d is degenerate: %s", k, e)
            cfg = fr.config
        except NotConverged as e:
            log.warning("report: refinement from start %d failed: %s", k, e)
            failures.append({"start": k, "error": type(e).__name__, "message": str(e), "residual": e.residual})
            continue
        canon = canonical_orbit_form(cfg)
        hit = next((e for e, c in zip(equilibria, seen) if canon.allclose(c, tol.match_tol)), None)
        if hit is not None:
            hit["hits"] += 1
            continue

        rec = orbit_record(system, canon, tol.col_tol, tol.zero_tol)
        try:
            idx = check_index_formula(system, canon, tol.col_tol, tol.zero_tol, tol.residual_tol).to_dict()
        except NotEquilibrium as e:
            idx = {"holds": False, "error": str(e)}

        sub_ok = True
        for p in range(len(rec.partition)):
            key = frozenset(rec.partition.parts[p])
            sub = part_subsystem(system, rec.partition, p)
            if key not in sub_cache:
                sub_cache[key] = None
                if sub.ensemble.admissible:
                    recs = enumerate_line_equilibria(sub, tol.col_tol, tol.zero_tol)
                    sub_cache[key] = [r.configuration for r in recs]
            if sub_cache[key] is None:
                continue
            sub_cfg = canonical_orbit_form(restrict_configuration(canon, rec.partition.relabels[p]))
            sub_ok = sub_ok and _matches(sub_cfg, sub_cache[key], tol.match_tol)

        equilibria.append(
            {
                **rec.to_dict(),
                "start": k,
                "hits": 1,
                "line": len(rec.partition) == 1,
                "matches_line_orbit": _matches(canon, [r.configuration for r in line], tol.match_tol),
                "index_formula": idx,
                "null_space_ok": _null_space_ok(system, canon),
                "subsystems_consistent": sub_ok,
                "flow": fr.to_dict(),
            }
        )
        seen.append(canon)

    meta = {**spec.meta, "tolerances": tol.to_dict()}
    subsystems = {",".join(f"{i}-{j}" for i, j in sorted(k)): len(v or ()) for k, v in sub_cache.items()}
    report = MorseReport(line, checks, equilibria, subsystems, failures, meta)
    log.info("report: %d line orbits, %d equilibria, verdict=%s", len(line), len(equilibria), report.passed)
    return report

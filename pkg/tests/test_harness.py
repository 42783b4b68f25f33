import io
import json

import numpy as np
import pytest
from conftest import ROOT, SYSTEMS

from src.harness import (
    DEFAULT_SAMPLER,
    SpecError,
    Tolerances,
    load_sampler,
    load_system_spec,
    load_tolerances,
    morse_report,
    parse_system_spec,
    run_genericity_scan,
)
from src.tlg_graph import build_tlg

TRIANGLE = build_tlg((1, 2), [(3, (1, 2))])


def triangle_doc(**extra):
    doc = {
        "schema_version": 1,
        "graph": {"base_edge": [1, 2], "steps": [{"vertex": 3, "parents": [1, 2]}]},
        "laws": {"default": {"family": "standard", "k": 1.0, "c": 1.0}},
    }
    doc.update(extra)
    return doc


# ----------------------- tolerances -----------------------
def test_tolerances_file_stamp():
    tol, meta = load_tolerances(ROOT / "configs" / "tolerances.v1.json")
    assert tol == Tolerances()
    assert meta["id"] == "rmas-tolerances-v1"
    assert len(meta["sha256_12"]) == 12


def test_missing_tolerance_file_falls_back(tmp_path):
    tol, meta = load_tolerances(tmp_path / "nope.json")
    assert tol == Tolerances()
    assert meta is None


def test_tolerance_override():
    tol = Tolerances().override(zero_tol=1e-6, col_tol=None)
    assert tol.zero_tol == 1e-6
    assert tol.col_tol == 1e-9
    with pytest.raises(SpecError):
        Tolerances().override(eigen_tol=1.0)


# ----------------------- system files -----------------------
@pytest.mark.parametrize(
    "name,n,starts",
    [
        ("two_agents", 2, 2),
        ("triangle", 3, 11),
        ("four_agents", 4, 10),
        ("five_agents", 5, 8),
        ("degenerate_triangle", 3, 1),
    ],
)
def test_shipped_systems_load(name, n, starts):
    spec = load_system_spec(SYSTEMS / f"{name}.yaml")
    assert spec.system.n == n
    assert len(spec.starts()) == starts
    assert spec.meta["sha256_12"]
    assert spec.system.ensemble.admissible


def test_per_edge_laws_override_default():
    spec = load_system_spec(SYSTEMS / "four_agents.yaml")
    laws = spec.system.ensemble.describe()
    assert laws["1-3"] == {"family": "standard", "k": 1.5, "c": 2.0}
    assert laws["3-4"]["family"] == "power"
    assert laws["1-2"] == {"family": "standard", "k": 1.0, "c": 1.0}


def test_random_starts_are_seeded():
    spec = load_system_spec(SYSTEMS / "triangle.yaml")
    a, b = spec.starts(), spec.starts()
    assert all(x.allclose(y, 0.0) for x, y in zip(a, b))


def test_not_tlg_is_rejected():
    with pytest.raises(SpecError, match="graph"):
        load_system_spec(SYSTEMS / "not_tlg.yaml")


def test_missing_system_file(tmp_path):
    with pytest.raises(SpecError):
        load_system_spec(tmp_path / "missing.yaml")


def test_system_from_stdin(monkeypatch):
    monkeypatch.setattr("sys.stdin", io.StringIO(json.dumps(triangle_doc())))
    spec = load_system_spec("-")
    assert spec.meta["path"] == "<stdin>"
    assert spec.system.n == 3


@pytest.mark.parametrize(
    "doc",
    [
        triangle_doc(schema_version=2),
        triangle_doc(laws={"edges": [{"edge": [1, 2], "k": 1.0, "c": 1.0}]}),
        triangle_doc(laws={"default": {"k": 1.0}, "edges": [{"edge": [1, 4], "k": 1.0}]}),
        triangle_doc(laws={"default": {"k": 1.0}, "edges": [{"edge": [1, 2]}, {"edge": [2, 1]}]}),
        triangle_doc(laws={"default": {"family": "magnetic"}}),
        triangle_doc(initial_configurations=[[[0, 0], [1, 0]]]),
        triangle_doc(tolerances={"eigen_tol": 1e-3}),
        triangle_doc(graph={"base_edge": [1, 2], "steps": [{"vertex": 3, "parents": [1, 5]}]}),
        [1, 2, 3],
    ],
)
def test_malformed_system_definitions(doc):
    with pytest.raises(SpecError):
        parse_system_spec(doc)


def test_bumps_are_added_to_the_law():
    doc = triangle_doc(
        laws={"default": {"k": 1.0, "c": 1.0, "bumps": [{"d0": 1.0, "value": 0.0, "slope": -10.0, "width": 0.2}]}}
    )
    spec = parse_system_spec(doc)
    assert spec.system.law(1, 2).family == "sum"
    assert not spec.system.ensemble.admissible


def test_graph_from_edge_list():
    doc = triangle_doc(graph={"edges": [[1, 2], [2, 3], [1, 3]]})
    assert parse_system_spec(doc).system.graph.edges == TRIANGLE.edges


# ----------------------- samplers -----------------------
def test_sampler_is_reproducible():
    a = DEFAULT_SAMPLER.ensemble(TRIANGLE, np.random.default_rng(4)).describe()
    b = DEFAULT_SAMPLER.ensemble(TRIANGLE, np.random.default_rng(4)).describe()
    assert a == b
    for law in a.values():
        assert 0.5 <= law["k"] <= 2.0
        assert 0.25 <= law["c"] <= 4.0


def test_mixed_sampler_draws_both_families():
    sampler = load_sampler(ROOT / "configs" / "sampler.mixed.yaml")
    assert sampler.id == "mixed-v1"
    rng = np.random.default_rng(0)
    assert {sampler.draw(rng).family for _ in range(50)} == {"standard", "power"}
    assert load_sampler(None) is DEFAULT_SAMPLER
    assert load_sampler(ROOT / "configs" / "sampler.standard.yaml") == DEFAULT_SAMPLER


# ----------------------- genericity scan -----------------------
def test_triangle_scan_is_generic():
    rep = run_genericity_scan(TRIANGLE, samples=20, seed=1)
    assert rep.orbit_counts == [3] * 20
    assert rep.degenerate_count == 0
    assert rep.violations == 0
    assert rep.passed
    summary = rep.summary()
    assert summary["bound"] == 3
    assert summary["max_orbits"] == 3


def test_scan_output_is_deterministic():
    a = run_genericity_scan(TRIANGLE, samples=5, seed=9).to_jsonl()
    b = run_genericity_scan(TRIANGLE, samples=5, seed=9).to_jsonl()
    assert a == b
    rows = [json.loads(line) for line in a.splitlines()]
    assert [r["kind"] for r in rows] == ["sample"] * 5 + ["summary"]
    assert [r["seed"] for r in rows[:5]] == [9, 10, 11, 12, 13]


def test_scan_needs_samples():
    with pytest.raises(ValueError):
        run_genericity_scan(TRIANGLE, samples=0)


def test_injected_degenerate_ensemble_is_caught_and_repaired():
    injected = load_system_spec(SYSTEMS / "degenerate_triangle.yaml").system.ensemble
    rep = run_genericity_scan(TRIANGLE, samples=3, seed=0, extra_ensembles=[injected])
    last = rep.records[-1]
    assert last["injected"]
    assert last["sample"] == 3
    assert last["degenerate"] == 1
    assert last["repaired"] == 1
    assert rep.degenerate_count == 1
    assert not rep.passed


def test_parallel_scan_matches_serial():
    g = build_tlg((1, 2), [(3, (1, 2)), (4, (2, 3))])
    serial = run_genericity_scan(g, samples=6, seed=2, workers=1)
    parallel = run_genericity_scan(g, samples=6, seed=2, workers=2)
    assert serial == parallel
    assert all(1 <= c <= 9 for c in serial.orbit_counts)
    assert serial.degenerate_count == 0


# ----------------------- morse report -----------------------
def test_two_agent_report():
    rep = morse_report(load_system_spec(SYSTEMS / "two_agents.yaml"))
    assert len(rep.line_orbits) == 1
    assert rep.inertia_checks == []
    assert len(rep.equilibria) == 1
    assert rep.equilibria[0]["hits"] == 2
    assert rep.equilibria[0]["inertia"] == [0, 3, 1]
    assert rep.passed
    assert rep.flow_failures == []
    assert rep.to_records()[-1]["kind"] == "verdict"


def test_triangle_report():
    rep = morse_report(load_system_spec(SYSTEMS / "triangle.yaml"))
    assert len(rep.line_orbits) == 3
    assert all(c["holds"] for c in rep.inertia_checks)
    assert rep.equilibria
    for eq in rep.equilibria:
        if eq["line"]:
            assert eq["matches_line_orbit"]
        else:
            assert eq["inertia"] == [0, 3, 3]
            assert eq["part_inertias"] == [[0, 3, 1]] * 3
        assert eq["subsystems_consistent"]
    assert rep.passed
    assert rep.verdict["subsystems_enumerated"] >= 1
    assert rep.flow_failures == []
    assert rep.verdict["equivariant_morse"]


def test_degenerate_report_fails():
    rep = morse_report(load_system_spec(SYSTEMS / "degenerate_triangle.yaml"))
    assert not rep.verdict["all_nondegenerate"]
    assert not rep.passed


def test_explicit_tolerances_win():
    spec = parse_system_spec(triangle_doc(tolerances={"match_tol": 1e-3}))
    rep = morse_report(spec, Tolerances())
    assert rep.meta["tolerances"]["match_tol"] == 1e-6
    assert morse_report(spec).meta["tolerances"]["match_tol"] == 1e-3

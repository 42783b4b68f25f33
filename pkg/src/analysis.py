"""Canonical partitions, inertia, line-equilibrium enumeration and formula checks.

Line equilibria are enumerated by removing the last Henneberg vertex, which
must sit collinear with its two parents in one of three orderings. Its force
balance turns into a virtual law between the parents; the recursion bottoms
out at two agents placed at the reduced law's rest length, and the removed
agents are put back one by one.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from src.dynamics import (
    Configuration,
    EdgeCollision,
    RMASystem,
    gauge_motion,
    apply_rigid_motion,
    edge_distances,
    field_hessian,
    residual,
    restrict_configuration,
    vector_field,
)
from src.interaction_laws import (
    CASE_ORDER,
    Ensemble,
    NotClassF,
    ReductionCase,
    make_bump,
    reduced_law,
    rest_length,
    sum_laws,
    virtual_interaction,
)
from src.tlg_graph import Edge, TLGraph, edge_key, induced_subsystem, reduce_last_vertex, tlg_subgraphs

log = logging.getLogger(__name__)

COL_TOL = 1e-9
ZERO_TOL = 1e-8
RESIDUAL_TOL = 1e-10
DEDUP_TOL = 1e-9


class AnalysisError(ValueError):
    pass


class NotSymmetric(AnalysisError):
    pass


class NotEquilibrium(AnalysisError):
    pass


class NotCollinear(AnalysisError):
    pass


class DegenerateBase(AnalysisError):
    pass


class NotRepairable(AnalysisError):
    pass


# ----------------------- inertia -----------------------
@dataclass(frozen=True)
class InertiaTriple:
    n_plus: int
    n_zero: int
    n_minus: int
    zero_tol: float = field(default=ZERO_TOL, compare=False)

    @property
    def dim(self) -> int:
        return self.n_plus + self.n_zero + self.n_minus

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.n_plus, self.n_zero, self.n_minus)

    def __add__(self, other: "InertiaTriple") -> "InertiaTriple":
        return InertiaTriple(
            self.n_plus + other.n_plus, self.n_zero + other.n_zero, self.n_minus + other.n_minus, self.zero_tol
        )

    def __sub__(self, other: "InertiaTriple") -> "InertiaTriple":
        return InertiaTriple(
            self.n_plus - other.n_plus, self.n_zero - other.n_zero, self.n_minus - other.n_minus, self.zero_tol
        )

    @classmethod
    def sgn(cls, x: float, tol: float = 0.0) -> "InertiaTriple":
        """Inertia of the 1×1 matrix [x]; sgn(0) = (0, 1, 0)."""
        if abs(x) <= tol:
            return cls(0, 1, 0, tol)
        return cls(1, 0, 0, tol) if x > 0 else cls(0, 0, 1, tol)

    def to_list(self) -> list[int]:
        return list(self.as_tuple())


def _symmetric(matrix, sym_tol: float) -> np.ndarray:
    M = np.asarray(matrix, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise NotSymmetric(f"expected a square matrix, got shape {M.shape}")
    asym = float(np.max(np.abs(M - M.T))) if M.size else 0.0
    if asym > sym_tol * max(1.0, float(np.max(np.abs(M))) if M.size else 1.0):
        raise NotSymmetric(f"matrix asymmetry {asym:.3e} exceeds {sym_tol:g}")
    return 0.5 * (M + M.T)


def eigenvalues(matrix, sym_tol: float = 1e-10) -> np.ndarray:
    return linalg.eigh(_symmetric(matrix, sym_tol), eigvals_only=True)


def inertia(matrix, zero_tol: float = ZERO_TOL, sym_tol: float = 1e-10) -> InertiaTriple:
    """Count eigenvalues; |λ| ≤ zero_tol·max(1, spectral radius) is zero."""
    lam = eigenvalues(matrix, sym_tol)
    thr = zero_tol * max(1.0, float(np.max(np.abs(lam))) if lam.size else 1.0)
    return InertiaTriple(
        int(np.count_nonzero(lam > thr)),
        int(np.count_nonzero(np.abs(lam) <= thr)),
        int(np.count_nonzero(lam < -thr)),
        zero_tol,
    )


# ----------------------- canonical form -----------------------
def canonical_orbit_form(config: Configuration) -> Configuration:
    """SE(2) representative: x₁ at the origin, x₂ on the positive a-axis."""
    if config.n < 2 or config.distance(1, 2) == 0.0:
        raise DegenerateBase("x1 and x2 coincide; orbit representative is undefined")
    if not np.any(config.b):
        a = config.a - config.a[0]
        if a[1] < 0:
            a = -a
        return Configuration.on_line(a + 0.0)
    theta, v = gauge_motion(config, 1, 2)
    out = apply_rigid_motion(config, theta, v).coords.copy()
    n = config.n
    out[0] = out[n] = out[n + 1] = 0.0
    out[1] = config.distance(1, 2)
    return Configuration(out)


# ----------------------- canonical partition -----------------------
@dataclass(frozen=True)
class CanonicalPartition:
    parts: tuple[tuple[Edge, ...], ...]
    graphs: tuple[TLGraph, ...] = field(repr=False)
    relabels: tuple[dict, ...] = field(repr=False)
    directions: tuple[tuple[float, float], ...] = field(repr=False)

    def as_set(self) -> frozenset:
        return frozenset(frozenset(p) for p in self.parts)

    def __len__(self) -> int:
        return len(self.parts)

    def to_list(self) -> list[list[list[int]]]:
        return [[list(e) for e in p] for p in self.parts]


def _normalized_cross(p: np.ndarray, q: np.ndarray, r: np.ndarray) -> float:
    u, w = q - p, r - p
    nu, nw = math.hypot(*u), math.hypot(*w)
    if nu == 0.0 or nw == 0.0:
        raise EdgeCollision("adjacent agents coincide")
    return abs(u[0] * w[1] - u[1] * w[0]) / (nu * nw)


def canonical_partition(graph: TLGraph, config: Configuration, col_tol: float = COL_TOL) -> CanonicalPartition:
    """Merge each new vertex's two edges into its parents' part when the three are collinear."""
    base = edge_key(*graph.base_edge)
    parts: list[list[Edge]] = [[base]]
    owner: dict[Edge, int] = {base: 0}
    for st in graph.steps:
        i, j = st.parents
        v = st.vertex
        new = [edge_key(i, v), edge_key(j, v)]
        if _normalized_cross(config.point(i), config.point(j), config.point(v)) < col_tol:
            k = owner[edge_key(i, j)]
            parts[k].extend(new)
            owner.update({e: k for e in new})
        else:
            for e in new:
                owner[e] = len(parts)
                parts.append([e])

    graphs, relabels, directions = [], [], []
    for p in parts:
        g, remap = induced_subsystem(graph, p)
        graphs.append(g)
        relabels.append(remap)
        a, b = p[0]
        u = config.point(b) - config.point(a)
        u = u / np.linalg.norm(u)
        directions.append((float(u[0]), float(u[1])))
    return CanonicalPartition(tuple(tuple(p) for p in parts), tuple(graphs), tuple(relabels), tuple(directions))


def part_subsystem(system: RMASystem, partition: CanonicalPartition, k: int) -> RMASystem:
    remap = partition.relabels[k]
    return RMASystem(partition.graphs[k], system.ensemble.restrict(partition.parts[k], remap))


# ----------------------- reduction -----------------------
def reduced_system(system: RMASystem, case: ReductionCase) -> tuple[RMASystem, dict[int, int]]:
    """Remove the last Henneberg vertex assuming it sits in `case` relative to its parents."""
    st = system.graph.steps[-1]
    v, (p1, p2) = st.vertex, st.parents
    f12, f13, f23 = system.law(v, p1), system.law(v, p2), system.law(p1, p2)
    graph, remap = reduce_last_vertex(system.graph)
    laws = {}
    for (i, j), law in system.ensemble.laws.items():
        if v in (i, j):
            continue
        if (i, j) == edge_key(p1, p2):
            law = reduced_law(f23, f12, f13, case)
        laws[(remap[i], remap[j])] = law
    return RMASystem(graph, Ensemble(laws)), remap


@dataclass(frozen=True)
class ReductionStep:
    """Removal of `vertex` from between/beside its parents, with the two scalar tests."""

    vertex: int
    parents: tuple[int, int]
    case: ReductionCase
    d12: float
    d13: float
    d23: float
    s1: float  # −f₁₂(d₁₂) − f₁₃(d₁₃)
    s2: float  # −f̃′₁₂(d₁₂) − f̃′₁₃(d₁₃)
    scale: float = 1.0

    def contribution(self, zero_tol: float = ZERO_TOL) -> InertiaTriple:
        tol = zero_tol * self.scale
        return InertiaTriple.sgn(self.s1, tol) + InertiaTriple.sgn(self.s2, tol)

    def degenerate(self, zero_tol: float = ZERO_TOL) -> bool:
        return abs(self.s1) <= zero_tol * self.scale

    def relabeled(self, inv: dict[int, int]) -> "ReductionStep":
        return ReductionStep(
            inv[self.vertex],
            (inv[self.parents[0]], inv[self.parents[1]]),
            self.case,
            self.d12,
            self.d13,
            self.d23,
            self.s1,
            self.s2,
            self.scale,
        )

    def to_dict(self) -> dict:
        return {
            "vertex": self.vertex,
            "parents": list(self.parents),
            "case": self.case.value,
            "d12": self.d12,
            "d13": self.d13,
            "d23": self.d23,
            "s1": self.s1,
            "s2": self.s2,
        }


def _step_scalars(system: RMASystem, v: int, p1: int, p2: int, d12: float, d13: float):
    f12, f13 = system.law(v, p1), system.law(v, p2)
    a, ap = f12.evaluate(d12)
    b, bp = f13.evaluate(d13)
    fa, fb = a / d12, b / d13
    return -fa - fb, -ap - bp, max(1.0, abs(fa), abs(fb))


def _realizes(case: ReductionCase, av: float, a2: float, a3: float, margin: float) -> bool:
    if case is ReductionCase.BETWEEN:
        return min(a2, a3) + margin < av < max(a2, a3) - margin
    if case is ReductionCase.LEFT_OUTSIDE:
        return (av - a2) * (a3 - a2) < 0 and abs(av - a2) > margin
    return (av - a3) * (a2 - a3) < 0 and abs(av - a3) > margin


def realized_case(av: float, a2: float, a3: float) -> ReductionCase:
    """Which of the three agents sits in the middle of a collinear triple."""
    for case in CASE_ORDER:
        if _realizes(case, av, a2, a3, 0.0):
            return case
    raise EdgeCollision("collinear triple with coincident agents")


def _lift(system: RMASystem, case: ReductionCase, a: np.ndarray) -> tuple[float, ReductionStep] | None:
    st = system.graph.steps[-1]
    v, (p1, p2) = st.vertex, st.parents
    a2, a3 = a[p1 - 1], a[p2 - 1]
    d23 = abs(a3 - a2)
    if d23 == 0.0:
        return None
    vi = virtual_interaction(system.law(v, p1), system.law(v, p2), case, d23)
    sigma = 1.0 if a3 > a2 else -1.0
    if case is ReductionCase.BETWEEN:
        av = a2 + sigma * vi.d12
    elif case is ReductionCase.LEFT_OUTSIDE:
        av = a2 - sigma * vi.d12
    else:
        av = a3 + sigma * vi.d13
    span = max(np.max(np.abs(a)), abs(av), 1.0)
    if not _realizes(case, av, a2, a3, 1e-12 * span):
        log.warning("enumerate: vertex %d realizes the wrong ordering for %s; branch dropped", v, case.value)
        return None
    s1, s2, scale = _step_scalars(system, v, p1, p2, vi.d12, vi.d13)
    return av, ReductionStep(v, (p1, p2), case, vi.d12, vi.d13, d23, s1, s2, scale)


def _enumerate(system: RMASystem) -> list[tuple[np.ndarray, tuple, list[ReductionStep]]]:
    n = system.n
    if n == 2:
        i, j = system.graph.base_edge
        a = np.zeros(2)
        a[j - 1] = rest_length(system.law(i, j))
        return [(a, (), [])]

    v = system.graph.steps[-1].vertex
    out = []
    for case in CASE_ORDER:
        red, remap = reduced_system(system, case)
        inv = {new: old for old, new in remap.items()}
        for a_red, cases, steps in _enumerate(red):
            a = np.zeros(n)
            for new, old in inv.items():
                a[old - 1] = a_red[new - 1]
            lifted = _lift(system, case, a)
            if lifted is None:
                continue
            a[v - 1], step = lifted
            out.append((a, (case,) + cases, [step] + [s.relabeled(inv) for s in steps]))
    return out


def _polish_line(system: RMASystem, a: np.ndarray, max_iter: int = 20) -> np.ndarray:
    """Newton on the a-equations with the first base vertex pinned."""
    n = system.n
    free = np.ones(n, dtype=bool)
    free[system.graph.base_edge[0] - 1] = False
    a = a.copy()
    F = vector_field(system, Configuration.on_line(a))[:n]
    r = float(np.max(np.abs(F)))
    for _ in range(max_iter):
        if r == 0.0:
            break
        J = field_hessian(system, Configuration.on_line(a))[:n, :n][:, free]
        step, *_ = linalg.lstsq(J, -F)
        trial = a.copy()
        trial[free] += step
        try:
            F_new = vector_field(system, Configuration.on_line(trial))[:n]
        except EdgeCollision:
            break
        r_new = float(np.max(np.abs(F_new)))
        if not r_new < r:
            break
        a, F, r = trial, F_new, r_new
    return a


# ----------------------- orbit records -----------------------
@dataclass(frozen=True)
class CriticalOrbitRecord:
    configuration: Configuration
    residual: float
    inertia: InertiaTriple
    nondegenerate: bool
    partition: CanonicalPartition
    case_vector: tuple[ReductionCase, ...] = ()
    part_inertias: tuple[InertiaTriple, ...] = ()
    steps: tuple[ReductionStep, ...] = ()
    predicted_inertia: InertiaTriple | None = None
    distances: dict = field(default_factory=dict, compare=False)

    @property
    def stable(self) -> bool:
        return self.inertia.n_plus == 0

    @property
    def case_key(self) -> tuple[int, ...]:
        return tuple(c.order for c in self.case_vector)

    def degenerate_steps(self, zero_tol: float = ZERO_TOL) -> list[ReductionStep]:
        return [s for s in self.steps if s.degenerate(zero_tol)]

    def to_dict(self) -> dict:
        return {
            "positions": self.configuration.points().tolist(),
            "distances": {f"{i}-{j}": d for (i, j), d in sorted(self.distances.items())},
            "inertia": self.inertia.to_list(),
            "nondegenerate": self.nondegenerate,
            "stable": self.stable,
            "partition": self.partition.to_list(),
            "case_vector": [c.value for c in self.case_vector],
            "part_inertias": [t.to_list() for t in self.part_inertias],
            "predicted_inertia": self.predicted_inertia.to_list() if self.predicted_inertia else None,
            "steps": [s.to_dict() for s in self.steps],
            "residual": self.residual,
        }


def orbit_record(
    system: RMASystem,
    config: Configuration,
    col_tol: float = COL_TOL,
    zero_tol: float = ZERO_TOL,
    case_vector: tuple = (),
    steps: tuple = (),
    line: bool = False,
) -> CriticalOrbitRecord:
    """Inertia, partition and per-part data for an equilibrium (any shape).

    For line orbits the inertia predicted by the reduction recurrence,
    (0, 3, 1) plus one sgn pair per removed vertex, is attached as well.
    """
    canon = canonical_orbit_form(config)
    H = field_hessian(system, canon)
    full = inertia(H, zero_tol)
    part = canonical_partition(system.graph, canon, col_tol)
    part_in = []
    for k in range(len(part)):
        sub = part_subsystem(system, part, k)
        sub_cfg = restrict_configuration(canon, part.relabels[k])
        part_in.append(inertia(field_hessian(sub, sub_cfg), zero_tol))
    predicted = None
    if line:
        predicted = InertiaTriple(0, 3, 1, zero_tol)
        for s in steps:
            predicted = predicted + s.contribution(zero_tol)
    return CriticalOrbitRecord(
        configuration=canon,
        residual=residual(system, canon),
        inertia=full,
        nondegenerate=full.n_zero == 3,
        partition=part,
        case_vector=tuple(case_vector),
        part_inertias=tuple(part_in),
        steps=tuple(steps),
        predicted_inertia=predicted,
        distances=edge_distances(system, canon),
    )


def enumerate_line_equilibria(
    system: RMASystem,
    col_tol: float = COL_TOL,
    zero_tol: float = ZERO_TOL,
    residual_tol: float = RESIDUAL_TOL,
    dedup_tol: float = DEDUP_TOL,
) -> list[CriticalOrbitRecord]:
    """All critical line configurations, one record per SE(2) orbit, sorted by case vector."""
    if not system.ensemble.admissible:
        raise NotClassF("line enumeration needs every edge law in class F")
    records: list[CriticalOrbitRecord] = []
    for a, cases, steps in _enumerate(system):
        a = _polish_line(system, a)
        cfg = canonical_orbit_form(Configuration.on_line(a))
        r = residual(system, cfg)
        if r > residual_tol:
            log.warning("enumerate: candidate %s has residual %.3e > %.1e; dropped", [c.value for c in cases], r,
                        residual_tol)
            continue
        if any(rec.configuration.allclose(cfg, dedup_tol) for rec in records):
            continue
        records.append(orbit_record(system, cfg, col_tol, zero_tol, cases, steps, line=True))
    records.sort(key=lambda rec: rec.case_key)
    bound = 3 ** (system.n - 2)
    assert len(records) <= bound, f"{len(records)} line orbits exceed 3^(N-2) = {bound}"
    log.debug("enumerate: %d line orbits for N=%d", len(records), system.n)
    return records


# ----------------------- index formula -----------------------
@dataclass(frozen=True)
class IndexFormulaReport:
    full: InertiaTriple
    parts: tuple[InertiaTriple, ...]
    partition: CanonicalPartition
    part_residuals: tuple[float, ...]
    n_minus_holds: bool
    n_plus_holds: bool
    implied_n_zero: int
    n_zero_consistent: bool
    implication_holds: bool

    @property
    def holds(self) -> bool:
        return self.n_minus_holds and self.n_plus_holds and self.n_zero_consistent and self.implication_holds

    def to_dict(self) -> dict:
        return {
            "holds": self.holds,
            "full": self.full.to_list(),
            "parts": [p.to_list() for p in self.parts],
            "partition": self.partition.to_list(),
            "part_residuals": list(self.part_residuals),
            "n_minus_holds": self.n_minus_holds,
            "n_plus_holds": self.n_plus_holds,
            "implied_n_zero": self.implied_n_zero,
            "n_zero_consistent": self.n_zero_consistent,
            "implication_holds": self.implication_holds,
        }


def _require_equilibrium(system: RMASystem, config: Configuration, residual_tol: float) -> float:
    r = residual(system, config)
    if r > residual_tol:
        raise NotEquilibrium(f"residual {r:.3e} exceeds {residual_tol:g}")
    return r


def check_index_formula(
    system: RMASystem,
    config: Configuration,
    col_tol: float = COL_TOL,
    zero_tol: float = ZERO_TOL,
    residual_tol: float = RESIDUAL_TOL,
) -> IndexFormulaReport:
    """Compare the full inertia with the sum over canonical-partition parts."""
    _require_equilibrium(system, config, residual_tol)
    full = inertia(field_hessian(system, config), zero_tol)
    part = canonical_partition(system.graph, config, col_tol)
    triples, res = [], []
    for k in range(len(part)):
        sub = part_subsystem(system, part, k)
        sub_cfg = restrict_configuration(config, part.relabels[k])
        triples.append(inertia(field_hessian(sub, sub_cfg), zero_tol))
        res.append(residual(sub, sub_cfg))
    n_plus = sum(t.n_plus for t in triples)
    n_minus = sum(t.n_minus for t in triples)
    implied = 2 * system.n - n_plus - n_minus
    return IndexFormulaReport(
        full=full,
        parts=tuple(triples),
        partition=part,
        part_residuals=tuple(res),
        n_minus_holds=full.n_minus == n_minus,
        n_plus_holds=full.n_plus == n_plus,
        implied_n_zero=implied,
        n_zero_consistent=full.n_zero == implied,
        implication_holds=(full.n_zero == 3) == all(t.n_zero == 3 for t in triples),
    )


# ----------------------- inertia formula -----------------------
@dataclass(frozen=True)
class InertiaFormulaReport:
    vertex: int
    parents: tuple[int, int]
    case: ReductionCase
    d12: float
    d13: float
    s1: float
    s2: float
    full: InertiaTriple
    reduced: InertiaTriple
    predicted: InertiaTriple
    reduced_residual: float
    congruence: dict | None = None

    @property
    def difference(self) -> InertiaTriple:
        return self.full - self.reduced

    @property
    def holds(self) -> bool:
        ok = self.difference.as_tuple() == self.predicted.as_tuple()
        if self.congruence is not None:
            ok = ok and self.congruence["ok"]
        return ok

    def to_dict(self) -> dict:
        return {
            "holds": self.holds,
            "vertex": self.vertex,
            "parents": list(self.parents),
            "case": self.case.value,
            "d12": self.d12,
            "d13": self.d13,
            "s1": self.s1,
            "s2": self.s2,
            "full": self.full.to_list(),
            "reduced": self.reduced.to_list(),
            "difference": self.difference.to_list(),
            "predicted": self.predicted.to_list(),
            "reduced_residual": self.reduced_residual,
            "congruence": self.congruence,
        }


def _on_a_axis(system: RMASystem, config: Configuration, col_tol: float) -> np.ndarray:
    """a-coordinates of a collinear configuration after rotating its line onto the a-axis."""
    pts = config.points()
    centered = pts - pts.mean(axis=0)
    sv = linalg.svdvals(centered)
    if sv[0] == 0.0 or sv[1] > col_tol * sv[0]:
        raise NotCollinear(f"configuration is not collinear (σ₂/σ₁ = {sv[1] / max(sv[0], 1e-300):.2e})")
    g1, g2 = system.graph.base_edge
    theta, v = gauge_motion(config, g1, g2)
    return apply_rigid_motion(config, theta, v).a.copy()


def _congruence(F: np.ndarray, Fs: np.ndarray, v: int, inv: dict[int, int], weights: tuple[float, float],
                parents: tuple[int, int], diag_v: float) -> dict:
    """Check QᵀFQ = diag(diag_v, λ(Fs)) for Q = [e_v, lifted eigenvectors of Fs]."""
    n = F.shape[0]
    lam, V = linalg.eigh(Fs)
    p1, p2 = parents
    w2, w3 = weights
    Q = np.zeros((n, n))
    Q[v - 1, 0] = 1.0
    for k in range(n - 1):
        col = np.zeros(n)
        for new, old in inv.items():
            col[old - 1] = V[new - 1, k]
        col[v - 1] = (w2 * col[p1 - 1] + w3 * col[p2 - 1]) / (w2 + w3)
        Q[:, k + 1] = col
    L = Q.T @ F @ Q
    expected = np.concatenate([[diag_v], lam])
    scale = max(1.0, float(np.max(np.abs(F))))
    off = float(np.max(np.abs(L - np.diag(np.diag(L)))))
    diag_err = float(np.max(np.abs(np.diag(L) - expected)))
    return {"offdiag_max": off, "diag_err": diag_err, "ok": off <= 1e-8 * scale and diag_err <= 1e-8 * scale}


def check_inertia_formula(
    system: RMASystem,
    config: Configuration,
    col_tol: float = COL_TOL,
    zero_tol: float = ZERO_TOL,
    residual_tol: float = RESIDUAL_TOL,
    congruence: bool = True,
) -> InertiaFormulaReport:
    """n(H_p) − n(H_p*) = sgn(−f₁₂ − f₁₃) + sgn(−f̃′₁₂ − f̃′₁₃) at the last Henneberg vertex."""
    if not system.graph.steps:
        raise AnalysisError("the inertia formula needs at least one Henneberg step")
    _require_equilibrium(system, config, residual_tol)
    a = _on_a_axis(system, config, col_tol)
    line = Configuration.on_line(a)

    st = system.graph.steps[-1]
    v, (p1, p2) = st.vertex, st.parents
    av, a2, a3 = a[v - 1], a[p1 - 1], a[p2 - 1]
    case = realized_case(av, a2, a3)
    red, remap = reduced_system(system, case)
    inv = {new: old for old, new in remap.items()}
    red_line = Configuration.on_line([a[inv[k] - 1] for k in range(1, red.n + 1)])

    H = field_hessian(system, line)
    Hs = field_hessian(red, red_line)
    d12, d13 = abs(av - a2), abs(av - a3)
    s1, s2, scale = _step_scalars(system, v, p1, p2, d12, d13)
    tol = zero_tol * scale
    predicted = InertiaTriple.sgn(s1, tol) + InertiaTriple.sgn(s2, tol)

    cong = None
    if congruence:
        n = system.n
        f12, f13 = system.law(v, p1), system.law(v, p2)
        f_check = _congruence(H[n:, n:], Hs[red.n:, red.n:], v, inv, (a3 - av, av - a2), (p1, p2), s1)
        df_check = _congruence(H[:n, :n], Hs[:red.n, :red.n], v, inv,
                               (f12.ftilde_prime(d12), f13.ftilde_prime(d13)), (p1, p2), s2)
        cong = {"F": f_check, "dF": df_check, "ok": f_check["ok"] and df_check["ok"]}

    return InertiaFormulaReport(
        vertex=v,
        parents=(p1, p2),
        case=case,
        d12=d12,
        d13=d13,
        s1=s1,
        s2=s2,
        full=inertia(H, zero_tol),
        reduced=inertia(Hs, zero_tol),
        predicted=predicted,
        reduced_residual=residual(red, red_line),
        congruence=cong,
    )


# ----------------------- degeneracy repair -----------------------
_BUMP_SIGNS = {
    ReductionCase.BETWEEN: (1.0, 1.0, -1.0),
    ReductionCase.LEFT_OUTSIDE: (1.0, -1.0, 1.0),
    ReductionCase.RIGHT_OUTSIDE: (-1.0, 1.0, 1.0),
}


def repair_degenerate(
    system: RMASystem,
    record: CriticalOrbitRecord,
    zero_tol: float = ZERO_TOL,
    residual_tol: float = RESIDUAL_TOL,
    strength: float = 0.1,
) -> RMASystem:
    """Add balanced bumps around every reduction step where f₁₂ + f₁₃ vanishes.

    The bumps cancel in every agent's force balance at the recorded positions,
    so the equilibrium stays put while the extra zero mode is lifted.
    """
    bad = record.degenerate_steps(zero_tol)
    if record.inertia.n_zero <= 3 or not bad:
        raise NotRepairable(f"orbit with inertia {record.inertia.as_tuple()} has no f12 + f13 = 0 step to repair")
    cfg = record.configuration
    laws = dict(system.ensemble.laws)
    for st in bad:
        v, (p1, p2) = st.vertex, st.parents
        edges = (edge_key(v, p1), edge_key(v, p2), edge_key(p1, p2))
        dists = [cfg.distance(*e) for e in edges]
        widths = [0.25 * d for d in dists]
        slope_floor = []
        for e, d, w in zip(edges, dists, widths):
            grid = np.linspace(d - w, d + w, 33)
            slope_floor.append(w * min(system.ensemble.laws[e].ftilde_prime(x) for x in grid))
        eta = strength * min(slope_floor)
        for e, d, w, sign in zip(edges, dists, widths, _BUMP_SIGNS[st.case]):
            laws[e] = sum_laws(laws[e], make_bump(d, sign * eta, 0.0, w))
        log.info("repair: vertex %d (%s) bumped with eta=%.3e", v, st.case.value, eta)

    repaired = RMASystem(system.graph, Ensemble(laws))
    r = residual(repaired, cfg)
    n0 = inertia(field_hessian(repaired, cfg), zero_tol).n_zero
    if r > residual_tol or n0 != 3:
        raise NotRepairable(f"repair left residual {r:.3e} and n0={n0}")
    return repaired


# ----------------------- subgraph assembly -----------------------
@dataclass(frozen=True)
class SubgraphAssemblyReport:
    entries: tuple[dict, ...]

    @property
    def all_nondegenerate(self) -> bool:
        return all(e["degenerate"] == 0 for e in self.entries)

    def to_dict(self) -> dict:
        return {"all_nondegenerate": self.all_nondegenerate, "subgraphs": list(self.entries)}


def check_subgraph_assembly(
    system: RMASystem, zero_tol: float = ZERO_TOL, limit: int | None = 500
) -> SubgraphAssemblyReport:
    """Line-orbit nondegeneracy of every triangulated Laman subsystem."""
    entries = []
    for sub_edges in tlg_subgraphs(system.graph, limit):
        g, remap = induced_subsystem(system.graph, sub_edges)
        sub = RMASystem(g, system.ensemble.restrict(sub_edges, remap))
        recs = enumerate_line_equilibria(sub, zero_tol=zero_tol)
        entries.append(
            {
                "edges": [list(e) for e in sorted(sub_edges)],
                "n": g.n,
                "orbits": len(recs),
                "degenerate": sum(not r.nondegenerate for r in recs),
            }
        )
    return SubgraphAssemblyReport(tuple(entries))

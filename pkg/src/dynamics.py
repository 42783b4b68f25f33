"""Potential, vector field, linearization and gradient flow of an RMA system.

Agents move by ẋᵢ = Σ_{j∈Vᵢ} f_ij(d_ij)(x_j − x_i), the negative gradient of
Φ = Σ_edges φ_ij(d_ij). Configurations are flat arrays in (ā, b̄) order:
a₁..a_N followed by b₁..b_N.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable

import numpy as np
from scipy import linalg
from scipy.integrate import solve_ivp

from src.interaction_laws import Ensemble, InteractionLaw
from src.tlg_graph import TLGraph

log = logging.getLogger(__name__)


class DynamicsError(RuntimeError):
    pass


class EdgeCollision(DynamicsError, ValueError):
    pass


class Stalled(DynamicsError):
    def __init__(self, msg: str, result: "FlowResult"):
        super().__init__(msg)
        self.result = result


class CollisionApproach(DynamicsError):
    def __init__(self, msg: str, result: "FlowResult"):
        super().__init__(msg)
        self.result = result


class SingularGaugeJacobian(DynamicsError):
    pass


class NotConverged(DynamicsError):
    def __init__(self, msg: str, config: "Configuration", residual: float):
        super().__init__(msg)
        self.config = config
        self.residual = residual


# ----------------------- types -----------------------
@dataclass(frozen=True, eq=False)
class Configuration:
    coords: np.ndarray

    def __post_init__(self):
        arr = np.array(self.coords, dtype=float).ravel()
        if arr.size % 2 or arr.size == 0:
            raise ValueError(f"configuration needs 2N coordinates, got {arr.size}")
        arr.setflags(write=False)
        object.__setattr__(self, "coords", arr)

    @classmethod
    def from_points(cls, points: Iterable[Iterable[float]]) -> "Configuration":
        pts = np.asarray(list(points), dtype=float).reshape(-1, 2)
        return cls(np.concatenate([pts[:, 0], pts[:, 1]]))

    @classmethod
    def on_line(cls, a: Iterable[float]) -> "Configuration":
        a = np.asarray(list(a), dtype=float)
        return cls(np.concatenate([a, np.zeros_like(a)]))

    @property
    def n(self) -> int:
        return self.coords.size // 2

    @property
    def a(self) -> np.ndarray:
        return self.coords[: self.n]

    @property
    def b(self) -> np.ndarray:
        return self.coords[self.n :]

    def points(self) -> np.ndarray:
        return np.column_stack([self.a, self.b])

    def point(self, v: int) -> np.ndarray:
        return np.array([self.a[v - 1], self.b[v - 1]])

    def distance(self, i: int, j: int) -> float:
        return math.hypot(self.a[j - 1] - self.a[i - 1], self.b[j - 1] - self.b[i - 1])

    def allclose(self, other: "Configuration", atol: float = 1e-9) -> bool:
        return self.n == other.n and bool(np.allclose(self.coords, other.coords, rtol=0.0, atol=atol))

    def to_dict(self) -> dict:
        return {"points": self.points().tolist()}


@dataclass(frozen=True)
class RMASystem:
    graph: TLGraph
    ensemble: Ensemble

    def __post_init__(self):
        if self.ensemble.edges != self.graph.edges:
            missing = sorted(self.graph.edges - self.ensemble.edges)
            extra = sorted(self.ensemble.edges - self.graph.edges)
            raise ValueError(f"ensemble must be keyed by graph edges (missing={missing}, extra={extra})")

    @property
    def n(self) -> int:
        return self.graph.n

    @cached_property
    def terms(self) -> list[tuple[int, int, InteractionLaw]]:
        """Zero-based (i, j, law) per edge, sorted."""
        return [(i - 1, j - 1, self.ensemble.laws[(i, j)]) for i, j in self.graph.edge_list]

    def law(self, i: int, j: int) -> InteractionLaw:
        return self.ensemble.law(i, j)


def _as_array(config: Configuration | np.ndarray) -> np.ndarray:
    return config.coords if isinstance(config, Configuration) else np.asarray(config, dtype=float)


def _check_size(system: RMASystem, y: np.ndarray):
    if y.size != 2 * system.n:
        raise ValueError(f"configuration has {y.size // 2} agents, system has {system.n}")


# ----------------------- potential / field / hessian -----------------------
def edge_distances(system: RMASystem, config: Configuration | np.ndarray) -> dict[tuple[int, int], float]:
    y = _as_array(config)
    n = system.n
    return {(i + 1, j + 1): math.hypot(y[j] - y[i], y[n + j] - y[n + i]) for i, j, _ in system.terms}


def min_edge_distance(system: RMASystem, config: Configuration | np.ndarray) -> float:
    return min(edge_distances(system, config).values())


def _edge_vector(y: np.ndarray, n: int, i: int, j: int) -> tuple[float, float, float]:
    da = y[j] - y[i]
    db = y[n + j] - y[n + i]
    d = math.hypot(da, db)
    if d <= 0.0:
        raise EdgeCollision(f"agents {i + 1} and {j + 1} coincide")
    return da, db, d


def potential(system: RMASystem, config: Configuration | np.ndarray) -> float:
    y = _as_array(config)
    _check_size(system, y)
    total = 0.0
    for i, j, law in system.terms:
        _, _, d = _edge_vector(y, system.n, i, j)
        total += law.potential(d)
    return total


def _field(system: RMASystem, y: np.ndarray) -> np.ndarray:
    n = system.n
    out = np.zeros(2 * n)
    for i, j, law in system.terms:
        da, db, d = _edge_vector(y, n, i, j)
        fij = law.f(d)
        out[i] += fij * da
        out[n + i] += fij * db
        out[j] -= fij * da
        out[n + j] -= fij * db
    return out


def vector_field(system: RMASystem, config: Configuration | np.ndarray) -> np.ndarray:
    y = _as_array(config)
    _check_size(system, y)
    return _field(system, y)


def residual(system: RMASystem, config: Configuration | np.ndarray) -> float:
    """‖vector_field‖∞."""
    return float(np.max(np.abs(vector_field(system, config))))


def field_hessian(system: RMASystem, config: Configuration | np.ndarray) -> np.ndarray:
    """Jacobian of the vector field in (ā, b̄) order.

    Cross block of edge (i, j) with unit u along x_j − x_i is
    f(I − uuᵀ) + f̃′uuᵀ; diagonal blocks are minus the incident cross blocks.
    """
    y = _as_array(config)
    _check_size(system, y)
    n = system.n
    H = np.zeros((2 * n, 2 * n))
    for i, j, law in system.terms:
        da, db, d = _edge_vector(y, n, i, j)
        ft, ftp = law.evaluate(d)
        fij = ft / d
        ua, ub = da / d, db / d
        B = fij * np.eye(2) + (ftp - fij) * np.array([[ua * ua, ua * ub], [ub * ua, ub * ub]])
        for p, q in ((i, j), (j, i)):
            for r in range(2):
                for c in range(2):
                    H[r * n + p, c * n + q] += B[r, c]
                    H[r * n + p, c * n + p] -= B[r, c]
    return H


def null_vectors(config: Configuration) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Translations along a and b, and the rotation generator (−b̄, ā)."""
    n = config.n
    one, zero = np.ones(n), np.zeros(n)
    t_a = np.concatenate([one, zero])
    t_b = np.concatenate([zero, one])
    r_p = np.concatenate([-config.b, config.a])
    return t_a, t_b, r_p


# ----------------------- rigid motions -----------------------
def _rot(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def apply_rigid_motion(config: Configuration, theta: float, v: Iterable[float] = (0.0, 0.0)) -> Configuration:
    pts = config.points() @ _rot(theta).T + np.asarray(list(v), dtype=float)
    return Configuration.from_points(pts)


def compose_rigid_motions(first: tuple[float, Iterable[float]], second: tuple[float, Iterable[float]]):
    """γ₂·γ₁ = (θ₂θ₁, θ₂v₁ + v₂), with rotations written as angles."""
    t1, v1 = first
    t2, v2 = second
    return t1 + t2, _rot(t2) @ np.asarray(list(v1), dtype=float) + np.asarray(list(v2), dtype=float)


def gauge_motion(config: Configuration, i: int, j: int) -> tuple[float, np.ndarray]:
    """Motion putting x_i at the origin and x_j on the positive a-axis."""
    xi, xj = config.point(i), config.point(j)
    theta = -math.atan2(xj[1] - xi[1], xj[0] - xi[0])
    return theta, -_rot(theta) @ xi


def random_configuration(
    n: int, rng: np.random.Generator, scale: float = 2.0, min_distance: float = 0.2, max_tries: int = 1000
) -> Configuration:
    for _ in range(max_tries):
        pts = rng.uniform(0.0, scale, size=(n, 2))
        gaps = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
        if n < 2 or gaps[np.triu_indices(n, 1)].min() >= min_distance:
            return Configuration.from_points(pts)
    raise DynamicsError(f"could not place {n} agents {min_distance} apart within scale {scale}")


def restrict_configuration(config: Configuration, remap: dict[int, int]) -> Configuration:
    """Sub-configuration on the vertices of `remap` (old id -> new id)."""
    pts = np.zeros((len(remap), 2))
    for old, new in remap.items():
        pts[new - 1] = config.point(old)
    return Configuration.from_points(pts)


# ----------------------- flow -----------------------
@dataclass
class FlowResult:
    config: Configuration
    residual: float
    time: float
    steps: int
    min_edge_distance: float
    potential_start: float
    potential_end: float
    potential_monotone: bool
    status: str
    polished: bool = False
    times: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    potentials: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "residual": self.residual,
            "time": self.time,
            "steps": self.steps,
            "min_edge_distance": self.min_edge_distance,
            "potential_start": self.potential_start,
            "potential_end": self.potential_end,
            "potential_monotone": self.potential_monotone,
            "polished": self.polished,
            "final": self.config.to_dict(),
        }


def _integrate(system: RMASystem, y0: np.ndarray, t0: float, t_max: float, stop: float, method: str,
               rtol: float, atol: float, collision_floor: float):
    def rhs(t, y):
        return _field(system, y)

    def converged(t, y):
        return float(np.max(np.abs(_field(system, y)))) - stop

    converged.terminal = True
    converged.direction = -1

    def collision(t, y):
        return min_edge_distance(system, y) - collision_floor

    collision.terminal = True
    collision.direction = -1

    return solve_ivp(rhs, (t0, t_max), y0, method=method, rtol=rtol, atol=atol, events=[converged, collision])


def flow(
    system: RMASystem,
    start: Configuration,
    tol: float = 1e-10,
    t_max: float = 1e4,
    rtol: float = 1e-8,
    atol: float = 1e-10,
    collision_floor: float = 1e-8,
    check_potential: bool = True,
    handoff: float = 1e-6,
) -> FlowResult:
    """Integrate the gradient flow until ‖F‖∞ ≤ tol.

    Adaptive RK45 carries the transient down to ‖F‖∞ ≤ handoff. Explicit
    steps cannot resolve the stiff tail below that level, so the endpoint is
    polished by gauge-fixed Newton; when the orbit there is singular the tail
    is integrated with LSODA instead.
    """
    y0 = start.coords.copy()
    _check_size(system, y0)
    phi0 = potential(system, y0)
    r0 = float(np.max(np.abs(_field(system, y0))))
    d0 = min_edge_distance(system, y0)
    if r0 <= tol:
        return FlowResult(start, r0, 0.0, 0, d0, phi0, phi0, True, "converged")

    stop = max(handoff, tol)
    message = "handed off below the RK45 stop level"
    if r0 > stop:
        sol = _integrate(system, y0, 0.0, t_max, stop, "RK45", rtol, atol, collision_floor)
        ts, ys, message = sol.t, sol.y.T, sol.message
        reached = sol.t_events[0].size > 0
        hit_collision = sol.t_events[1].size > 0
    else:
        ts, ys = np.zeros(1), y0[None, :]
        reached, hit_collision = True, False
    y_end = ys[-1]
    r_end = float(np.max(np.abs(_field(system, y_end))))
    polished = False

    if not hit_collision and r_end > tol and reached:
        try:
            cfg, r_pol, ok = _gauged_newton(system, Configuration(y_end), tol, max_iter=20)
        except SingularGaugeJacobian:
            ok = False
        if ok:
            log.debug("flow: polished at t=%.3g from residual %.3e to %.3e", ts[-1], r_end, r_pol)
            y_end, r_end, polished = cfg.coords, r_pol, True
        else:
            tail = _integrate(system, y_end, float(ts[-1]), t_max, tol, "LSODA", rtol, atol, collision_floor)
            message = tail.message
            ts = np.concatenate([ts, tail.t[1:]])
            ys = np.vstack([ys, tail.y.T[1:]])
            hit_collision = tail.t_events[1].size > 0
            y_end = ys[-1]
            r_end = float(np.max(np.abs(_field(system, y_end))))

    dmin = min(min(min_edge_distance(system, y) for y in ys), min_edge_distance(system, y_end))
    if check_potential:
        phis = np.array([potential(system, y) for y in ys])
        if polished:
            phis = np.append(phis, potential(system, y_end))
            ts = np.append(ts, ts[-1])
    else:
        phis = np.array([phi0])
    phi_end = float(phis[-1]) if check_potential else potential(system, y_end)
    slack = 1e-12 * (1.0 + np.abs(phis[:-1]))
    monotone = bool(np.all(np.diff(phis) <= slack)) if phis.size > 1 else True
    if not monotone:
        log.warning("flow: potential increased along the trajectory (max rise %.3e)", float(np.max(np.diff(phis))))

    status = "converged" if r_end <= tol else ("collision" if hit_collision else "stalled")
    result = FlowResult(
        config=Configuration(y_end),
        residual=r_end,
        time=float(ts[-1]),
        steps=len(ys) - 1,
        min_edge_distance=dmin,
        potential_start=phi0,
        potential_end=phi_end,
        potential_monotone=monotone,
        status=status,
        polished=polished,
        times=ts,
        potentials=phis,
    )
    log.debug("flow: %s after t=%.3g (%d steps), residual %.3e", status, result.time, result.steps, r_end)
    if status == "collision":
        raise CollisionApproach(f"edge distance fell below {collision_floor:g} at t={result.time:.4g}", result)
    if status == "stalled":
        raise Stalled(f"t_max={t_max:g} reached with residual {r_end:.3e} ({message})", result)
    return result


# ----------------------- newton -----------------------
def _gauge_free(system: RMASystem) -> np.ndarray:
    n = system.n
    g1, g2 = system.graph.base_edge
    mask = np.ones(2 * n, dtype=bool)
    mask[[g1 - 1, n + g1 - 1, n + g2 - 1]] = False
    return mask


def _gauged_newton(
    system: RMASystem, config: Configuration, tol: float, max_iter: int = 50, sv_tol: float = 1e-9
) -> tuple[Configuration, float, bool]:
    """Newton on F = 0 in the base-edge gauge; returns (config, residual, converged) in the caller's frame."""
    g1, g2 = system.graph.base_edge
    theta, v = gauge_motion(config, g1, g2)
    z = apply_rigid_motion(config, theta, v).coords.copy()
    n = system.n
    z[[g1 - 1, n + g1 - 1, n + g2 - 1]] = 0.0
    free = _gauge_free(system)

    F = _field(system, z)
    r = float(np.max(np.abs(F)))
    for it in range(max_iter):
        if r <= tol:
            break
        J = field_hessian(system, z)[:, free]
        sv = linalg.svdvals(J)
        if sv[-1] <= sv_tol * sv[0]:
            raise SingularGaugeJacobian(
                f"gauge-fixed Jacobian is singular (σ_min/σ_max = {sv[-1] / sv[0]:.2e}); orbit is degenerate"
            )
        step, *_ = linalg.lstsq(J, -F)
        trial = z.copy()
        trial[free] += step
        try:
            F_new = _field(system, trial)
            r_new = float(np.max(np.abs(F_new)))
        except EdgeCollision:
            r_new = np.inf
        if not np.isfinite(r_new) or r_new > 10.0 * r:
            log.debug("newton: diverging at iteration %d (residual %.3e)", it, r)
            break
        z, F, r = trial, F_new, r_new

    back = apply_rigid_motion(Configuration(z), -theta, (0.0, 0.0))
    origin = np.asarray(-_rot(-theta) @ v)
    return apply_rigid_motion(back, 0.0, origin), r, r <= tol


def newton_refine(
    system: RMASystem,
    approx: Configuration,
    tol: float = 1e-12,
    max_iter: int = 50,
    basin: float = 1e-3,
    sv_tol: float = 1e-9,
) -> Configuration:
    """Solve F = 0 with x_{g1} pinned at the origin and x_{g2} on the a-axis.

    (g1, g2) is the Henneberg base edge. A start outside the basin, or an
    iteration that diverges or runs out of steps, is handed to flow once
    before Newton resumes. Raises NotConverged if tol is still missed.
    """
    r = residual(system, approx)
    if r <= tol:
        return approx
    current = approx
    used_flow = False
    if r > basin:
        log.info("newton_refine: residual %.3e above basin %.1e, flowing first", r, basin)
        current = flow(system, approx, tol=basin * 1e-3).config
        used_flow = True

    while True:
        current, r, ok = _gauged_newton(system, current, tol, max_iter, sv_tol)
        if ok:
            return current
        if used_flow:
            raise NotConverged(f"residual {r:.3e} above {tol:g} after flow fallback", current, r)
        log.info("newton_refine: residual stuck at %.3e, falling back to flow", r)
        current = flow(system, current, tol=basin * 1e-3).config
        used_flow = True

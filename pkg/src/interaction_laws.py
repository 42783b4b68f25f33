"""Class-F interaction laws and the virtual-interaction calculus.

A law is evaluated through f̃(d) = d·f(d) and its derivative f̃′(d). Class F
means f̃′ > 0 with a single zero of f̃ (C1) and a pairwise potential that blows
up at collision (C2, read as f̃ → −∞ as d → 0⁺).

Removing a collinear agent from a triangle replaces the law between its two
parents by f* = f₂₃ + g₂₃, where g₂₃ is the force balance ("virtual
interaction") of the removed agent. Three orderings of the removed agent
relative to its parents are possible; see ReductionCase.
"""
from __future__ import annotations

import logging
import math
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Callable, ClassVar, Iterable, Mapping, NamedTuple

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicHermiteSpline

from src.tlg_graph import Edge, edge_key

log = logging.getLogger(__name__)

ROOT_TOL = 1e-12
_EPS = np.finfo(float).eps
DEFAULT_GRID = np.geomspace(1e-4, 1e3, 401)
C2_PROBE = np.geomspace(1e-2, 1e-8, 7)


class LawError(ValueError):
    """Base class for interaction-law failures."""


class NonPositiveDistance(LawError):
    pass


class NotClassF(LawError):
    pass


class NoRoot(LawError):
    pass


class InvalidSupport(LawError):
    pass


class ReductionCase(Enum):
    """Position of the removed agent relative to its parents (first, second)."""

    BETWEEN = "between"
    LEFT_OUTSIDE = "left_outside"  # first parent lies between the agent and the second parent
    RIGHT_OUTSIDE = "right_outside"  # second parent lies in the middle

    @property
    def order(self) -> int:
        return CASE_ORDER.index(self)


CASE_ORDER = (ReductionCase.BETWEEN, ReductionCase.LEFT_OUTSIDE, ReductionCase.RIGHT_OUTSIDE)


def _check_distance(d: float) -> float:
    if not d > 0:
        raise NonPositiveDistance(f"distance must be positive, got {d}")
    return float(d)


# ----------------------- law types -----------------------
class InteractionLaw(ABC):
    family: ClassVar[str] = "abstract"
    closed_potential: ClassVar[bool] = False

    @abstractmethod
    def ftilde(self, d: float) -> float: ...

    @abstractmethod
    def ftilde_prime(self, d: float) -> float: ...

    def evaluate(self, d: float) -> tuple[float, float]:
        return self.ftilde(d), self.ftilde_prime(d)

    def f(self, d: float) -> float:
        return self.ftilde(d) / d

    def potential(self, d: float) -> float:
        """φ(d) = ∫₁ᵈ f̃(x) dx."""
        val, _ = quad(self.ftilde, 1.0, d, epsabs=1e-10, epsrel=1e-10, limit=200)
        return float(val)

    def params(self) -> dict:
        return {}

    @property
    def class_f(self) -> bool:
        return True

    @cached_property
    def rest(self) -> float:
        """Unique zero of f̃; defined for class-F laws only."""
        if not self.class_f:
            raise NotClassF(f"{self.describe()} is not class F; rest length is undefined")
        d0, _, _ = _solve_increasing(self.evaluate, 1.0, 0.0, np.inf)
        return float(d0)

    def describe(self) -> dict:
        return {"family": self.family, **self.params()}

    def __add__(self, other: "InteractionLaw") -> "InteractionLaw":
        return sum_laws(self, other)


@dataclass(frozen=True)
class StandardLaw(InteractionLaw):
    """S(k, c): f̃(d) = k(d − c/d), rest length √c."""

    k: float = 1.0
    c: float = 1.0
    family: ClassVar[str] = "standard"
    closed_potential: ClassVar[bool] = True

    def __post_init__(self):
        if not (self.k > 0 and self.c > 0):
            raise NotClassF(f"S(k,c) needs k, c > 0, got k={self.k}, c={self.c}")

    def f(self, d):
        return self.k * (1.0 - self.c / (d * d))

    def ftilde(self, d):
        return self.k * (d - self.c / d)

    def ftilde_prime(self, d):
        return self.k * (1.0 + self.c / (d * d))

    def evaluate(self, d):
        q = self.c / d
        return self.k * (d - q), self.k * (1.0 + q / d)

    def potential(self, d):
        return self.k * ((d * d - 1.0) / 2.0 - self.c * math.log(d))

    def params(self):
        return {"k": self.k, "c": self.c}


@dataclass(frozen=True)
class PowerLaw(InteractionLaw):
    """f̃(d) = k(d^α − c/d)."""

    k: float = 1.0
    c: float = 1.0
    alpha: float = 1.0
    family: ClassVar[str] = "power"
    closed_potential: ClassVar[bool] = True

    def __post_init__(self):
        if not (self.k > 0 and self.c > 0 and self.alpha > 0):
            raise NotClassF(f"power law needs k, c, alpha > 0, got {self.params()}")

    def ftilde(self, d):
        return self.k * (d**self.alpha - self.c / d)

    def ftilde_prime(self, d):
        return self.k * (self.alpha * d ** (self.alpha - 1.0) + self.c / (d * d))

    def potential(self, d):
        a1 = self.alpha + 1.0
        return self.k * ((d**a1 - 1.0) / a1 - self.c * math.log(d))

    def params(self):
        return {"k": self.k, "c": self.c, "alpha": self.alpha}


class CallableLaw(InteractionLaw):
    """User-supplied f̃ (and optionally f̃′); class F is probed, not assumed."""

    family = "callable"

    def __init__(
        self,
        ftilde: Callable[[float], float],
        ftilde_prime: Callable[[float], float] | None = None,
        name: str = "callable",
        potential: Callable[[float], float] | None = None,
    ):
        self._ft = ftilde
        self._ftp = ftilde_prime
        self._phi = potential
        self.name = name

    def ftilde(self, d):
        return float(self._ft(d))

    def ftilde_prime(self, d):
        if self._ftp is not None:
            return float(self._ftp(d))
        h = 1e-6 * max(1.0, d)
        h = min(h, 0.5 * d)
        return (self._ft(d + h) - self._ft(d - h)) / (2.0 * h)

    def potential(self, d):
        if self._phi is not None:
            return float(self._phi(d))
        return super().potential(d)

    @property
    def closed_potential(self):  # type: ignore[override]
        return self._phi is not None

    @cached_property
    def _report(self) -> "ClassFReport":
        return validate_class_f(self)

    @property
    def class_f(self):
        return self._report.passed

    def params(self):
        return {"name": self.name}


@dataclass(frozen=True)
class PerturbationBump(InteractionLaw):
    """C¹ cubic Hermite bump ε̃ supported on (d0 − width, d0 + width)."""

    d0: float
    width: float
    value: float
    slope: float
    family: ClassVar[str] = "bump"
    closed_potential: ClassVar[bool] = True
    _spline: CubicHermiteSpline = field(init=False, repr=False, compare=False)
    _anti: object = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.width > 0 or not self.d0 - self.width > 0:
            raise InvalidSupport(f"bump support ({self.d0 - self.width}, {self.d0 + self.width}) must lie in d > 0")
        knots = [self.d0 - self.width, self.d0, self.d0 + self.width]
        sp = CubicHermiteSpline(knots, [0.0, self.value, 0.0], [0.0, self.slope, 0.0])
        object.__setattr__(self, "_spline", sp)
        object.__setattr__(self, "_anti", sp.antiderivative())

    @property
    def support(self) -> tuple[float, float]:
        return self.d0 - self.width, self.d0 + self.width

    def _inside(self, d):
        lo, hi = self.support
        return lo < d < hi

    def ftilde(self, d):
        return float(self._spline(d)) if self._inside(d) else 0.0

    def ftilde_prime(self, d):
        return float(self._spline(d, 1)) if self._inside(d) else 0.0

    def _integral_to(self, d):
        lo, hi = self.support
        return float(self._anti(min(max(d, lo), hi)))

    def potential(self, d):
        return self._integral_to(d) - self._integral_to(1.0)

    @property
    def class_f(self):
        return False

    def params(self):
        return {"d0": self.d0, "width": self.width, "value": self.value, "slope": self.slope}


class SumLaw(InteractionLaw):
    family = "sum"

    def __init__(self, terms: Iterable[InteractionLaw]):
        flat: list[InteractionLaw] = []
        for t in terms:
            flat.extend(t.terms if isinstance(t, SumLaw) else [t])
        self.terms = tuple(flat)

    def ftilde(self, d):
        return sum(t.ftilde(d) for t in self.terms)

    def ftilde_prime(self, d):
        return sum(t.ftilde_prime(d) for t in self.terms)

    def evaluate(self, d):
        v = s = 0.0
        for t in self.terms:
            a, b = t.evaluate(d)
            v += a
            s += b
        return v, s

    def f(self, d):
        return sum(t.f(d) for t in self.terms)

    def potential(self, d):
        return sum(t.potential(d) for t in self.terms)

    @property
    def closed_potential(self):  # type: ignore[override]
        return all(t.closed_potential for t in self.terms)

    @cached_property
    def _report(self) -> "ClassFReport":
        return validate_class_f(self)

    @property
    def class_f(self):
        return self._report.passed

    def describe(self):
        return {"family": self.family, "terms": [t.describe() for t in self.terms]}

    def __getstate__(self):
        return {"terms": self.terms}

    def __setstate__(self, state):
        self.terms = state["terms"]


@dataclass(frozen=True)
class ScaledLaw(InteractionLaw):
    """f_new(d) = alpha · f(beta · d)."""

    base: InteractionLaw
    alpha: float
    beta: float
    family: ClassVar[str] = "scaled"

    def ftilde(self, d):
        return self.alpha / self.beta * self.base.ftilde(self.beta * d)

    def ftilde_prime(self, d):
        return self.alpha * self.base.ftilde_prime(self.beta * d)

    def evaluate(self, d):
        v, s = self.base.evaluate(self.beta * d)
        return self.alpha / self.beta * v, self.alpha * s

    def f(self, d):
        return self.alpha * self.base.f(self.beta * d)

    def potential(self, d):
        return self.alpha / self.beta**2 * (self.base.potential(self.beta * d) - self.base.potential(self.beta))

    @property
    def closed_potential(self):  # type: ignore[override]
        return self.base.closed_potential

    @property
    def class_f(self):
        return self.base.class_f and self.alpha > 0 and self.beta > 0

    def params(self):
        return {"alpha": self.alpha, "beta": self.beta, "base": self.base.describe()}


class VirtualInteraction(NamedTuple):
    g: float
    g_prime: float
    d12: float
    d13: float


class ReducedLaw(InteractionLaw):
    """f*₂₃ = f₂₃ + g₂₃, evaluated lazily with a lock-guarded solve cache."""

    family = "reduced"
    _CACHE_MAX = 8192

    def __init__(self, f23: InteractionLaw, f12: InteractionLaw, f13: InteractionLaw, case: ReductionCase):
        self.f23 = f23
        self.f12 = f12
        self.f13 = f13
        self.case = case
        self._init_cache()

    def _init_cache(self):
        self._lock = threading.Lock()
        self._cache: dict[float, VirtualInteraction] = {}
        self._last: tuple[float, VirtualInteraction] | None = None

    def __getstate__(self):
        return {"f23": self.f23, "f12": self.f12, "f13": self.f13, "case": self.case}

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._init_cache()

    def _guess(self, d: float) -> float | None:
        if self._last is None:
            return None
        d_prev, vi = self._last
        if self.case is ReductionCase.BETWEEN:
            return vi.d12 * d / d_prev
        if self.case is ReductionCase.LEFT_OUTSIDE:
            return vi.d12
        return vi.d13

    def virtual(self, d: float) -> VirtualInteraction:
        d = _check_distance(d)
        with self._lock:
            hit = self._cache.get(d)
            guess = self._guess(d)
        if hit is not None:
            return hit
        vi = virtual_interaction(self.f12, self.f13, self.case, d, guess=guess)
        with self._lock:
            if len(self._cache) >= self._CACHE_MAX:
                self._cache.clear()
            self._cache[d] = vi
            self._last = (d, vi)
        return vi

    def evaluate(self, d):
        vi = self.virtual(d)
        v, s = self.f23.evaluate(d)
        return v + vi.g, s + vi.g_prime

    def ftilde(self, d):
        return self.evaluate(d)[0]

    def ftilde_prime(self, d):
        return self.evaluate(d)[1]

    def describe(self):
        return {
            "family": self.family,
            "case": self.case.value,
            "f23": self.f23.describe(),
            "f12": self.f12.describe(),
            "f13": self.f13.describe(),
        }


# ----------------------- families / registry -----------------------
FAMILIES: dict[str, type] = {"standard": StandardLaw, "power": PowerLaw}


def law_from_params(family: str, **params) -> InteractionLaw:
    cls = FAMILIES.get(family)
    if cls is None:
        raise LawError(f"unknown law family {family!r}; expected one of {sorted(FAMILIES)}")
    try:
        return cls(**{k: float(v) for k, v in params.items()})
    except TypeError as e:
        raise LawError(f"bad parameters for family {family!r}: {e}") from None


@dataclass(frozen=True)
class Ensemble:
    """One law per edge, keyed by sorted vertex pairs."""

    laws: Mapping[Edge, InteractionLaw]

    def __post_init__(self):
        norm: dict[Edge, InteractionLaw] = {}
        for e, law in self.laws.items():
            key = edge_key(*e)
            if key in norm:
                raise LawError(f"edge {key} has more than one law")
            norm[key] = law
        object.__setattr__(self, "laws", norm)

    def law(self, i: int, j: int) -> InteractionLaw:
        return self.laws[edge_key(i, j)]

    @property
    def edges(self) -> frozenset:
        return frozenset(self.laws)

    @property
    def admissible(self) -> bool:
        return all(law.class_f for law in self.laws.values())

    def replace(self, edge: Edge, law: InteractionLaw) -> "Ensemble":
        out = dict(self.laws)
        out[edge_key(*edge)] = law
        return Ensemble(out)

    def restrict(self, edges: Iterable[Edge], remap: Mapping[int, int] | None = None) -> "Ensemble":
        out = {}
        for e in edges:
            i, j = edge_key(*e)
            law = self.laws[(i, j)]
            out[(remap[i], remap[j]) if remap else (i, j)] = law
        return Ensemble(out)

    def describe(self) -> dict[str, dict]:
        return {f"{i}-{j}": self.laws[(i, j)].describe() for i, j in sorted(self.laws)}


# ----------------------- root solving -----------------------
def _solve_increasing(h, x0: float, lo: float, hi: float, tol: float = ROOT_TOL, max_iter: int = 300):
    """Root of a strictly increasing h on (lo, hi); h(x) returns (value, slope).

    Every evaluation tightens the bracket by its sign. Newton steps are taken
    when they land inside the bracket, else bisection (finite bracket) or
    doubling (open upper bound). Ends with one Newton polish.
    """
    if not (lo < x0 < hi) or not np.isfinite(x0):
        x0 = 0.5 * (lo + hi) if np.isfinite(hi) else max(2.0 * lo, 1.0)
    x = x0
    for _ in range(max_iter):
        v, s = h(x)
        if not np.isfinite(v):
            raise NoRoot(f"non-finite target value at x={x}")
        if abs(v) <= tol:
            if s > 0:
                xn = x - v / s
                if lo < xn < hi and xn != x:
                    vn, sn = h(xn)
                    if abs(vn) < abs(v):
                        return xn, vn, sn
            return x, v, s
        if v < 0:
            lo = x
        else:
            hi = x
        if np.isfinite(hi) and hi - lo <= 4.0 * _EPS * hi:
            return x, v, s
        xn = x - v / s if s > 0 and np.isfinite(s) else np.nan
        if not (lo < xn < hi):
            xn = 0.5 * (lo + hi) if np.isfinite(hi) else 2.0 * x
        x = xn
    raise NoRoot(f"no convergence after {max_iter} iterations (bracket [{lo}, {hi}])")


def eval_law(law: InteractionLaw, d: float) -> tuple[float, float, float]:
    d = _check_distance(d)
    v, s = law.evaluate(d)
    return law.f(d), v, s


def rest_length(law: InteractionLaw) -> float:
    return law.rest


def _balance(f12: InteractionLaw, f13: InteractionLaw, case: ReductionCase, d23: float):
    """Return (h, lo, hi, unpack) for the case's balance equation in one unknown."""
    if case is ReductionCase.BETWEEN:

        def h(x):
            a, ap = f12.evaluate(x)
            b, bp = f13.evaluate(d23 - x)
            return a - b, ap + bp

        return h, 0.0, d23, lambda x: (x, d23 - x)
    if case is ReductionCase.LEFT_OUTSIDE:

        def h(x):
            a, ap = f12.evaluate(x)
            b, bp = f13.evaluate(x + d23)
            return a + b, ap + bp

        return h, 0.0, np.inf, lambda x: (x, x + d23)

    def h(y):
        b, bp = f13.evaluate(y)
        a, ap = f12.evaluate(y + d23)
        return a + b, ap + bp

    return h, 0.0, np.inf, lambda y: (y + d23, y)


def balance_residual(
    f12: InteractionLaw, f13: InteractionLaw, case: ReductionCase, d23: float, d12: float, d13: float
) -> float:
    """Violation of the case's balance equations at (d12, d13), in |f̃| units."""
    a, b = f12.ftilde(d12), f13.ftilde(d13)
    if case is ReductionCase.BETWEEN:
        return max(abs(a - b), abs(d12 + d13 - d23))
    if case is ReductionCase.LEFT_OUTSIDE:
        return max(abs(a + b), abs(d13 - d12 - d23))
    return max(abs(a + b), abs(d12 - d13 - d23))


def virtual_interaction(
    f12: InteractionLaw,
    f13: InteractionLaw,
    case: ReductionCase,
    d23: float,
    guess: float | None = None,
) -> VirtualInteraction:
    """Virtual law between the parents of a removed collinear agent at distance d23.

    Agent 1 is removed; 2 and 3 are its parents. `guess` is the starting value
    of the unknown distance (d12 for BETWEEN/LEFT_OUTSIDE, d13 for RIGHT_OUTSIDE).
    """
    d23 = _check_distance(d23)
    h, lo, hi, unpack = _balance(f12, f13, case, d23)
    if guess is None:
        guess = 0.5 * d23 if case is ReductionCase.BETWEEN else d23
    x, _, _ = _solve_increasing(h, guess, lo, hi)
    d12, d13 = unpack(x)
    a, ap = f12.evaluate(d12)
    b, bp = f13.evaluate(d13)
    if case is ReductionCase.BETWEEN:
        g = a
    elif case is ReductionCase.LEFT_OUTSIDE:
        g = -a
    else:
        g = a
    return VirtualInteraction(float(g), float(ap * bp / (ap + bp)), float(d12), float(d13))


def reduced_law(
    f23: InteractionLaw, f12: InteractionLaw, f13: InteractionLaw, case: ReductionCase
) -> ReducedLaw:
    return ReducedLaw(f23, f12, f13, case)


def lift_reduced_law(fstar: InteractionLaw) -> tuple[InteractionLaw, InteractionLaw, InteractionLaw]:
    """Pick (f12, f13, f23) whose BETWEEN reduction reproduces fstar.

    f23 = f*/2 and f12 = f13 = f*(2d); the symmetric balance puts the removed
    agent at the midpoint so g23(d) = f*(d)/2.
    """
    if not fstar.class_f:
        raise NotClassF(f"{fstar.describe()} is not class F")
    f23 = ScaledLaw(fstar, 0.5, 1.0)
    f12 = ScaledLaw(fstar, 1.0, 2.0)
    return f12, f12, f23


def sum_laws(a: InteractionLaw, b: InteractionLaw) -> SumLaw:
    return SumLaw((a, b))


def make_bump(d0: float, value: float, slope: float, width: float) -> PerturbationBump:
    return PerturbationBump(float(d0), float(width), float(value), float(slope))


# ----------------------- class-F probe -----------------------
@dataclass(frozen=True)
class ClassFReport:
    c1_monotone: bool
    monotone_witness: float | None
    sign_changes: int
    c2: bool
    c2_probe: tuple[tuple[float, float, float], ...]
    consistent: bool

    @property
    def c1(self) -> bool:
        return self.c1_monotone and self.sign_changes == 1

    @property
    def passed(self) -> bool:
        return self.c1 and self.c2 and self.consistent

    def failures(self) -> list[str]:
        out = []
        if not self.c1_monotone:
            out.append(f"C1: f̃′ ≤ 0 at d={self.monotone_witness:g}")
        if self.sign_changes != 1:
            out.append(f"C1: f̃ changes sign {self.sign_changes} times")
        if not self.c2:
            out.append("C2: collision integral does not diverge")
        if not self.consistent:
            out.append("f̃ ≠ d·f")
        return out

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "c1_monotone": self.c1_monotone,
            "monotone_witness": self.monotone_witness,
            "sign_changes": self.sign_changes,
            "c2": self.c2,
            "failures": self.failures(),
        }


def _segment(law: InteractionLaw, a: float, b: float) -> float:
    if law.closed_potential:
        return law.potential(b) - law.potential(a)
    val, _ = quad(law.ftilde, a, b, epsabs=1e-12, epsrel=1e-10, limit=200)
    return float(val)


def validate_class_f(law: InteractionLaw, grid: Iterable[float] | None = None) -> ClassFReport:
    """Probe C1 and C2 on a distance grid; failures are reported, not raised."""
    g = DEFAULT_GRID if grid is None else np.asarray(sorted(grid), dtype=float)
    vals = np.empty(g.size)
    slopes = np.empty(g.size)
    consistent = True
    for i, d in enumerate(g):
        vals[i], slopes[i] = law.evaluate(d)
        if abs(vals[i] - d * law.f(d)) > 1e-12 * max(1.0, abs(vals[i])):
            consistent = False

    bad = np.flatnonzero(~(slopes > 0))
    signs = np.sign(vals[vals != 0])
    changes = int(np.count_nonzero(np.diff(signs)))

    # C2: f̃ must decrease without bound and the potential must keep climbing
    # by a non-vanishing amount per decade as d → 0⁺.
    probe = []
    rises = []
    for hi, lo in zip(C2_PROBE[:-1], C2_PROBE[1:]):
        rise = -_segment(law, lo, hi)
        rises.append(rise)
        probe.append((float(lo), float(law.ftilde(lo)), float(rise)))
    ft = [law.ftilde(d) for d in C2_PROBE]
    c2 = (
        all(b < a for a, b in zip(ft[:-1], ft[1:]))
        and all(r > 0 for r in rises)
        and rises[-1] >= 0.5 * rises[0]
    )
    return ClassFReport(
        c1_monotone=bad.size == 0,
        monotone_witness=float(g[bad[0]]) if bad.size else None,
        sign_changes=changes,
        c2=bool(c2),
        c2_probe=tuple(probe),
        consistent=consistent,
    )

"""Constructions on the sequence space R^N.

rho(k) sums the squares of the first k coordinates. xi is the locally finite
sum of cutoff(k^2 rho(k)) over k >= 1: every nonzero point sees only finitely
many nonzero terms, yet xi grows without bound along z(k) -> 0, so it has no
continuous extension to the origin.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from loguru import logger

from carrier import (
    Constraint,
    FiniteDim,
    FiniteSet,
    FiniteVec,
    Point,
    Region,
    SeqPoint,
    SeqSpace,
    contains,
    point_text,
    seq_add,
    seq_sub,
)
from configuration_values import ConfigurationValues
from errors import AtlasCoverageError, CarrierMismatch, DivergentAtZero, ProbeError, TruncationBudgetExceeded, UnknownName
from smooth_fn import Add, Const, Cutoff, Mul, Pow, Slot, SmoothMap, cutoff_array, cutoff_value
from structure import (
    DifferentialSpace,
    Global,
    PointIndicator,
    from_atlas,
    new_space,
    pair,
    register,
    restrict,
    union_space,
    value_of,
)

TRACE_LIMIT = 32
# middle runs longer than this are evaluated with numpy
VECTOR_RUN = 4096
LIMIT_WINDOW = 5
# a settled probe moves over its last window by at most this share of its whole range
SETTLE_RATIO = 1e-3


@dataclass(frozen=True)
class TruncationReport:
    k0: int
    terms_evaluated: int
    value: float
    trace: tuple[tuple[int, float, float], ...] = ()


def rho(k: int, p: SeqPoint) -> float:
    if k < 1:
        raise ValueError(f"rho needs k >= 1, got {k}")
    total = 0.0
    if p.tail is None:
        for i, v in p.support:
            if i > k:
                break
            total += v ** 2
        return total
    for i in range(1, k + 1):
        total += p.coord(i) ** 2
    return total


def rho_map(k: int) -> SmoothMap:
    return SmoothMap(k, Add(tuple(Pow(Slot(i), 2) for i in range(k))))


def rho_name(k: int) -> str:
    return f"rho({k})"


def z(k: int) -> SeqPoint:
    if k < 1:
        raise ValueError(f"z needs k >= 1, got {k}")
    return SeqPoint(((k, 1.0 / (k * math.sqrt(2.0))),))


def _largest_index(r: float, limit: float) -> int:
    # largest j >= 0 with float(j*j) * r <= limit
    j = int(math.sqrt(limit / r))
    while float((j + 1) * (j + 1)) * r <= limit:
        j += 1
    while j > 0 and float(j * j) * r > limit:
        j -= 1
    return j


def _xi_single(index: int, value: float, cap: int) -> TruncationReport:
    r = value ** 2
    if math.sqrt(1.0 / r) > cap:
        raise TruncationBudgetExceeded(f"xi needs more than {cap} terms at this point")
    ones_end = max(_largest_index(r, 0.5), index - 1)
    mid_end = max(_largest_index(r, 1.0), index - 1)
    k0 = mid_end + 1
    if k0 > cap:
        raise TruncationBudgetExceeded(f"xi needs {k0} terms, cap is {cap}")
    # rho(j) is 0 below the support index and r from it on
    total = float(ones_end)
    middle = range(ones_end + 1, mid_end + 1)
    if len(middle) > VECTOR_RUN:
        js = np.arange(middle.start, middle.stop, dtype=np.int64)
        terms = cutoff_array((js * js).astype(float) * r)
        total = float(np.cumsum(np.concatenate(([total], terms)))[-1])
    else:
        for j in middle:
            total += cutoff_value(float(j * j) * r)
    trace = []
    for j in range(1, min(k0, TRACE_LIMIT) + 1):
        t = 0.0 if j < index else float(j * j) * r
        trace.append((j, t, cutoff_value(t)))
    return TruncationReport(k0, k0, total, tuple(trace))


def xi(p: SeqPoint, cap: int | None = None) -> TruncationReport:
    """Finite evaluation of xi at a nonzero, finitely supported point.

    The sum stops at k0, the first k with k^2 rho(k) > 1. Every later term is
    exactly 0 because rho is nondecreasing in k.
    """
    cap = ConfigurationValues.get_xi_term_cap() if cap is None else cap
    if not isinstance(p, SeqPoint):
        raise CarrierMismatch(f"xi is defined on R^N, got a {type(p).__name__}")
    if p.tail is not None:
        raise CarrierMismatch("xi is evaluated at finitely supported points only")
    if p.is_zero:
        raise DivergentAtZero("xi diverges at the zero sequence")
    if len(p.support) == 1:
        (index, value), = p.support
        return _xi_single(index, value, cap)
    total = 0.0
    acc = 0.0
    coords = dict(p.support)
    trace = []
    k = 0
    while True:
        k += 1
        if k > cap:
            raise TruncationBudgetExceeded(f"xi did not truncate within {cap} terms")
        acc += coords.get(k, 0.0) ** 2
        t = float(k * k) * acc
        if t > 1.0:
            break
        term = cutoff_value(t)
        if len(trace) < TRACE_LIMIT:
            trace.append((k, t, term))
        total += term
    if len(trace) < TRACE_LIMIT:
        trace.append((k, t, 0.0))
    return TruncationReport(k, k, total, tuple(trace))


def xi_value(p: SeqPoint, center: SeqPoint | None = None) -> float:
    # xi at p - center: the witness for a punctured R^N - {center}
    q = p if center is None or center.is_zero else seq_sub(p, center)
    return xi(q).value


def xi_atlas(space: DifferentialSpace, K: int, name: str | None = "xi", check_count: int | None = None):
    """Local element with pieces (rho(k) > 1/k^2, sum of cutoff(j^2 rho(j)) for j < k), 2 <= k <= K."""
    if K < 2:
        raise ValueError(f"xi atlas needs K >= 2, got {K}")
    ensure_rho(space, K)
    pieces = []
    for k in range(2, K + 1):
        terms = tuple(Cutoff(Mul((Const(float(j * j)), Slot(j - 1)))) for j in range(1, k))
        outer = SmoothMap(k - 1, Add(terms))
        region = Region(((rho_name(k), 1.0 / (k * k), math.inf),))
        pieces.append((region, outer, [rho_name(j) for j in range(1, k)]))
    try:
        return from_atlas(space, pieces, name=name, check_count=check_count)
    except AtlasCoverageError:
        logger.warning(f"xi atlas with K={K} misses a sampled point; a larger K may be needed")
        raise


def ensure_rho(space: DifferentialSpace, K: int) -> None:
    for k in range(1, K + 1):
        if rho_name(k) not in space.registry:
            register(space, rho_name(k), Global(rho_map(k), tuple(f"pi({i})" for i in range(1, k + 1))), check_count=0)


def xi_space(K: int = 50, excluded: Sequence[SeqPoint] | None = None, name: str = "M", seed: int | None = None,
             check_count: int | None = None, constraints: Sequence[Constraint] = ()) -> DifferentialSpace:
    """R^N minus the given points (the origin by default) with xi registered as obstruction witness."""
    excluded = tuple(excluded) if excluded is not None else (SeqPoint(),)
    space = new_space(name, SeqSpace(excluded, tuple(constraints)), all_projections=True, seed=seed)
    if SeqPoint() in excluded:
        xi_atlas(space, K, check_count=check_count)
    space.witnesses.extend(xi_witness_name(e) for e in excluded)
    logger.info(f"Built {name} = R^N minus {len(excluded)} point(s) with K={K}")
    return space


def in_A(k: int, p: SeqPoint) -> bool:
    # A_k = {k^2 rho(k) <= 1}
    return float(k * k) * rho(k, p) <= 1.0


# --------------------------------------------------------------------- probes

@dataclass(frozen=True)
class ProbePath:
    ks: tuple[int, ...]
    points: tuple[Point, ...]


def probe_schedule(length: int | None = None, max_index: int | None = None) -> tuple[int, ...]:
    length = ConfigurationValues.get_probe_length() if length is None else length
    max_index = ConfigurationValues.get_probe_max_index() if max_index is None else max_index
    ks = np.unique(np.rint(np.geomspace(1, max_index, length)).astype(np.int64))
    return tuple(int(k) for k in ks)


def probe_path(center: Point, length: int | None = None, max_index: int | None = None,
               direction: Point | None = None) -> ProbePath:
    """center + z(k) for sequence points, or center + direction/k when a direction is given."""
    ks = probe_schedule(length, max_index)
    if isinstance(center, SeqPoint):
        if isinstance(direction, SeqPoint):
            steps = (SeqPoint(tuple((i, v / k) for i, v in direction.support)) for k in ks)
            return ProbePath(ks, tuple(seq_add(center, step) for step in steps))
        return ProbePath(ks, tuple(seq_add(center, z(k)) for k in ks))
    if isinstance(center, FiniteVec):
        d = direction.coords if isinstance(direction, FiniteVec) else (1.0,) + (0.0,) * (center.dim - 1)
        points = tuple(FiniteVec(tuple(c + dc / k for c, dc in zip(center.coords, d))) for k in ks)
        return ProbePath(ks, points)
    raise CarrierMismatch(f"no probe paths toward {type(center).__name__} points")


def diverges_along(values: Sequence[float], threshold: float | None = None, min_points: int | None = None) -> bool:
    """Strictly increasing over at least min_points values and reaching threshold."""
    threshold = ConfigurationValues.get_divergence_threshold() if threshold is None else threshold
    min_points = ConfigurationValues.get_probe_length() if min_points is None else min_points
    if len(values) < min_points:
        return False
    tail = values[-min_points:]
    if any(not b > a for a, b in zip(tail, tail[1:])):
        return False
    return tail[-1] >= threshold


def _window_spread(values: Sequence[float]) -> float:
    window = values[-LIMIT_WINDOW:]
    return max(window) - min(window)


def settles(values: Sequence[float], tol: float = 1e-6) -> bool:
    """True when the last LIMIT_WINDOW values stay within tol, or within a small share of the path's range."""
    if not values:
        return False
    return _window_spread(values) <= max(tol, SETTLE_RATIO * (max(values) - min(values)))


def witness_value(space: DifferentialSpace, name: str, q: Point) -> float:
    # xi is evaluated by its finite sum, which also covers points beyond the registered atlas
    if name == "xi" and isinstance(q, SeqPoint):
        return xi_value(q)
    if name.startswith("xi@") and isinstance(q, SeqPoint):
        center = next((e for e in space.carrier.excluded if point_text(e) == name[3:]), None)
        if center is None:
            raise UnknownName(f"no excluded point behind witness {name}")
        return xi_value(q, center)
    return value_of(space, name, q)


def xi_witness_name(center: SeqPoint) -> str:
    return "xi" if center.is_zero else f"xi@{point_text(center)}"


# --------------------------------------------------------------- prolongation

@dataclass(frozen=True)
class Prolongable:
    values: dict[str, float] = field(hash=False)


@dataclass(frozen=True)
class NotProlongable:
    witness: str
    probe_index: int
    values: tuple[float, ...]
    reason: str


def _distance(p: Point, q: Point) -> float:
    if isinstance(p, FiniteVec) and isinstance(q, FiniteVec):
        return max(abs(a - b) for a, b in zip(p.coords, q.coords))
    if isinstance(p, SeqPoint) and isinstance(q, SeqPoint):
        n = max(p.last_index, q.last_index, p.tail.start if p.tail else 0, q.tail.start if q.tail else 0, 1)
        return max(abs(a - b) for a, b in zip(p.prefix(n), q.prefix(n)))
    raise CarrierMismatch("probe points and candidate are of different kinds")


def tilde_membership(space: DifferentialSpace, candidate: Point, witnesses: Sequence[str],
                     probes: Sequence[Sequence[Point]], threshold: float | None = None,
                     min_points: int | None = None, tol: float = 1e-6) -> Prolongable | NotProlongable:
    """Decide whether the witnesses extend continuously to the candidate.

    Inside the carrier the extension is the function itself. Outside it each
    witness is followed along each probe: divergence or two different limits
    mean no continuous extension exists.
    """
    if not witnesses:
        raise ProbeError("at least one witness is needed")
    if contains(space.carrier, candidate):
        return Prolongable({w: witness_value(space, w, candidate) for w in witnesses})
    if not probes:
        raise ProbeError(f"no probe paths toward {point_text(candidate)}")
    for probe in probes:
        if not probe:
            raise ProbeError("empty probe")
        first, last = _distance(probe[0], candidate), _distance(probe[-1], candidate)
        if not last < first:
            raise ProbeError(f"probe does not approach {point_text(candidate)}")
    limits: dict[str, float] = {}
    for w in witnesses:
        found: list[tuple[float, float]] = []
        for index, probe in enumerate(probes):
            values = tuple(witness_value(space, w, q) for q in probe)
            logger.debug(f"Witness {w} along probe {index}: {values[-3:]}")
            if diverges_along(values, threshold, min_points) or not all(math.isfinite(v) for v in values):
                return NotProlongable(w, index, values, "DivergentAlongProbe")
            if not settles(values, tol):
                return NotProlongable(w, index, values, "ProbeLimitsDisagree")
            window = values[-LIMIT_WINDOW:]
            found.append((sum(window) / len(window), _window_spread(values)))
            # each limit is known up to how far its probe still moves
            if max(v - s for v, s in found) - min(v + s for v, s in found) > tol:
                return NotProlongable(w, index, values, "ProbeLimitsDisagree")
        limits[w] = found[0][0]
    return Prolongable(limits)


# ------------------------------------------------------------------ tilde V

def tilde_structure(p: SeqPoint, name: str = "Vp", seed: int | None = None) -> DifferentialSpace:
    """R^N generated by all projections plus theta, the indicator of p."""
    space = new_space(name, SeqSpace(), {"theta": PointIndicator(p)}, all_projections=True, seed=seed)
    space.witnesses.append("theta")
    return space


def tilde_decompose(space: DifferentialSpace, element: str):
    """Pair form of an element over (R^N - {p}) + {p}; returns (union space, pair element)."""
    indicator = space.generators.get("theta")
    if not isinstance(indicator, PointIndicator):
        raise UnknownName(f"{space.name} has no theta generator")
    p = indicator.point
    outside = restrict(space, SeqSpace(excluded=(p,)), f"{space.name}-p")
    single = restrict(space, FiniteSet((p,)), f"{space.name}@p")
    union = union_space(outside, single, name=f"{space.name}.split")
    pair(union, element, element, element)
    return union, union.registry[element]


def tilde_M(space: DifferentialSpace, assignments) -> list[Point]:
    """Candidate points realised by spectrum elements among the given assignments."""
    from spectrum import EvaluationOutcome, classify

    points: list[Point] = []
    for a in assignments:
        outcome = classify(space, a)
        if isinstance(outcome, EvaluationOutcome):
            points.extend(outcome.points)
    return points


def finite_dim_probe_direction(space: DifferentialSpace, candidate: FiniteVec, which: int = 0) -> FiniteVec:
    # toward a carrier sample, so the path starts inside the carrier
    if not isinstance(space.carrier, FiniteDim):
        raise CarrierMismatch("probe directions are chosen for finite-dimensional carriers")
    target = space.carrier_samples(which + 1)[which]
    return FiniteVec(tuple(t - c for t, c in zip(target.coords, candidate.coords)))

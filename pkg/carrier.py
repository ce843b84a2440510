"""Underlying sets of differential spaces: points, carriers, regions, sampling."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union as TypingUnion

import numpy as np
from loguru import logger

from configuration_values import ConfigurationValues
from errors import CarrierMismatch, GuardViolation, SamplingBudgetExceeded
from smooth_fn import SmoothMap, eval_map

RELATIONS = ("=0", ">0", "!=0")
SIDES = ("left", "right")


# --------------------------------------------------------------------- points

@dataclass(frozen=True)
class FiniteVec:
    coords: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(float(c) for c in self.coords))

    @property
    def dim(self) -> int:
        return len(self.coords)


@dataclass(frozen=True)
class TailRule:
    # Coordinates at index >= start come from rule(index) instead of the support.
    start: int
    rule: Callable[[int], float] = field(compare=False, hash=False)
    label: str = "rule"


@dataclass(frozen=True)
class SeqPoint:
    """A point of R^N given by its finitely many nonzero coordinates.

    Indices are 1-based. The support is kept canonical: strictly increasing
    indices, nonzero values. Construction from any iterable of pairs
    canonicalises it, so two points are equal iff they are the same sequence.
    """
    support: tuple[tuple[int, float], ...] = ()
    tail: TailRule | None = None

    def __post_init__(self):
        merged: dict[int, float] = {}
        for index, value in self.support:
            index = int(index)
            if index < 1:
                raise CarrierMismatch(f"sequence indices start at 1, got {index}")
            if index in merged:
                raise CarrierMismatch(f"index {index} listed twice")
            merged[index] = float(value)
        canonical = tuple((i, merged[i]) for i in sorted(merged) if merged[i] != 0.0)
        object.__setattr__(self, "support", canonical)

    def coord(self, index: int) -> float:
        if self.tail is not None and index >= self.tail.start:
            return float(self.tail.rule(index))
        for i, v in self.support:
            if i == index:
                return v
        return 0.0

    def prefix(self, n: int) -> list[float]:
        return [self.coord(i) for i in range(1, n + 1)]

    @property
    def is_zero(self) -> bool:
        return not self.support and self.tail is None

    @property
    def last_index(self) -> int:
        return self.support[-1][0] if self.support else 0


@dataclass(frozen=True)
class Tagged:
    side: str
    inner: "Point"

    def __post_init__(self):
        if self.side not in SIDES:
            raise CarrierMismatch(f"union side must be one of {SIDES}, got {self.side!r}")


Point = TypingUnion[FiniteVec, SeqPoint, Tagged]


def seq_point(values: dict[int, float] | Sequence[tuple[int, float]]) -> SeqPoint:
    pairs = values.items() if isinstance(values, dict) else values
    return SeqPoint(tuple(pairs))


def seq_add(p: SeqPoint, q: SeqPoint) -> SeqPoint:
    if p.tail is not None and q.tail is not None:
        raise CarrierMismatch("cannot add two rule-tailed sequence points")
    merged = dict(p.support)
    for i, v in q.support:
        merged[i] = merged.get(i, 0.0) + v
    tail = p.tail or q.tail
    if tail is not None:
        base = q if tail is p.tail else p
        # the tail rule reads the other summand's coordinate as well
        rule, start = tail.rule, tail.start
        tail = TailRule(start, lambda k, rule=rule, base=base: rule(k) + base.coord(k), tail.label)
    return SeqPoint(tuple(merged.items()), tail)


def seq_sub(p: SeqPoint, q: SeqPoint) -> SeqPoint:
    if q.tail is not None:
        raise CarrierMismatch("cannot subtract a rule-tailed sequence point")
    return seq_add(p, SeqPoint(tuple((i, -v) for i, v in q.support)))


# ------------------------------------------------------------------- carriers

@dataclass(frozen=True)
class Constraint:
    fn: SmoothMap
    relation: str
    indices: tuple[int, ...]
    label: str = ""

    def __post_init__(self):
        if self.relation not in RELATIONS:
            raise CarrierMismatch(f"unknown relation {self.relation!r}")
        if len(self.indices) != self.fn.arity:
            raise CarrierMismatch(f"constraint reads {len(self.indices)} coordinates, map has arity {self.fn.arity}")

    def value(self, p: Point) -> float:
        return eval_map(self.fn, [coordinate(p, i) for i in self.indices])

    def holds(self, p: Point, tol: float | None = None) -> bool:
        tol = ConfigurationValues.get_equality_tolerance() if tol is None else tol
        try:
            v = self.value(p)
        except GuardViolation:
            return False
        if self.relation == "=0":
            return abs(v) <= tol
        if self.relation == ">0":
            return v > 0.0
        return v != 0.0


@dataclass(frozen=True)
class Chart:
    # Parametric sampler: params is a box, coords maps parameters to coordinates.
    params: tuple[tuple[float, float], ...]
    coords: tuple[SmoothMap, ...]

    def point(self, t: Sequence[float]) -> FiniteVec:
        return FiniteVec(tuple(eval_map(m, t) for m in self.coords))


@dataclass(frozen=True)
class FiniteDim:
    n: int
    constraints: tuple[Constraint, ...] = ()
    excluded: tuple[FiniteVec, ...] = ()
    chart: Chart | None = None


@dataclass(frozen=True)
class SeqSpace:
    excluded: tuple[SeqPoint, ...] = ()
    constraints: tuple[Constraint, ...] = ()


@dataclass(frozen=True)
class FiniteSet:
    points: tuple[Point, ...]


@dataclass(frozen=True)
class Union:
    left: "Carrier"
    right: "Carrier"


Carrier = TypingUnion[FiniteDim, SeqSpace, FiniteSet, Union]


@dataclass(frozen=True)
class Region:
    """Conjunction of open-interval preimages: name -> (lo, hi), bounds may be infinite."""
    bounds: tuple[tuple[str, float, float], ...]

    def __post_init__(self):
        for name, lo, hi in self.bounds:
            if not lo < hi:
                raise CarrierMismatch(f"empty interval ({lo}, {hi}) for {name}")


def coordinate(p: Point, index: int) -> float:
    # 1-based coordinate access shared by constraints and projections
    if isinstance(p, FiniteVec):
        if not 1 <= index <= p.dim:
            raise CarrierMismatch(f"no coordinate {index} in dimension {p.dim}")
        return p.coords[index - 1]
    if isinstance(p, SeqPoint):
        if index < 1:
            raise CarrierMismatch(f"sequence indices start at 1, got {index}")
        return p.coord(index)
    raise CarrierMismatch(f"{type(p).__name__} points have no coordinates")


def dimension(c: Carrier) -> int | None:
    # None for the sequence space and for unions
    if isinstance(c, FiniteDim):
        return c.n
    if isinstance(c, FiniteSet) and c.points and isinstance(c.points[0], FiniteVec):
        return c.points[0].dim
    return None


def contains(c: Carrier, p: Point, tol: float | None = None) -> bool:
    if isinstance(c, Union):
        if not isinstance(p, Tagged):
            raise CarrierMismatch("points of a disjoint union must be tagged left or right")
        return contains(c.left if p.side == "left" else c.right, p.inner, tol)
    if isinstance(c, FiniteDim):
        if not isinstance(p, FiniteVec):
            raise CarrierMismatch(f"R^{c.n} holds vectors, got {type(p).__name__}")
        if p.dim != c.n:
            raise CarrierMismatch(f"point of dimension {p.dim} used with R^{c.n}")
        if not all(math.isfinite(v) for v in p.coords):
            return False
        return p not in c.excluded and all(k.holds(p, tol) for k in c.constraints)
    if isinstance(c, SeqSpace):
        if not isinstance(p, SeqPoint):
            raise CarrierMismatch(f"R^N holds sequence points, got {type(p).__name__}")
        return p not in c.excluded and all(k.holds(p, tol) for k in c.constraints)
    if isinstance(c, FiniteSet):
        return member_near(c, p, tol) is not None
    raise CarrierMismatch(f"unknown carrier {type(c).__name__}")


def _near(p: Point, q: Point, tol: float) -> bool:
    if isinstance(p, FiniteVec) and isinstance(q, FiniteVec):
        return p.dim == q.dim and all(abs(a - b) <= tol for a, b in zip(p.coords, q.coords))
    if isinstance(p, SeqPoint) and isinstance(q, SeqPoint):
        if p.tail is not None or q.tail is not None:
            return p == q
        indices = {i for i, _ in p.support} | {i for i, _ in q.support}
        return all(abs(p.coord(i) - q.coord(i)) <= tol for i in indices)
    if isinstance(p, Tagged) and isinstance(q, Tagged):
        return p.side == q.side and _near(p.inner, q.inner, tol)
    return False


def member_near(c: "FiniteSet", p: Point, tol: float | None = None) -> Point | None:
    """The listed point equal to p, or within tol of it coordinatewise when tol is given."""
    if c.points and type(p) is not type(c.points[0]):
        raise CarrierMismatch(f"finite set of {type(c.points[0]).__name__} queried with {type(p).__name__}")
    if p in c.points:
        return p
    if tol is None:
        return None
    return next((q for q in c.points if _near(p, q, tol)), None)


# ------------------------------------------------------------------- sampling

@dataclass(frozen=True)
class SamplerSettings:
    radius: float
    cap: int
    support_bound: int
    index_bound: int

    @classmethod
    def from_config(cls) -> "SamplerSettings":
        return cls(
            radius=ConfigurationValues.get_sampling_radius(),
            cap=ConfigurationValues.get_rejection_cap(),
            support_bound=ConfigurationValues.get_seq_support_bound(),
            index_bound=ConfigurationValues.get_seq_index_bound(),
        )


def _draw(c: Carrier, rng: np.random.Generator, settings: SamplerSettings) -> Point:
    if isinstance(c, Union):
        side = SIDES[int(rng.integers(2))]
        return Tagged(side, _sample_member(c.left if side == "left" else c.right, rng, settings))
    if isinstance(c, FiniteDim):
        if c.chart is not None:
            t = [rng.uniform(lo, hi) for lo, hi in c.chart.params]
            return c.chart.point(t)
        return FiniteVec(tuple(rng.uniform(-settings.radius, settings.radius, c.n)))
    if isinstance(c, SeqSpace):
        size = int(rng.integers(1, settings.support_bound + 1))
        size = min(size, settings.index_bound)
        indices = rng.choice(settings.index_bound, size=size, replace=False) + 1
        values = rng.uniform(0.1, 2.0, size) * rng.choice([-1.0, 1.0], size)
        return SeqPoint(tuple(zip((int(i) for i in indices), (float(v) for v in values))))
    if isinstance(c, FiniteSet):
        if not c.points:
            raise SamplingBudgetExceeded("cannot sample an empty finite set")
        return c.points[int(rng.integers(len(c.points)))]
    raise CarrierMismatch(f"unknown carrier {type(c).__name__}")


def _sample_member(c: Carrier, rng: np.random.Generator, settings: SamplerSettings) -> Point:
    for _ in range(settings.cap):
        p = _draw(c, rng, settings)
        if isinstance(p, Tagged) or contains(c, p):
            return p
    raise SamplingBudgetExceeded(f"no member found after {settings.cap} draws; constraints too tight for the sampler")


def sample(c: Carrier, seed: int, count: int, settings: SamplerSettings | None = None) -> list[Point]:
    """Deterministic members of c; point i depends only on (seed, i)."""
    if count < 0:
        raise ValueError(f"count must be non-negative, got {count}")
    settings = settings or SamplerSettings.from_config()
    points = [_sample_member(c, np.random.default_rng([seed, i]), settings) for i in range(count)]
    logger.debug(f"Sampled {count} points from {carrier_text(c)} with seed {seed}")
    return points


# -------------------------------------------------------------- serialisation

def point_to_json(p: Point) -> dict:
    if isinstance(p, FiniteVec):
        return {"type": "vec", "coords": list(p.coords)}
    if isinstance(p, SeqPoint):
        data = {"type": "seq", "support": [[i, v] for i, v in p.support]}
        if p.tail is not None:
            data["tail"] = {"start": p.tail.start, "label": p.tail.label}
        return data
    return {"type": "tagged", "side": p.side, "inner": point_to_json(p.inner)}


def point_from_json(data: dict) -> Point:
    kind = data.get("type")
    if kind == "vec":
        return FiniteVec(tuple(data["coords"]))
    if kind == "seq":
        if "tail" in data:
            raise CarrierMismatch("rule-tailed sequence points cannot be rebuilt from JSON")
        return SeqPoint(tuple((int(i), float(v)) for i, v in data["support"]))
    if kind == "tagged":
        return Tagged(data["side"], point_from_json(data["inner"]))
    raise CarrierMismatch(f"unknown point type {kind!r}")


def point_text(p: Point) -> str:
    # DSL literal syntax
    if isinstance(p, FiniteVec):
        return "(" + ", ".join(repr(v) for v in p.coords) + ")"
    if isinstance(p, SeqPoint):
        body = ", ".join(f"{i}: {v!r}" for i, v in p.support)
        tail = f" ~ {p.tail.label}" if p.tail is not None else ""
        return "seq{" + body + "}" + tail
    return f"{p.side} {point_text(p.inner)}"


def carrier_text(c: Carrier) -> str:
    if isinstance(c, FiniteDim):
        text = f"R^{c.n}"
        if c.constraints:
            text += " where " + ", ".join(k.label or k.relation for k in c.constraints)
        if c.excluded:
            text += " minus {" + ", ".join(point_text(p) for p in c.excluded) + "}"
        return text
    if isinstance(c, SeqSpace):
        text = "R^N"
        if c.constraints:
            text += " where " + ", ".join(k.label or k.relation for k in c.constraints)
        if c.excluded:
            text += " minus {" + ", ".join(point_text(p) for p in c.excluded) + "}"
        return text
    if isinstance(c, FiniteSet):
        return "{" + ", ".join(point_text(p) for p in c.points) + "}"
    return f"({carrier_text(c.left)}) + ({carrier_text(c.right)})"


def carrier_to_json(c: Carrier) -> dict:
    if isinstance(c, FiniteDim):
        return {
            "type": "finite_dim",
            "n": c.n,
            "constraints": [{"label": k.label, "relation": k.relation, "indices": list(k.indices)} for k in c.constraints],
            "excluded": [point_to_json(p) for p in c.excluded],
            "chart": c.chart is not None,
        }
    if isinstance(c, SeqSpace):
        return {
            "type": "seq_space",
            "constraints": [{"label": k.label, "relation": k.relation, "indices": list(k.indices)} for k in c.constraints],
            "excluded": [point_to_json(p) for p in c.excluded],
        }
    if isinstance(c, FiniteSet):
        return {"type": "finite_set", "points": [point_to_json(p) for p in c.points]}
    return {"type": "union", "left": carrier_to_json(c.left), "right": carrier_to_json(c.right)}

"""Differential structures: generators, superposition, localization atlases,
subspaces and disjoint unions.

A DifferentialSpace is built up by registering named elements and is then only
read. Elements refer to generators and other elements by name, so every
element of a restricted space keeps evaluating through the parent names.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Sequence, Union as TypingUnion

from loguru import logger

from carrier import (
    Carrier,
    FiniteSet,
    Point,
    Region,
    Tagged,
    Union,
    carrier_text,
    carrier_to_json,
    contains,
    coordinate,
    point_text,
    point_to_json,
    sample,
)
from configuration_values import ConfigurationValues
from errors import (
    ArityMismatch,
    AtlasCoverageError,
    AtlasDisagreement,
    CarrierMismatch,
    NotInCarrier,
    RestrictionError,
    UnknownName,
)
from smooth_fn import SmoothMap, eval_map, map_text, map_to_dict

_PROJECTION_NAME = re.compile(r"^pi\((\d+)\)$")


# ----------------------------------------------------------------- generators

@dataclass(frozen=True)
class Projection:
    index: int


@dataclass(frozen=True)
class Composite:
    # a smooth map of finitely many coordinates, e.g. rho(k)
    fn: SmoothMap
    indices: tuple[int, ...]


@dataclass(frozen=True)
class PointIndicator:
    point: Point


@dataclass(frozen=True)
class Idempotent:
    side: str


@dataclass(frozen=True)
class SideLift:
    # generator `name` of one side of a union, extended by 0 on the other side
    side: str
    name: str
    source: "DifferentialSpace" = field(compare=False, hash=False, repr=False)


Generator = TypingUnion[Projection, Composite, PointIndicator, Idempotent, SideLift]


@dataclass
class GeneratorSet:
    named: dict[str, Generator] = field(default_factory=dict)
    # every pi(i), i >= 1, resolves even when not listed
    all_projections: bool = False

    def get(self, name: str) -> Generator | None:
        if name in self.named:
            return self.named[name]
        if self.all_projections:
            m = _PROJECTION_NAME.match(name)
            if m and int(m.group(1)) >= 1:
                return Projection(int(m.group(1)))
        return None

    def names(self) -> list[str]:
        return list(self.named)


# ------------------------------------------------------------------- elements

@dataclass(frozen=True)
class Global:
    outer: SmoothMap
    inputs: tuple[TypingUnion[str, "Element"], ...]

    def __post_init__(self):
        if len(self.inputs) != self.outer.arity:
            raise ArityMismatch(f"outer map of arity {self.outer.arity} given {len(self.inputs)} inputs")


@dataclass(frozen=True)
class Local:
    atlas: tuple[tuple[Region, Global], ...]


@dataclass(frozen=True)
class Pair:
    left: TypingUnion[str, "Element"]
    right: TypingUnion[str, "Element"]


@dataclass(frozen=True)
class Constant:
    value: float


Element = TypingUnion[Global, Local, Pair, Constant]


@dataclass(eq=False)
class DifferentialSpace:
    name: str
    carrier: Carrier
    generators: GeneratorSet
    registry: dict[str, Element] = field(default_factory=dict)
    aliases: dict[str, str] = field(default_factory=dict)
    witnesses: list[str] = field(default_factory=list)
    samples: list[Point] = field(default_factory=list)
    seed: int = 0
    sides: tuple["DifferentialSpace", "DifferentialSpace"] | None = None
    parent: "DifferentialSpace | None" = None
    _sample_cache: dict[int, list[Point]] = field(default_factory=dict, repr=False)

    def carrier_samples(self, count: int | None = None) -> list[Point]:
        count = ConfigurationValues.get_sample_count() if count is None else count
        if count not in self._sample_cache:
            self._sample_cache[count] = sample(self.carrier, self.seed, count)
        return self._sample_cache[count]


def new_space(name: str, carrier: Carrier, generators: dict[str, Generator] | None = None,
              all_projections: bool = False, seed: int | None = None) -> DifferentialSpace:
    seed = ConfigurationValues.get_seed() if seed is None else seed
    return DifferentialSpace(name, carrier, GeneratorSet(dict(generators or {}), all_projections), seed=seed)


# --------------------------------------------------------------- name lookup

def lookup(space: DifferentialSpace, name: str) -> TypingUnion[Generator, Element]:
    name = space.aliases.get(name, name)
    if name in space.registry:
        return space.registry[name]
    gen = space.generators.get(name)
    if gen is not None:
        return gen
    if space.sides is not None and "." in name:
        side, rest = name.split(".", 1)
        if side in ("left", "right"):
            source = space.sides[0] if side == "left" else space.sides[1]
            target = lookup(source, rest)
            if is_generator(target):
                return SideLift(side, rest, source)
    raise UnknownName(f"no generator or element named {name!r} in space {space.name}")


def is_generator(obj) -> bool:
    return isinstance(obj, (Projection, Composite, PointIndicator, Idempotent, SideLift))


def element_names(space: DifferentialSpace) -> list[str]:
    return list(space.registry)


def register(space: DifferentialSpace, name: str, element: Element, check_count: int = 16) -> Element:
    """Add a named element after evaluating it on a few carrier samples."""
    if space.generators.get(name) is not None:
        raise UnknownName(f"{name!r} already names a generator of {space.name}")
    _check_refs(space, element)
    if check_count:
        for p in space.carrier_samples(check_count):
            _element_value(space, element, p)
    space.registry[name] = element
    logger.debug(f"Registered {name} in {space.name}")
    return element


def _check_refs(space: DifferentialSpace, element) -> None:
    if isinstance(element, str):
        lookup(space, element)
    elif isinstance(element, Global):
        for ref in element.inputs:
            _check_refs(space, ref)
    elif isinstance(element, Local):
        for region, piece in element.atlas:
            for ref, _, _ in region.bounds:
                lookup(space, ref)
            _check_refs(space, piece)
    elif isinstance(element, Pair):
        if space.sides is None:
            raise CarrierMismatch(f"pair elements need a disjoint union, {space.name} is not one")
        _check_refs(space.sides[0], element.left)
        _check_refs(space.sides[1], element.right)


def add_generator(space: DifferentialSpace, name: str, gen: Generator) -> None:
    if name in space.registry or space.generators.get(name) is not None:
        raise UnknownName(f"{name!r} is already defined in {space.name}")
    if isinstance(gen, (Projection, Composite)):
        # fail early on a coordinate the carrier does not have
        for p in space.carrier_samples(1):
            generator_value(gen, p)
    space.generators.named[name] = gen
    logger.debug(f"Generator {name} added to {space.name}")


def add_samples(space: DifferentialSpace, points: Sequence[Point]) -> None:
    for p in points:
        if not contains(space.carrier, p):
            raise NotInCarrier(f"sample {point_text(p)} is not in {space.name}")
    space.samples.extend(points)


# ----------------------------------------------------------------- evaluation

def generator_value(gen: Generator, p: Point) -> float:
    match gen:
        case Projection(i):
            return coordinate(p, i)
        case Composite(fn, indices):
            return eval_map(fn, [coordinate(p, i) for i in indices])
        case PointIndicator(q):
            return 1.0 if p == q else 0.0
        case Idempotent(side):
            if not isinstance(p, Tagged):
                raise CarrierMismatch("idempotent generators live on disjoint unions")
            return 1.0 if p.side == side else 0.0
        case SideLift(side, name, source):
            if not isinstance(p, Tagged):
                raise CarrierMismatch("side generators live on disjoint unions")
            if p.side != side:
                return 0.0
            return generator_value(lookup(source, name), p.inner)
    raise TypeError(f"unknown generator {gen!r}")


def value_of(space: DifferentialSpace, ref, p: Point, memo: dict | None = None) -> float:
    # memo caches named values at one point p
    if isinstance(ref, str):
        if memo is not None and ref in memo:
            return memo[ref]
        obj = lookup(space, ref)
    else:
        obj = ref
    if is_generator(obj):
        value = generator_value(obj, p)
    else:
        value = _element_value(space, obj, p, memo)
    if memo is not None and isinstance(ref, str):
        memo[ref] = value
    return value


def region_contains(space: DifferentialSpace, region: Region, p: Point, memo: dict | None = None) -> bool:
    for name, lo, hi in region.bounds:
        v = value_of(space, name, p, memo)
        if not lo < v < hi:
            return False
    return True


def covering_pieces(space: DifferentialSpace, element: Local, p: Point, memo: dict | None = None) -> list[int]:
    memo = {} if memo is None else memo
    return [k for k, (region, _) in enumerate(element.atlas) if region_contains(space, region, p, memo)]


def _element_value(space: DifferentialSpace, element: Element, p: Point, memo: dict | None = None) -> float:
    match element:
        case Constant(v):
            return v
        case Global(outer, inputs):
            return eval_map(outer, [value_of(space, ref, p, memo) for ref in inputs])
        case Local(atlas):
            memo = {} if memo is None else memo
            # lowest-indexed covering piece wins
            for region, piece in atlas:
                if region_contains(space, region, p, memo):
                    return _element_value(space, piece, p, memo)
            raise AtlasCoverageError(f"no atlas piece covers {point_text(p)}")
        case Pair(left, right):
            if not isinstance(p, Tagged):
                raise CarrierMismatch("pair elements are evaluated at tagged points")
            if p.side == "left":
                return value_of(space.sides[0], left, p.inner)
            return value_of(space.sides[1], right, p.inner)
    raise TypeError(f"unknown element {element!r}")


def eval_element(space: DifferentialSpace, element, p: Point) -> float:
    if not contains(space.carrier, p):
        raise NotInCarrier(f"{point_text(p)} is not a point of {space.name}")
    return value_of(space, element, p)


# ----------------------------------------------------------------- closures

def superpose(space: DifferentialSpace, outer: SmoothMap, inputs: Sequence, name: str | None = None) -> Global:
    if len(inputs) != outer.arity:
        raise ArityMismatch(f"outer map of arity {outer.arity} given {len(inputs)} inputs")
    for ref in inputs:
        _check_refs(space, ref)
    element = Global(outer, tuple(inputs))
    if name is not None:
        register(space, name, element)
    return element


def from_atlas(space: DifferentialSpace, pieces: Sequence[tuple[Region, SmoothMap, Sequence]],
               name: str | None = None, check_count: int | None = None, tol: float | None = None) -> Local:
    """Glue locally given pieces into one element.

    Agreement on overlaps and coverage are verified on carrier samples and
    the space's registered sample sets.
    """
    tol = ConfigurationValues.get_equality_tolerance() if tol is None else tol
    atlas = tuple((region, superpose(space, outer, inputs)) for region, outer, inputs in pieces)
    element = Local(atlas)
    _check_refs(space, element)
    points = list(space.carrier_samples(check_count)) + list(space.samples)
    for p in points:
        memo: dict = {}
        covering = covering_pieces(space, element, p, memo)
        if not covering:
            raise AtlasCoverageError(f"sampled point {point_text(p)} is covered by no atlas piece")
        values = [_element_value(space, atlas[k][1], p, memo) for k in covering]
        spread = max(values) - min(values)
        if spread > tol:
            raise AtlasDisagreement(f"atlas pieces disagree by {spread:.3g} at {point_text(p)}")
    logger.debug(f"Atlas of {len(atlas)} pieces checked on {len(points)} points")
    if name is not None:
        register(space, name, element, check_count=0)
    return element


def restrict(space: DifferentialSpace, sub: Carrier, name: str, check_count: int | None = None) -> DifferentialSpace:
    """The subspace (sub, C_sub); generators are renamed `g|name`, parent names stay usable."""
    points = list(sub.points) if isinstance(sub, FiniteSet) else sample(sub, space.seed, ConfigurationValues.get_sample_count() if check_count is None else check_count)
    for p in points:
        try:
            inside = contains(space.carrier, p)
        except CarrierMismatch as e:
            raise RestrictionError(f"{carrier_text(sub)} is not a subset of {space.name}: {e.message}") from None
        if not inside:
            raise RestrictionError(f"{point_text(p)} lies in {carrier_text(sub)} but not in {space.name}")
    generators = {}
    aliases = {}
    for gname, gen in space.generators.named.items():
        generators[f"{gname}|{name}"] = gen
        aliases[gname] = f"{gname}|{name}"
    restricted = DifferentialSpace(
        name,
        sub,
        GeneratorSet(generators, space.generators.all_projections),
        registry=dict(space.registry),
        aliases={**space.aliases, **aliases},
        witnesses=list(space.witnesses),
        seed=space.seed,
        sides=space.sides,
        parent=space,
    )
    logger.info(f"Restricted {space.name} to {name}: {carrier_text(sub)}")
    return restricted


def union_space(left: DifferentialSpace, right: DifferentialSpace, name: str | None = None) -> DifferentialSpace:
    """Disjoint union with structure C (+) D.

    Generators: the idempotents e_left=(1,0), e_right=(0,1) and every side
    generator lifted as left.<g> / right.<g>.
    """
    generators: dict[str, Generator] = {"e_left": Idempotent("left"), "e_right": Idempotent("right")}
    for gname in left.generators.names():
        generators[f"left.{gname}"] = SideLift("left", gname, left)
    for gname in right.generators.names():
        generators[f"right.{gname}"] = SideLift("right", gname, right)
    return DifferentialSpace(
        name or f"{left.name}+{right.name}",
        Union(left.carrier, right.carrier),
        GeneratorSet(generators),
        seed=left.seed,
        sides=(left, right),
    )


def pair(space: DifferentialSpace, name: str, left, right) -> Pair:
    element = Pair(left, right)
    register(space, name, element)
    return element


def generator_embedding(space: DifferentialSpace, p: Point, names: Sequence[str] | None = None) -> tuple[float, ...]:
    """p -> (g(p)) over the generators, in declaration order unless names are given."""
    names = list(names) if names is not None else space.generators.names()
    return tuple(value_of(space, n, p) for n in names)


# ------------------------------------------------------------------- export

def element_to_dict(element) -> dict | str:
    match element:
        case str():
            return element
        case Constant(v):
            return {"kind": "constant", "value": v}
        case Global(outer, inputs):
            return {"kind": "global", "outer": map_to_dict(outer), "text": map_text(outer, [i if isinstance(i, str) else "_" for i in inputs]),
                    "inputs": [element_to_dict(i) for i in inputs]}
        case Local(atlas):
            return {"kind": "local", "atlas": [
                {"region": [[n, lo, hi] for n, lo, hi in region.bounds], "piece": element_to_dict(piece)}
                for region, piece in atlas]}
        case Pair(left, right):
            return {"kind": "pair", "left": element_to_dict(left), "right": element_to_dict(right)}
    raise TypeError(f"unknown element {element!r}")


def generator_to_dict(gen: Generator) -> dict:
    match gen:
        case Projection(i):
            return {"kind": "projection", "index": i}
        case Composite(fn, indices):
            return {"kind": "composite", "indices": list(indices), "map": map_to_dict(fn)}
        case PointIndicator(q):
            return {"kind": "indicator", "point": point_to_json(q)}
        case Idempotent(side):
            return {"kind": "idempotent", "side": side}
        case SideLift(side, name, _):
            return {"kind": "lift", "side": side, "name": name}
    raise TypeError(f"unknown generator {gen!r}")


def space_to_json(space: DifferentialSpace) -> dict:
    return {
        "name": space.name,
        "carrier": carrier_to_json(space.carrier),
        "generators": {n: generator_to_dict(g) for n, g in space.generators.named.items()},
        "all_projections": space.generators.all_projections,
        "elements": {n: element_to_dict(e) for n, e in space.registry.items()},
        "witnesses": list(space.witnesses),
    }

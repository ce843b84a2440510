"""Homomorphisms C -> R: evaluation, extension from generator values,
classification of assignments, and the spectrum space.

A homomorphism is fixed by its values on generators; the composition law
chi(w(f1..fn)) = w(chi(f1)..chi(fn)) extends it to every global element.
classify decides whether such values come from a point of the carrier, or
else names an element that no point-free homomorphism could respect.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union as TypingUnion

import numpy as np
from loguru import logger

from carrier import FiniteDim, FiniteSet, FiniteVec, Point, Region, SeqPoint, SeqSpace, Tagged, Union, contains, dimension, member_near, point_text
from configuration_values import ConfigurationValues
from errors import (
    CarrierMismatch,
    DiffSpaceError,
    IdempotentViolation,
    LocalElementUnderAssignment,
    MissingGeneratorValue,
    MissingProjection,
    NotInCarrier,
    SearchBudgetExhausted,
    UnknownName,
)
from seqspace import diverges_along, probe_path, witness_value, xi_witness_name
from smooth_fn import distance_sq, eval_map
from structure import (
    Constant,
    DifferentialSpace,
    Global,
    Local,
    Pair,
    Projection,
    generator_embedding,
    is_generator,
    lookup,
    new_space,
    eval_element,
    register,
    value_of,
)

DIAGNOSES = ("NotInCarrier", "DivergentAlongProbe", "AlgebraicContradiction")
# samples scanned for a registered |x - p|^2 element
WITNESS_WINDOW = 32
# Gauss-Newton starts and steps when refining a fiber
FIBER_STARTS = 16
NEWTON_STEPS = 50
STEP_FLOOR = 1e-12
# refined points closer than this are one point
FIBER_MERGE = 1e-6


@dataclass(frozen=True)
class GeneratorAssignment:
    values: Mapping[str, float] = field(hash=False)
    # value of every unlisted pi(i) on spaces with all projections
    default: float = 0.0


@dataclass(frozen=True)
class EvaluationHom:
    point: Point


@dataclass(frozen=True)
class FromAssignment:
    assignment: GeneratorAssignment


Homomorphism = TypingUnion[EvaluationHom, FromAssignment]


@dataclass(frozen=True)
class EvaluationOutcome:
    points: tuple[Point, ...]


@dataclass(frozen=True)
class Obstructed:
    witness: str | None
    probe: tuple[Point, ...]
    diagnosis: str
    values: tuple[float, ...] = ()
    detail: str = ""


HomOutcome = TypingUnion[EvaluationOutcome, Obstructed]


def assignment(values: Mapping[str, float], default: float = 0.0) -> GeneratorAssignment:
    return GeneratorAssignment({k: float(v) for k, v in values.items()}, float(default))


def validate_assignment(space: DifferentialSpace, a: GeneratorAssignment) -> None:
    for name in a.values:
        if not is_generator(lookup(space, name)):
            raise UnknownName(f"{name!r} is an element of {space.name}, not a generator")


def ev(space: DifferentialSpace, p: Point) -> EvaluationHom:
    if not contains(space.carrier, p):
        raise NotInCarrier(f"{point_text(p)} is not a point of {space.name}")
    return EvaluationHom(p)


# --------------------------------------------------------------- application

def _projection_values(space: DifferentialSpace, a: GeneratorAssignment) -> dict[int, float]:
    found: dict[int, float] = {}
    for name, v in a.values.items():
        gen = lookup(space, name)
        if isinstance(gen, Projection):
            if gen.index in found and found[gen.index] != v:
                raise IdempotentViolation(f"two values given for coordinate {gen.index}")
            found[gen.index] = v
    return found


def _assigned(space: DifferentialSpace, a: GeneratorAssignment, name: str, gen, projections: dict[int, float]) -> float:
    if name in a.values:
        return a.values[name]
    for key, v in a.values.items():
        if space.aliases.get(key, key) == space.aliases.get(name, name):
            return v
    if isinstance(gen, Projection):
        if gen.index in projections:
            return projections[gen.index]
        if space.generators.all_projections and dimension(space.carrier) is None:
            return a.default
    raise MissingGeneratorValue(f"assignment gives no value for generator {name}")


def _hom_value(space: DifferentialSpace, a: GeneratorAssignment, ref, projections: dict[int, float]) -> float:
    obj = lookup(space, ref) if isinstance(ref, str) else ref
    if is_generator(obj):
        return _assigned(space, a, ref, obj, projections)
    match obj:
        case Constant(v):
            return v
        case Global(outer, inputs):
            return eval_map(outer, [_hom_value(space, a, r, projections) for r in inputs])
        case Local():
            raise LocalElementUnderAssignment(
                f"{ref if isinstance(ref, str) else 'element'} is defined by an atlas; classify the assignment first"
            )
        case Pair(left, right):
            e_left = _hom_value(space, a, "e_left", projections)
            e_right = _hom_value(space, a, "e_right", projections)
            total = 0.0
            # chi((f,g)) = chi(e_left) chi_left(f) + chi(e_right) chi_right(g)
            if e_left != 0.0:
                side_a = _side_assignment(a, "left")
                total += e_left * _hom_value(space.sides[0], side_a, left, _projection_values(space.sides[0], side_a))
            if e_right != 0.0:
                side_a = _side_assignment(a, "right")
                total += e_right * _hom_value(space.sides[1], side_a, right, _projection_values(space.sides[1], side_a))
            return total
    raise TypeError(f"unknown element {obj!r}")


def apply_hom(space: DifferentialSpace, h: Homomorphism, f) -> float:
    if isinstance(h, EvaluationHom):
        return eval_element(space, f, h.point)
    a = h.assignment
    validate_assignment(space, a)
    return _hom_value(space, a, f, _projection_values(space, a))


@dataclass(frozen=True)
class SpecFunction:
    """f-hat: chi -> chi(f)."""
    space: DifferentialSpace = field(compare=False)
    name: str

    def __call__(self, h: Homomorphism) -> float:
        return apply_hom(self.space, h, self.name)


def hat(space: DifferentialSpace, f: str) -> SpecFunction:
    lookup(space, f)
    return SpecFunction(space, f)


tau = hat


def iota(space: DifferentialSpace, p: Point, names: Sequence[str]) -> tuple[float, ...]:
    return generator_embedding(space, p, names)


def kappa(space: DifferentialSpace, h: Homomorphism, names: Sequence[str]) -> tuple[float, ...]:
    return tuple(apply_hom(space, h, n) for n in names)


# ------------------------------------------------------------------ recovery

def _projection_names(space: DifferentialSpace, n: int) -> dict[int, str]:
    names: dict[int, str] = {}
    for name, gen in space.generators.named.items():
        if isinstance(gen, Projection) and gen.index not in names:
            names[gen.index] = name
    if space.generators.all_projections:
        for i in range(1, n + 1):
            names.setdefault(i, f"pi({i})")
    return names


def recover_point(space: DifferentialSpace, h: Homomorphism) -> FiniteVec:
    if not isinstance(space.carrier, FiniteDim):
        raise CarrierMismatch(f"points are recovered over R^n, {space.name} is not finite-dimensional")
    if isinstance(h, EvaluationHom):
        return h.point
    n = space.carrier.n
    names = _projection_names(space, n)
    missing = [i for i in range(1, n + 1) if i not in names]
    if missing:
        raise MissingProjection(f"{space.name} has no projection generator for coordinates {missing}")
    return FiniteVec(tuple(apply_hom(space, h, names[i]) for i in range(1, n + 1)))


def _candidate(space: DifferentialSpace, a: GeneratorAssignment) -> Point | None:
    # None when the generators do not pin down coordinates
    carrier = space.carrier
    projections = _projection_values(space, a)
    if isinstance(carrier, FiniteDim):
        if all(i in projections for i in range(1, carrier.n + 1)):
            return FiniteVec(tuple(projections[i] for i in range(1, carrier.n + 1)))
        return None
    if isinstance(carrier, SeqSpace) and space.generators.all_projections:
        return SeqPoint(tuple(projections.items()))
    if isinstance(carrier, FiniteSet) and carrier.points and isinstance(carrier.points[0], FiniteVec):
        n = carrier.points[0].dim
        if all(i in projections for i in range(1, n + 1)):
            return FiniteVec(tuple(projections[i] for i in range(1, n + 1)))
    return None


# ------------------------------------------------------------ classification

def _window(space: DifferentialSpace, count: int | None = None) -> list[Point]:
    if isinstance(space.carrier, FiniteSet):
        return list(space.carrier.points) + list(space.samples)
    return list(space.carrier_samples(count)) + list(space.samples)


def _forced_mismatch(space: DifferentialSpace, a: GeneratorAssignment, p: Point, tol: float) -> Obstructed | None:
    for name, v in a.values.items():
        gen = lookup(space, name)
        if isinstance(gen, Projection):
            continue
        forced = value_of(space, name, p)
        if abs(forced - v) > tol:
            return Obstructed(name, (p,), "AlgebraicContradiction", (forced, v),
                              f"every point with these coordinates has {name} = {forced!r}, assignment says {v!r}")
    return None


def _distance_witness(space: DifferentialSpace, p: FiniteVec, tol: float) -> str:
    # a registered element equal to |x - p|^2 on the carrier, else an explicit one
    target = distance_sq(p.coords)
    window = _window(space, WITNESS_WINDOW)
    for name, element in space.registry.items():
        if not isinstance(element, Global):
            continue
        try:
            if all(abs(value_of(space, name, s) - eval_map(target, s.coords)) <= tol for s in window):
                return f"1/{name}"
        except DiffSpaceError:
            continue
    return f"1/dist2({point_text(p)})"


def _constraint_obstruction(space: DifferentialSpace, p: FiniteVec, tol: float) -> Obstructed | None:
    for k in space.carrier.constraints:
        try:
            g = k.value(p)
        except DiffSpaceError:
            continue
        label = k.label or "g"
        if k.relation == "=0" and abs(g) > tol:
            return Obstructed(label, (p,), "AlgebraicContradiction", (g,),
                              f"{label} vanishes on the carrier, so chi({label}) = 0, not {g!r}")
        if k.relation in (">0", "!=0") and g == 0.0:
            return Obstructed(f"1/({label})", (p,), "AlgebraicContradiction", (g,),
                              f"chi({label}) = 0 yet chi({label} * 1/({label})) = chi(1) = 1")
        if k.relation == ">0" and g < 0.0:
            return Obstructed(f"sqrt({label})", (p,), "AlgebraicContradiction", (g,),
                              f"chi({label}) = chi(sqrt({label}))^2 >= 0, assignment gives {g!r}")
    return None


def _obstruct(space: DifferentialSpace, p: Point, tol: float) -> Obstructed:
    carrier = space.carrier
    if isinstance(carrier, SeqSpace):
        if p in carrier.excluded:
            witness = xi_witness_name(p)
            path = probe_path(p)
            values = tuple(witness_value(space, witness, q) for q in path.points)
            if diverges_along(values):
                return Obstructed(witness, path.points, "DivergentAlongProbe", values,
                                  f"{witness} exceeds {values[-1]:.6g} along the probe")
            logger.warning(f"Witness {witness} did not meet the divergence rule toward {point_text(p)}")
            return Obstructed(witness, path.points, "NotInCarrier", values)
        for k in carrier.constraints:
            if not k.holds(p, tol):
                return Obstructed(k.label or None, (p,), "AlgebraicContradiction", (k.value(p),),
                                  f"constraint {k.label or k.relation} fails at the candidate")
        return Obstructed(None, (p,), "NotInCarrier")
    if isinstance(carrier, FiniteDim):
        found = _constraint_obstruction(space, p, tol)
        if found is not None:
            return found
    witness = _distance_witness(space, p, tol)
    base = witness[2:]
    return Obstructed(witness, (p,), "AlgebraicContradiction", (0.0,),
                      f"chi({base}) = 0 yet chi({base} * {witness}) = chi(1) = 1")


def _fiber_gap(space: DifferentialSpace, a: GeneratorAssignment, p: Point) -> float:
    try:
        return max((abs(value_of(space, name, p) - v) for name, v in a.values.items()), default=0.0)
    except DiffSpaceError:
        return math.inf


def _fiber_residual(space: DifferentialSpace, a: GeneratorAssignment, x: np.ndarray) -> np.ndarray:
    # generator equations plus the carrier's equality constraints
    p = FiniteVec(tuple(float(c) for c in x))
    rows = [value_of(space, name, p) - v for name, v in a.values.items()]
    rows += [k.value(p) for k in space.carrier.constraints if k.relation == "=0"]
    return np.array(rows)


def _refine_onto_fiber(space: DifferentialSpace, a: GeneratorAssignment, starts: Sequence[FiniteVec],
                       tol: float) -> list[FiniteVec]:
    """Gauss-Newton from each start onto {p : g(p) = a(g) for every assigned g}."""
    n = space.carrier.n
    found: list[FiniteVec] = []
    for start in starts:
        x = np.array(start.coords, dtype=float)
        try:
            for _ in range(NEWTON_STEPS):
                r = _fiber_residual(space, a, x)
                jac = np.empty((r.size, n))
                for j in range(n):
                    e = np.zeros(n)
                    e[j] = 1e-7 * max(1.0, abs(x[j]))
                    jac[:, j] = (_fiber_residual(space, a, x + e) - _fiber_residual(space, a, x - e)) / (2 * e[j])
                step = np.linalg.lstsq(jac, -r, rcond=None)[0]
                x = x + step
                if not np.all(np.isfinite(x)):
                    break
                # a stalled step ends the run; a small residual alone does not
                if np.max(np.abs(step)) <= STEP_FLOOR * max(1.0, float(np.max(np.abs(x)))):
                    break
            if not np.all(np.isfinite(x)) or np.max(np.abs(_fiber_residual(space, a, x))) > tol:
                continue
        except DiffSpaceError:
            continue
        p = FiniteVec(tuple(float(c) for c in x))
        # an excluded point is a limit of the fiber, not a member
        if any(_close(p, e) for e in space.carrier.excluded) or not contains(space.carrier, p, tol):
            continue
        found.append(p)
    logger.debug(f"Fiber refinement on {space.name}: {len(found)} of {len(starts)} starts converged")
    return found


def _close(p: FiniteVec, q: FiniteVec) -> bool:
    return max(abs(a - b) for a, b in zip(p.coords, q.coords)) <= FIBER_MERGE


def _merge(kept: list[Point], extra: Sequence[FiniteVec]) -> list[Point]:
    for p in extra:
        if not any(isinstance(q, FiniteVec) and _close(p, q) for q in kept):
            kept.append(p)
    return kept


def classify(space: DifferentialSpace, a: GeneratorAssignment, tol: float | None = None,
             count: int | None = None) -> HomOutcome:
    """Decide whether a set of generator values is the evaluation at some point."""
    tol = ConfigurationValues.get_equality_tolerance() if tol is None else tol
    validate_assignment(space, a)
    if isinstance(space.carrier, Union):
        return union_classify(space, a, tol, count)[1]
    if a.default != 0.0 and isinstance(space.carrier, SeqSpace):
        return Obstructed(None, (), "NotInCarrier", (a.default,),
                          "a nonzero default tail is not a finitely supported sequence")
    logger.info(f"Classifying assignment on {space.name}: {dict(a.values)}")
    p = _candidate(space, a)
    if p is not None:
        if contains(space.carrier, p, tol):
            if isinstance(space.carrier, FiniteSet):
                p = member_near(space.carrier, p, tol)
            mismatch = _forced_mismatch(space, a, p, tol)
            return mismatch if mismatch is not None else EvaluationOutcome((p,))
        return _obstruct(space, p, tol)
    # generators do not separate points: report the fiber, from samples and refined onto it
    window = _window(space, count)
    gaps = [_fiber_gap(space, a, s) for s in window]
    matched: list[Point] = []
    for s, gap in zip(window, gaps):
        if gap <= tol and s not in matched:
            matched.append(s)
    if isinstance(space.carrier, FiniteDim) and a.values:
        order = np.argsort(np.array(gaps), kind="stable")[:FIBER_STARTS]
        refined = _refine_onto_fiber(space, a, [window[i] for i in order], tol)
        matched = _merge(matched, refined)
    if not matched:
        return Obstructed(None, (), "NotInCarrier", (), "no point found that realises these generator values")
    return EvaluationOutcome(tuple(matched))


def _side_assignment(a: GeneratorAssignment, side: str) -> GeneratorAssignment:
    prefix = f"{side}."
    return GeneratorAssignment({k[len(prefix):]: v for k, v in a.values.items() if k.startswith(prefix)}, a.default)


def union_classify(space: DifferentialSpace, a: GeneratorAssignment, tol: float | None = None,
                   count: int | None = None) -> tuple[str, HomOutcome]:
    """Route an assignment on C (+) D to the side its idempotents select."""
    tol = ConfigurationValues.get_equality_tolerance() if tol is None else tol
    if space.sides is None:
        raise CarrierMismatch(f"{space.name} is not a disjoint union")
    validate_assignment(space, a)
    try:
        e_left, e_right = a.values["e_left"], a.values["e_right"]
    except KeyError as e:
        raise MissingGeneratorValue(f"assignment gives no value for idempotent {e.args[0]}") from None
    if e_left not in (0.0, 1.0) or e_right not in (0.0, 1.0) or e_left + e_right != 1.0:
        raise IdempotentViolation(
            f"idempotents must map to 0 or 1 and sum to 1, got e_left={e_left!r}, e_right={e_right!r}"
        )
    side = "left" if e_left == 1.0 else "right"
    other = "right" if side == "left" else "left"
    for k, v in a.values.items():
        # chi(other.g) = chi(other.g * e_other) = chi(other.g) * 0
        if k.startswith(f"{other}.") and v != 0.0:
            return side, Obstructed(k, (), "AlgebraicContradiction", (v,),
                                    f"{k} is supported on the {other} side, which chi annihilates")
    target = space.sides[0] if side == "left" else space.sides[1]
    outcome = classify(target, _side_assignment(a, side), tol, count)
    if isinstance(outcome, EvaluationOutcome):
        outcome = EvaluationOutcome(tuple(Tagged(side, p) for p in outcome.points))
    return side, outcome


def classify_batch(space: DifferentialSpace, assignments: Sequence[GeneratorAssignment],
                   workers: int | None = None) -> list[HomOutcome]:
    # warm every sample count the workers read before fanning out
    if not isinstance(space.carrier, (FiniteSet, Union)):
        space.carrier_samples()
        space.carrier_samples(WITNESS_WINDOW)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(lambda a: classify(space, a), assignments))


# ------------------------------------------------------------ spectrum space

def default_generator_names(space: DifferentialSpace) -> list[str]:
    names = space.generators.names()
    if not names and space.generators.all_projections:
        names = [f"pi({i})" for i in range(1, ConfigurationValues.get_seq_index_bound() + 1)]
    return names


def _rename(ref, mapping: dict[str, str]):
    if isinstance(ref, str):
        return mapping[ref]
    match ref:
        case Constant():
            return ref
        case Global(outer, inputs):
            return Global(outer, tuple(_rename(r, mapping) for r in inputs))
        case Local(atlas):
            return Local(tuple(
                (Region(tuple((mapping[n], lo, hi) for n, lo, hi in region.bounds)), _rename(piece, mapping))
                for region, piece in atlas))
    raise KeyError(f"{type(ref).__name__} elements have no coordinate form")


def spec_space(space: DifferentialSpace, candidates: Sequence[GeneratorAssignment] = (),
               names: Sequence[str] | None = None, count: int | None = None, name: str | None = None) -> DifferentialSpace:
    """(Spec C, C-hat) over a finite window.

    Points are generator-value vectors: the ev images of carrier samples plus
    every candidate assignment classify accepts. Generator g becomes the
    coordinate hat(g); registered elements are carried over as hat(f).
    """
    names = list(names) if names is not None else default_generator_names(space)
    vectors: list[FiniteVec] = []
    for p in _window(space, count):
        v = FiniteVec(generator_embedding(space, p, names))
        if v not in vectors:
            vectors.append(v)
    for a in candidates:
        outcome = classify(space, a)
        if not isinstance(outcome, EvaluationOutcome):
            logger.warning(f"Candidate {dict(a.values)} rejected: {outcome.diagnosis}")
            continue
        for p in outcome.points:
            v = FiniteVec(generator_embedding(space, p, names))
            if v not in vectors:
                vectors.append(v)
    generators = {f"hat({g})": Projection(i + 1) for i, g in enumerate(names)}
    spec = new_space(name or f"Spec({space.name})", FiniteSet(tuple(vectors)), generators, seed=space.seed)
    mapping = {g: f"hat({g})" for g in names}
    for ename, element in space.registry.items():
        try:
            transported = _rename(element, mapping)
            register(spec, f"hat({ename})", transported)
        except (DiffSpaceError, KeyError) as e:
            logger.warning(f"Element {ename} not carried into {spec.name}: {e}")
            continue
        mapping[ename] = f"hat({ename})"
    logger.info(f"{spec.name}: {len(vectors)} points, {len(spec.registry)} elements")
    return spec


def density_witness(space: DifferentialSpace, a: GeneratorAssignment, tol: float, family: Sequence[str],
                    budget: int | None = None, search_only: bool = False) -> Point:
    """A carrier point p with |f-hat(chi) - f(p)| <= tol over the test family."""
    if not tol > 0.0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    budget = ConfigurationValues.get_density_budget() if budget is None else budget
    h = FromAssignment(a)
    targets = [apply_hom(space, h, f) for f in family]

    def close(p: Point) -> bool:
        return all(abs(value_of(space, f, p) - t) <= tol for f, t in zip(family, targets))

    if not search_only:
        outcome = classify(space, a)
        if isinstance(outcome, EvaluationOutcome):
            for p in outcome.points:
                if close(p):
                    return p
    pool = list(space.carrier.points) if isinstance(space.carrier, FiniteSet) else space.carrier_samples(budget)
    for p in list(space.samples) + list(pool):
        if close(p):
            return p
    raise SearchBudgetExhausted(f"no point within {tol} found among {len(pool)} candidates")

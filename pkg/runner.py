"""Executes a parsed Program statement by statement and collects report records."""
from __future__ import annotations

import re
from dataclasses import dataclass, field

from loguru import logger

from carrier import (
    Carrier,
    Chart,
    Constraint,
    FiniteDim,
    FiniteSet,
    FiniteVec,
    Point,
    Region,
    SeqPoint,
    SeqSpace,
    Tagged,
    Union,
    contains,
    dimension,
    point_text,
)
from configuration_values import ConfigurationValues
from dsl import (
    AssignDef,
    AssignLit,
    AtlasDef,
    Bin,
    Call,
    ClassifyCmd,
    DensityCmd,
    EvalAt,
    EvalUnder,
    FiniteSetExpr,
    FnDef,
    GenDef,
    NegE,
    Num,
    PairDef,
    PowE,
    ProbeCmd,
    Program,
    RealSpace,
    Ref,
    SampleStmt,
    SeqLit,
    SpaceDef,
    SpecCmd,
    TaggedLit,
    TildeCmd,
    TildeExpr,
    UnionDef,
    UseStmt,
    VecLit,
    XiCmd,
    ZLit,
    ZeroLit,
    expr_text,
    parse_program,
    statement_keyword,
)
from errors import CarrierMismatch, DiffSpaceError, DslError, UnknownName
from report import (
    ClassifyRecord,
    DensityRecord,
    ErrorRecord,
    EvalHomRecord,
    EvalRecord,
    ProbeRecord,
    SpecRecord,
    TildeRecord,
    XiRecord,
    real,
    reals,
)
from seqspace import (
    LIMIT_WINDOW,
    NotProlongable,
    diverges_along,
    ensure_rho,
    finite_dim_probe_direction,
    probe_path,
    tilde_membership,
    tilde_structure,
    witness_value,
    xi,
    xi_space,
    z,
)
from smooth_fn import Compose, Const, Cos, Cutoff, Exp, Neg, Node, Sin, Slot, SmoothMap, bump_ball, distance_sq, eval_map
from spectrum import (
    EvaluationOutcome,
    FromAssignment,
    apply_hom,
    assignment,
    classify,
    density_witness,
    spec_space,
    union_classify,
)
from structure import (
    Composite,
    Constant,
    DifferentialSpace,
    Global,
    Projection,
    add_generator,
    add_samples,
    eval_element,
    from_atlas,
    new_space,
    pair,
    register,
    union_space,
    value_of,
)

_PI = re.compile(r"^pi\((\d+)\)$")
_RHO = re.compile(r"^rho\((\d+)\)$")
_UNARY = {"exp": Exp, "sin": Sin, "cos": Cos, "cutoff": Cutoff}
# spectrum points listed in a spec record
SPEC_POINT_LIMIT = 32


@dataclass
class RunResult:
    records: list = field(default_factory=list)

    @property
    def exit_status(self) -> int:
        return 1 if any(isinstance(r, ErrorRecord) for r in self.records) else 0


def to_point(lit, carrier: Carrier | None = None) -> Point:
    match lit:
        case VecLit(coords):
            return FiniteVec(coords)
        case SeqLit(pairs):
            return SeqPoint(pairs)
        case ZLit(k):
            return z(k)
        case ZeroLit():
            n = dimension(carrier) if carrier is not None else None
            return FiniteVec((0.0,) * n) if n else SeqPoint()
        case TaggedLit(side, inner):
            sub = None
            if isinstance(carrier, Union):
                sub = carrier.left if side == "left" else carrier.right
            return Tagged(side, to_point(inner, sub))
    raise TypeError(f"not a point literal: {lit!r}")


# ----------------------------------------------------------- expression compile

def _inputs(expr, space: DifferentialSpace | None) -> list[str]:
    # names in first-appearance order; dist2/bump read every coordinate
    names: list[str] = []

    def add(name: str):
        if name not in names:
            names.append(name)

    def visit(e):
        match e:
            case Ref(name):
                add(name)
            case NegE(a):
                visit(a)
            case Bin(_, left, right):
                visit(left)
                visit(right)
            case PowE(base, _):
                visit(base)
            case Call(fn, args) if fn in ("dist2", "bump"):
                for i in range(1, _dimension(space) + 1):
                    add(f"pi({i})")
            case Call(_, args):
                for a in args:
                    visit(a)

    visit(expr)
    return names


def _dimension(space: DifferentialSpace | None) -> int:
    n = dimension(space.carrier) if space is not None else None
    if n is None:
        raise CarrierMismatch("dist2 and bump need a finite-dimensional space")
    return n


def _node(e, slots: dict[str, int], space: DifferentialSpace | None) -> Node:
    match e:
        case Num(v):
            return Const(v)
        case Ref(name):
            return Slot(slots[name])
        case NegE(a):
            return Neg(_node(a, slots, space))
        case Bin("+", left, right):
            return _node(left, slots, space) + _node(right, slots, space)
        case Bin("-", left, right):
            return _node(left, slots, space) - _node(right, slots, space)
        case Bin("*", left, right):
            return _node(left, slots, space) * _node(right, slots, space)
        case Bin("/", left, right):
            return _node(left, slots, space) / _node(right, slots, space)
        case PowE(base, n):
            return _node(base, slots, space) ** n
        case Call(fn, args) if fn in _UNARY:
            return _UNARY[fn](_node(args[0], slots, space))
        case Call(fn, args):
            n = _dimension(space)
            p = to_point(args[0], space.carrier)
            if not isinstance(p, FiniteVec) or p.dim != n:
                raise CarrierMismatch(f"{fn} needs a point of dimension {n}")
            outer = distance_sq(p.coords) if fn == "dist2" else bump_ball(p.coords, args[1].value)
            return Compose(outer, tuple(Slot(slots[f"pi({i})"]) for i in range(1, n + 1)))
    raise TypeError(f"not an expression: {e!r}")


def compile_map(expr, space: DifferentialSpace | None, fallback: str | None = None) -> tuple[SmoothMap, list[str]]:
    names = _inputs(expr, space)
    if not names:
        if fallback is None:
            raise CarrierMismatch(f"{expr_text(expr)} reads no coordinate")
        names = [fallback]
    slots = {name: i for i, name in enumerate(names)}
    return SmoothMap(len(names), _node(expr, slots, space)), names


def _ensure_rhos(space: DifferentialSpace, names) -> None:
    for name in names:
        m = _RHO.match(name)
        if m:
            ensure_rho(space, int(m.group(1)))


def compile_element(expr, space: DifferentialSpace):
    names = _inputs(expr, space)
    _ensure_rhos(space, names)
    if not names:
        return Constant(eval_map(SmoothMap(1, _node(expr, {}, space)), [0.0]))
    fn, names = compile_map(expr, space)
    return Global(fn, tuple(names))


def _indices(names: list[str]) -> tuple[int, ...]:
    indices = []
    for name in names:
        m = _PI.match(name)
        if m is None:
            raise UnknownName(f"only coordinates pi(i) may appear here, got {name!r}")
        indices.append(int(m.group(1)))
    return tuple(indices)


# ----------------------------------------------------------------------- runner

class Runner:
    def __init__(self, seed: int | None = None, hex_floats: bool = False):
        self.seed = ConfigurationValues.get_seed() if seed is None else seed
        self.hex_floats = hex_floats
        self.spaces: dict[str, DifferentialSpace] = {}
        self.assignments: dict[str, AssignLit] = {}
        self.active: str | None = None

    def real(self, v: float):
        return real(v, self.hex_floats)

    def reals(self, values):
        return reals(values, self.hex_floats)

    def space(self, name: str | None) -> DifferentialSpace:
        name = name if name is not None else self.active
        if name is None or name not in self.spaces:
            raise UnknownName(f"space {name!r} is not available")
        return self.spaces[name]

    def assignment_of(self, a):
        lit = self.assignments[a] if isinstance(a, str) else a
        return assignment(dict(lit.values), lit.default if lit.default is not None else 0.0)

    def run(self, program: Program) -> RunResult:
        result = RunResult()
        for stmt in program.statements:
            line = stmt.span.line
            try:
                record = getattr(self, f"do_{type(stmt).__name__}")(stmt)
            except DiffSpaceError as e:
                logger.warning(f"Line {line}: {e.kind}: {e}")
                record = ErrorRecord(line=line, seed=self.seed, statement=statement_keyword(stmt), kind=e.kind,
                                     error=str(e))
            except Exception as e:
                logger.exception(f"Line {line}: {statement_keyword(stmt)} failed")
                record = ErrorRecord(line=line, seed=self.seed, statement=statement_keyword(stmt),
                                     kind="InternalError", error=f"{type(e).__name__}: {e}")
            if record is not None:
                result.records.append(record)
        logger.info(f"Ran {len(program.statements)} statements, {len(result.records)} records, exit {result.exit_status}")
        return result

    # definitions

    def do_SpaceDef(self, s: SpaceDef):
        match s.carrier:
            case RealSpace(dim, constraints, excluded, chart):
                space = self._real_space(s.name, dim, constraints, excluded, chart)
            case FiniteSetExpr(points):
                pts = tuple(to_point(p) for p in points)
                if len({type(p) for p in pts}) > 1 or (isinstance(pts[0], FiniteVec) and len({p.dim for p in pts}) > 1):
                    raise CarrierMismatch("the points of a finite set must be of one kind and dimension")
                if isinstance(pts[0], Tagged):
                    raise CarrierMismatch("a finite set holds plain points, not tagged ones")
                space = new_space(s.name, FiniteSet(pts), all_projections=True, seed=self.seed)
            case TildeExpr(point):
                p = to_point(point)
                if not isinstance(p, SeqPoint):
                    raise CarrierMismatch("tilde(p) needs a sequence point")
                space = tilde_structure(p, s.name, self.seed)
        self.spaces[s.name] = space
        self.active = s.name
        logger.info(f"Defined space {s.name}")

    def _real_space(self, name, dim, constraints, excluded, chart) -> DifferentialSpace:
        ks = []
        for k in constraints:
            fn, names = compile_map(k.expr, None)
            ks.append(Constraint(fn, {"=": "=0", ">": ">0", "!=": "!=0"}[k.relation], _indices(names), expr_text(k.expr)))
        if dim is None:
            points = tuple(to_point(p, SeqSpace()) for p in excluded)
            if not all(isinstance(p, SeqPoint) for p in points):
                raise CarrierMismatch("R^N excludes sequence points only")
            if points:
                return xi_space(ConfigurationValues.get_xi_atlas_pieces(), points, name, self.seed, constraints=ks)
            return new_space(name, SeqSpace((), tuple(ks)), all_projections=True, seed=self.seed)
        for index in (i for k in ks for i in k.indices):
            if index > dim:
                raise CarrierMismatch(f"constraint reads coordinate {index} of R^{dim}")
        carrier_chart = None
        if chart is not None:
            maps = []
            for e in chart.coords:
                fn, _ = compile_map(e, None, fallback=chart.param)
                maps.append(fn)
            carrier_chart = Chart(((chart.lo, chart.hi),), tuple(maps))
        points = tuple(to_point(p, FiniteDim(dim)) for p in excluded)
        if not all(isinstance(p, FiniteVec) and p.dim == dim for p in points):
            raise CarrierMismatch(f"R^{dim} excludes points of dimension {dim} only")
        return new_space(name, FiniteDim(dim, tuple(ks), points, carrier_chart), all_projections=True, seed=self.seed)

    def do_UnionDef(self, s: UnionDef):
        self.spaces[s.name] = union_space(self.space(s.left), self.space(s.right), s.name)
        self.active = s.name

    def do_GenDef(self, s: GenDef):
        space = self.space(None)
        for name, expr in s.items:
            if isinstance(expr, Ref) and _PI.match(expr.name):
                gen = Projection(int(_PI.match(expr.name).group(1)))
            else:
                fn, names = compile_map(expr, None)
                gen = Composite(fn, _indices(names))
            add_generator(space, name, gen)

    def do_FnDef(self, s: FnDef):
        space = self.space(None)
        register(space, s.name, compile_element(s.expr, space))

    def do_PairDef(self, s: PairDef):
        pair(self.space(None), s.name, s.left, s.right)

    def do_AtlasDef(self, s: AtlasDef):
        space = self.space(None)
        pieces = []
        for bounds, expr in s.pieces:
            _ensure_rhos(space, [ref for ref, _, _ in bounds] + _inputs(expr, space))
            fn, names = compile_map(expr, space, fallback=bounds[0][0])
            pieces.append((Region(bounds), fn, names))
        from_atlas(space, pieces, name=s.name)

    def do_AssignDef(self, s: AssignDef):
        self.assignments[s.name] = s.assignment

    def do_SampleStmt(self, s: SampleStmt):
        space = self.space(None)
        add_samples(space, [to_point(p, space.carrier) for p in s.points])

    def do_UseStmt(self, s: UseStmt):
        self.space(s.name)
        self.active = s.name

    # commands

    def do_EvalAt(self, s: EvalAt) -> EvalRecord:
        space = self.space(s.space)
        p = to_point(s.point, space.carrier)
        value = eval_element(space, s.target, p)
        return EvalRecord(line=s.span.line, seed=self.seed, space=space.name, target=s.target, point=point_text(p),
                          value=self.real(value))

    def do_EvalUnder(self, s: EvalUnder) -> EvalHomRecord:
        space = self.space(s.space)
        a = self.assignment_of(s.assignment)
        value = apply_hom(space, FromAssignment(a), s.target)
        return EvalHomRecord(line=s.span.line, seed=self.seed, space=space.name, target=s.target,
                             assignment={k: self.real(v) for k, v in a.values.items()}, value=self.real(value))

    def do_ClassifyCmd(self, s: ClassifyCmd) -> ClassifyRecord:
        space = self.space(s.space)
        a = self.assignment_of(s.assignment)
        side = None
        if space.sides is not None:
            side, outcome = union_classify(space, a)
        else:
            outcome = classify(space, a)
        base = dict(line=s.span.line, seed=self.seed, space=space.name, side=side)
        if isinstance(outcome, EvaluationOutcome):
            return ClassifyRecord(**base, outcome="evaluation", points=[point_text(p) for p in outcome.points])
        return ClassifyRecord(
            **base,
            outcome="obstructed",
            witness=outcome.witness,
            probe=[point_text(p) for p in outcome.probe] or None,
            diagnosis=outcome.diagnosis,
            values=self.reals(outcome.values) or None,
            detail=outcome.detail or None,
        )

    def do_XiCmd(self, s: XiCmd) -> XiRecord:
        p = to_point(s.point, SeqSpace())
        report = xi(p)
        return XiRecord(line=s.span.line, seed=self.seed, point=point_text(p), value=self.real(report.value),
                        k0=report.k0, terms_evaluated=report.terms_evaluated,
                        trace=[(k, self.real(t), self.real(term)) for k, t, term in report.trace])

    def _probe(self, space: DifferentialSpace, center: Point, which: int = 0):
        direction = None
        if isinstance(center, FiniteVec) and isinstance(space.carrier, FiniteDim):
            direction = finite_dim_probe_direction(space, center, which)
        elif isinstance(center, SeqPoint) and which > 0:
            # along the first axis instead of z(k)
            direction = SeqPoint(((which, 1.0),))
        return probe_path(center, direction=direction)

    def do_ProbeCmd(self, s: ProbeCmd) -> ProbeRecord:
        space = self.space(s.space)
        center = to_point(s.point, space.carrier)
        path = self._probe(space, center)
        values = [witness_value(space, s.target, q) for q in path.points]
        diverges = diverges_along(values)
        limit = None
        if not diverges:
            window = values[-LIMIT_WINDOW:]
            limit = self.real(sum(window) / len(window))
        return ProbeRecord(line=s.span.line, seed=self.seed, space=space.name, target=s.target,
                           toward=point_text(center), ks=list(path.ks), values=self.reals(values), diverges=diverges,
                           limit=limit)

    def do_TildeCmd(self, s: TildeCmd) -> TildeRecord:
        space = self.space(s.space)
        candidate = to_point(s.point, space.carrier)
        if isinstance(candidate, Tagged):
            raise CarrierMismatch("tilde candidates are untagged points")
        witnesses = list(s.witnesses) or list(space.witnesses)
        probes = [] if contains(space.carrier, candidate) else [self._probe(space, candidate, i).points for i in range(2)]
        outcome = tilde_membership(space, candidate, witnesses, probes)
        base = dict(line=s.span.line, seed=self.seed, space=space.name, point=point_text(candidate))
        if isinstance(outcome, NotProlongable):
            return TildeRecord(**base, prolongable=False, witness=outcome.witness, probe_index=outcome.probe_index,
                               probe_values=self.reals(outcome.values), reason=outcome.reason)
        return TildeRecord(**base, prolongable=True, values={k: self.real(v) for k, v in outcome.values.items()})

    def do_SpecCmd(self, s: SpecCmd) -> SpecRecord:
        space = self.space(s.space)
        spec = spec_space(space, [self.assignment_of(a) for a in s.candidates])
        points = spec.carrier.points
        return SpecRecord(line=s.span.line, seed=self.seed, space=space.name, spectrum=spec.name,
                          generators=spec.generators.names(), elements=list(spec.registry), size=len(points),
                          points=[point_text(p) for p in points[:SPEC_POINT_LIMIT]])

    def do_DensityCmd(self, s: DensityCmd) -> DensityRecord:
        space = self.space(s.space)
        a = self.assignment_of(s.assignment)
        p = density_witness(space, a, s.tol, s.family)
        h = FromAssignment(a)
        gaps = [abs(value_of(space, f, p) - apply_hom(space, h, f)) for f in s.family]
        return DensityRecord(line=s.span.line, seed=self.seed, space=space.name, tol=self.real(s.tol),
                             family=list(s.family), point=point_text(p), gaps=self.reals(gaps))


def run(program: Program, seed: int | None = None, hex_floats: bool = False) -> RunResult:
    return Runner(seed, hex_floats).run(program)


def run_source(text: str, seed: int | None = None, hex_floats: bool = False) -> RunResult:
    """Parse and run; a parse failure becomes the single error record."""
    try:
        program = parse_program(text)
    except DslError as e:
        logger.warning(f"Parse failed: {e}")
        seed = ConfigurationValues.get_seed() if seed is None else seed
        return RunResult([ErrorRecord(line=e.line, seed=seed, statement="parse", kind=e.kind, error=str(e))])
    return run(program, seed, hex_floats)

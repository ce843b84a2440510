"""Statement language for scripting differential-space checks.

    space M = R^2 minus {(0,0)};
    gen x = pi(1), y = pi(2);
    fn w = x^2 + y^2;
    classify {x: 0, y: 0};

parse_program turns source text into a Program, resolving every name against
the space it is used in. Errors carry 1-based line and column plus the tokens
that would have been accepted. The grammar is in docs/grammar.md.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import NamedTuple, Union as TypingUnion

from configuration_values import ConfigurationValues
from errors import DslNameError, DslSyntaxError

TOKEN_SPEC = [
    ("NEWLINE", r"\n"),
    ("WS", r"[ \t\r\f\v]+"),
    ("COMMENT", r"#[^\n]*"),
    ("NUMBER", r"(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?"),
    ("IDENT", r"[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)?"),
    ("OP", r"->|=>|!=|[\^+\-*/(){}\[\],;:=><|]"),
]

MASTER = re.compile("|".join(f"(?P<{name}>{pat})" for name, pat in TOKEN_SPEC))

KEYWORDS = {
    "space", "union", "gen", "fn", "pair", "atlas", "assign", "sample", "use",
    "eval", "at", "under", "in", "classify", "xi", "probe", "toward", "tilde",
    "spec", "with", "density", "tol", "family", "where", "minus", "chart",
    "when", "default", "left", "right", "seq", "z", "inf", "R", "N",
}
UNARY_BUILTINS = ("exp", "sin", "cos", "cutoff")
BUILTINS = {"pi", "rho", "dist2", "bump", *UNARY_BUILTINS}
RELATIONS = {"=": "=0", ">": ">0", "!=": "!=0"}
STATEMENT_HEADS = frozenset({
    "space", "union", "gen", "fn", "pair", "atlas", "assign", "sample", "use",
    "eval", "classify", "xi", "probe", "tilde", "spec", "density",
})
_INT_TEXT = re.compile(r"^\d{1,18}$")


class Tok(NamedTuple):
    kind: str
    text: str
    line: int
    col: int


def lex(src: str) -> list[Tok]:
    tokens = []
    line, col, pos = 1, 1, 0
    while pos < len(src):
        m = MASTER.match(src, pos)
        if not m:
            raise DslSyntaxError(f"unexpected character {src[pos]!r}", line, col)
        kind = m.lastgroup
        text = m.group()
        if kind == "NEWLINE":
            line += 1
            col = 1
        else:
            if kind not in ("WS", "COMMENT"):
                tokens.append(Tok(kind, text, line, col))
            col += len(text)
        pos = m.end()
    tokens.append(Tok("EOF", "", line, col))
    return tokens


# ------------------------------------------------------------------------ AST

@dataclass(frozen=True)
class Span:
    line: int
    col: int


NOWHERE = Span(0, 0)


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Ref:
    name: str


@dataclass(frozen=True)
class NegE:
    arg: "Expr"


@dataclass(frozen=True)
class Bin:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class PowE:
    base: "Expr"
    exponent: int


@dataclass(frozen=True)
class Call:
    fn: str
    args: tuple


Expr = TypingUnion[Num, Ref, NegE, Bin, PowE, Call]


@dataclass(frozen=True)
class VecLit:
    coords: tuple[float, ...]


@dataclass(frozen=True)
class SeqLit:
    pairs: tuple[tuple[int, float], ...]


@dataclass(frozen=True)
class ZLit:
    k: int


@dataclass(frozen=True)
class ZeroLit:
    pass


@dataclass(frozen=True)
class TaggedLit:
    side: str
    inner: "PointLit"


PointLit = TypingUnion[VecLit, SeqLit, ZLit, ZeroLit, TaggedLit]


@dataclass(frozen=True)
class ConstraintExpr:
    expr: Expr
    relation: str


@dataclass(frozen=True)
class ChartExpr:
    param: str
    lo: float
    hi: float
    coords: tuple[Expr, ...]


@dataclass(frozen=True)
class RealSpace:
    dim: int | None
    constraints: tuple[ConstraintExpr, ...] = ()
    excluded: tuple[PointLit, ...] = ()
    chart: ChartExpr | None = None


@dataclass(frozen=True)
class FiniteSetExpr:
    points: tuple[PointLit, ...]


@dataclass(frozen=True)
class TildeExpr:
    point: PointLit


@dataclass(frozen=True)
class AssignLit:
    values: tuple[tuple[str, float], ...]
    default: float | None = None


@dataclass(frozen=True)
class SpaceDef:
    name: str
    carrier: TypingUnion[RealSpace, FiniteSetExpr, TildeExpr]
    span: Span = field(default=NOWHERE, compare=False)


@dataclass(frozen=True)
class UnionDef:
    name: str
    left: str
    right: str
    span: Span = field(default=NOWHERE, compare=False)


@dataclass(frozen=True)
class GenDef:
    items: tuple[tuple[str, Expr], ...]
    span: Span = field(default=NOWHERE, compare=False)


@dataclass(frozen=True)
class FnDef:
    name: str
    expr: Expr
    span: Span = field(default=NOWHERE, compare=False)


@dataclass(frozen=True)
class PairDef:
    name: str
    left: str
    right: str
    span: Span = field(default=NOWHERE, compare=False)


@dataclass(frozen=True)
class AtlasDef:
    name: str
    pieces: tuple[tuple[tuple[tuple[str, float, float], ...], Expr], ...]
    span: Span = field(default=NOWHERE, compare=False)


@dataclass(frozen=True)
class AssignDef:
    name: str
    assignment: AssignLit
    span: Span = field(default=NOWHERE, compare=False)


@dataclass(frozen=True)
class SampleStmt:
    points: tuple[PointLit, ...]
    span: Span = field(default=NOWHERE, compare=False)


@dataclass(frozen=True)
class UseStmt:
    name: str
    span: Span = field(default=NOWHERE, compare=False)


@dataclass(frozen=True)
class EvalAt:
    target: str
    point: PointLit
    space: str | None = None
    span: Span = field(default=NOWHERE, compare=False)


@dataclass(frozen=True)
class EvalUnder:
    target: str
    assignment: TypingUnion[str, AssignLit]
    space: str | None = None
    span: Span = field(default=NOWHERE, compare=False)


@dataclass(frozen=True)
class ClassifyCmd:
    assignment: TypingUnion[str, AssignLit]
    space: str | None = None
    span: Span = field(default=NOWHERE, compare=False)


@dataclass(frozen=True)
class XiCmd:
    point: PointLit
    span: Span = field(default=NOWHERE, compare=False)


@dataclass(frozen=True)
class ProbeCmd:
    target: str
    point: PointLit
    space: str | None = None
    span: Span = field(default=NOWHERE, compare=False)


@dataclass(frozen=True)
class TildeCmd:
    point: PointLit
    witnesses: tuple[str, ...] = ()
    space: str | None = None
    span: Span = field(default=NOWHERE, compare=False)


@dataclass(frozen=True)
class SpecCmd:
    candidates: tuple[TypingUnion[str, AssignLit], ...] = ()
    space: str | None = None
    span: Span = field(default=NOWHERE, compare=False)


@dataclass(frozen=True)
class DensityCmd:
    assignment: TypingUnion[str, AssignLit]
    tol: float
    family: tuple[str, ...]
    space: str | None = None
    span: Span = field(default=NOWHERE, compare=False)


Statement = TypingUnion[
    SpaceDef, UnionDef, GenDef, FnDef, PairDef, AtlasDef, AssignDef, SampleStmt, UseStmt,
    EvalAt, EvalUnder, ClassifyCmd, XiCmd, ProbeCmd, TildeCmd, SpecCmd, DensityCmd,
]


@dataclass(frozen=True)
class Program:
    statements: tuple[Statement, ...]


# ------------------------------------------------------------ name resolution

@dataclass
class _Scope:
    kind: str  # finite, seq, set, tilde, union
    dim: int | None = None
    generators: set[str] = field(default_factory=set)
    elements: set[str] = field(default_factory=set)
    sides: tuple["_Scope", "_Scope"] | None = None

    def names(self) -> set[str]:
        return self.generators | self.elements

    def has_projection(self, i: int) -> bool:
        if self.kind in ("seq", "tilde"):
            return i >= 1
        if self.kind in ("finite", "set") and self.dim is not None:
            return 1 <= i <= self.dim
        return False

    def resolves(self, name: str, generators_only: bool = False) -> bool:
        if name in self.generators or (not generators_only and name in self.elements):
            return True
        m = re.match(r"^pi\((\d+)\)$", name)
        if m:
            return self.has_projection(int(m.group(1)))
        m = re.match(r"^rho\((\d+)\)$", name)
        if m and not generators_only:
            return self.kind in ("seq", "tilde") and int(m.group(1)) >= 1
        if self.sides is not None and "." in name:
            side, rest = name.split(".", 1)
            if side in ("left", "right"):
                return (self.sides[0] if side == "left" else self.sides[1]).resolves(rest, generators_only=True)
        return False


# --------------------------------------------------------------------- parser

class Parser:
    def __init__(self, src: str, max_nesting: int | None = None):
        self.tokens = lex(src)
        self.pos = 0
        self.depth = 0
        self.max_nesting = ConfigurationValues.get_max_nesting() if max_nesting is None else max_nesting
        self.scopes: dict[str, _Scope] = {}
        self.assignments: dict[str, AssignLit] = {}
        self.active: str | None = None

    # token helpers

    def peek(self, offset: int = 0) -> Tok:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def at(self, text: str) -> bool:
        tok = self.peek()
        return tok.kind in ("OP", "IDENT") and tok.text == text

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.pos += 1
            return True
        return False

    def fail(self, message: str, expected=(), tok: Tok | None = None):
        tok = tok or self.peek()
        found = "end of input" if tok.kind == "EOF" else repr(tok.text)
        raise DslSyntaxError(f"{message}, found {found}", tok.line, tok.col, frozenset(expected))

    def expect(self, text: str) -> Tok:
        if not self.at(text):
            self.fail(f"expected {text!r}", {text})
        tok = self.peek()
        self.pos += 1
        return tok

    def expect_ident(self, what: str = "a name") -> Tok:
        tok = self.peek()
        if tok.kind != "IDENT" or tok.text in KEYWORDS or tok.text in BUILTINS or "." in tok.text:
            self.fail(f"expected {what}", {"IDENT"})
        self.pos += 1
        return tok

    def expect_int(self) -> int:
        tok = self.peek()
        if tok.kind != "NUMBER" or not _INT_TEXT.match(tok.text):
            self.fail("expected an integer", {"INT"})
        self.pos += 1
        return int(tok.text)

    def expect_signed(self, allow_inf: bool = False) -> float:
        negative = self.accept("-")
        tok = self.peek()
        if tok.kind == "NUMBER":
            value = float(tok.text)
        elif allow_inf and tok.kind == "IDENT" and tok.text == "inf":
            value = float("inf")
        else:
            self.fail("expected a number", {"NUMBER", "inf"} if allow_inf else {"NUMBER"})
        self.pos += 1
        return -value if negative else value

    def enter(self):
        self.depth += 1
        if self.depth > self.max_nesting:
            self.fail(f"nesting deeper than {self.max_nesting}")

    def leave(self):
        self.depth -= 1

    # scope helpers

    def scope(self, name: str | None, tok: Tok) -> _Scope:
        name = name if name is not None else self.active
        if name is None:
            raise DslNameError("no space defined yet", tok.line, tok.col, frozenset({"space"}))
        return self.scopes[name]

    def check_space(self, tok: Tok) -> str:
        if tok.text not in self.scopes:
            raise DslNameError(f"unknown space {tok.text!r}", tok.line, tok.col, frozenset(self.scopes))
        return tok.text

    def check_name(self, scope: _Scope, name: str, tok: Tok, generators_only: bool = False) -> None:
        if not scope.resolves(name, generators_only):
            pool = scope.generators if generators_only else scope.names()
            raise DslNameError(f"unknown identifier {name!r}", tok.line, tok.col, frozenset(pool))

    def check_fresh(self, scope: _Scope, tok: Tok) -> None:
        if tok.text in scope.names():
            raise DslNameError(f"{tok.text!r} is already defined", tok.line, tok.col)

    # program

    def parse_program(self) -> Program:
        statements = []
        while self.peek().kind != "EOF":
            statements.append(self.statement())
            self.expect(";")
        return Program(tuple(statements))

    def statement(self) -> Statement:
        tok = self.peek()
        span = Span(tok.line, tok.col)
        if tok.kind != "IDENT" or tok.text not in STATEMENT_HEADS:
            self.fail("expected a statement", STATEMENT_HEADS)
        self.pos += 1
        handler = getattr(self, f"stmt_{tok.text}")
        return handler(tok, span)

    # definitions

    def stmt_space(self, head: Tok, span: Span) -> SpaceDef:
        name = self.expect_ident("a space name")
        self.expect("=")
        if self.at("{"):
            points = self.point_set()
            first = points[0]
            dim = len(first.coords) if isinstance(first, VecLit) else None
            carrier, scope = FiniteSetExpr(points), _Scope("set", dim)
        elif self.accept("tilde"):
            self.expect("(")
            point = self.point()
            self.expect(")")
            carrier, scope = TildeExpr(point), _Scope("tilde", generators={"theta"})
        elif self.accept("R"):
            carrier, scope = self.real_space()
        else:
            self.fail("expected a carrier", {"R", "{", "tilde"})
        self.scopes[name.text] = scope
        self.active = name.text
        return SpaceDef(name.text, carrier, span)

    def real_space(self) -> tuple[RealSpace, _Scope]:
        self.expect("^")
        if self.accept("N"):
            dim = None
            scope = _Scope("seq")
        else:
            dim = self.expect_int()
            if dim < 1:
                self.fail("dimension must be positive")
            scope = _Scope("finite", dim)
        coords = _Scope(scope.kind, dim)
        constraints = []
        if self.accept("where"):
            while True:
                expr = self.expr(coords, coordinates_only=True)
                tok = self.peek()
                if tok.text not in RELATIONS:
                    self.fail("expected a relation", set(RELATIONS))
                self.pos += 1
                zero = self.peek()
                if zero.kind != "NUMBER" or float(zero.text) != 0.0:
                    self.fail("constraints compare against 0", {"0"})
                self.pos += 1
                if not refs_of(expr):
                    self.fail("a constraint must read a coordinate", tok=tok)
                constraints.append(ConstraintExpr(expr, tok.text))
                if not self.accept(","):
                    break
        excluded = ()
        if self.accept("minus"):
            excluded = self.point_set()
            if dim is None and any(isinstance(p, ZeroLit) or (isinstance(p, SeqLit) and not p.pairs) for p in excluded):
                scope.elements.add("xi")
        chart = None
        if self.accept("chart"):
            param = self.expect_ident("a chart parameter")
            self.expect("in")
            self.expect("[")
            lo = self.expect_signed()
            self.expect(",")
            hi = self.expect_signed()
            self.expect("]")
            if not lo < hi:
                self.fail("empty parameter interval")
            self.expect("->")
            self.expect("(")
            chart_scope = _Scope("chart", generators={param.text})
            exprs = [self.expr(chart_scope)]
            while self.accept(","):
                exprs.append(self.expr(chart_scope))
            self.expect(")")
            if dim is None or len(exprs) != dim:
                self.fail(f"chart must give {dim} coordinates")
            chart = ChartExpr(param.text, lo, hi, tuple(exprs))
        return RealSpace(dim, tuple(constraints), excluded, chart), scope

    def stmt_union(self, head: Tok, span: Span) -> UnionDef:
        name = self.expect_ident("a space name")
        self.expect("=")
        left = self.check_space(self.expect_ident("a space name"))
        self.expect("+")
        right = self.check_space(self.expect_ident("a space name"))
        sides = (self.scopes[left], self.scopes[right])
        self.scopes[name.text] = _Scope("union", generators={"e_left", "e_right"}, sides=sides)
        self.active = name.text
        return UnionDef(name.text, left, right, span)

    def stmt_gen(self, head: Tok, span: Span) -> GenDef:
        scope = self.scope(None, head)
        if scope.kind == "union":
            self.fail("generators of a union come from its sides", tok=head)
        items = []
        while True:
            name = self.expect_ident("a generator name")
            self.check_fresh(scope, name)
            self.expect("=")
            expr = self.expr(scope, coordinates_only=True)
            if not refs_of(expr):
                self.fail("a generator must read a coordinate", tok=name)
            items.append((name.text, expr))
            scope.generators.add(name.text)
            if not self.accept(","):
                break
        return GenDef(tuple(items), span)

    def stmt_fn(self, head: Tok, span: Span) -> FnDef:
        name = self.expect_ident("an element name")
        scope = self.scope(None, head)
        self.check_fresh(scope, name)
        self.expect("=")
        expr = self.expr(scope)
        scope.elements.add(name.text)
        return FnDef(name.text, expr, span)

    def stmt_pair(self, head: Tok, span: Span) -> PairDef:
        name = self.expect_ident("an element name")
        scope = self.scope(None, head)
        if scope.sides is None:
            self.fail("pairs are defined on a union space", tok=head)
        self.check_fresh(scope, name)
        self.expect("=")
        self.expect("(")
        left_tok, left = self.ref_name()
        self.check_name(scope.sides[0], left, left_tok)
        self.expect(",")
        right_tok, right = self.ref_name()
        self.check_name(scope.sides[1], right, right_tok)
        self.expect(")")
        scope.elements.add(name.text)
        return PairDef(name.text, left, right, span)

    def stmt_atlas(self, head: Tok, span: Span) -> AtlasDef:
        name = self.expect_ident("an element name")
        scope = self.scope(None, head)
        self.check_fresh(scope, name)
        self.expect("=")
        pieces = []
        while True:
            self.expect("when")
            bounds = []
            while True:
                tok, ref = self.ref_name()
                self.check_name(scope, ref, tok)
                self.expect("in")
                self.expect("(")
                lo = self.expect_signed(allow_inf=True)
                self.expect(",")
                hi = self.expect_signed(allow_inf=True)
                self.expect(")")
                if not lo < hi:
                    self.fail("empty interval", tok=tok)
                bounds.append((ref, lo, hi))
                if not self.accept(","):
                    break
            self.expect("=>")
            pieces.append((tuple(bounds), self.expr(scope)))
            if not self.accept("|"):
                break
        scope.elements.add(name.text)
        return AtlasDef(name.text, tuple(pieces), span)

    def stmt_assign(self, head: Tok, span: Span) -> AssignDef:
        name = self.expect_ident("an assignment name")
        self.expect("=")
        lit = self.assign_lit()
        self.assignments[name.text] = lit
        return AssignDef(name.text, lit, span)

    def stmt_sample(self, head: Tok, span: Span) -> SampleStmt:
        self.scope(None, head)
        points = [self.point()]
        while self.accept(","):
            points.append(self.point())
        return SampleStmt(tuple(points), span)

    def stmt_use(self, head: Tok, span: Span) -> UseStmt:
        name = self.check_space(self.expect_ident("a space name"))
        self.active = name
        return UseStmt(name, span)

    # commands

    def in_space(self) -> str | None:
        if self.accept("in"):
            return self.check_space(self.expect_ident("a space name"))
        return None

    def stmt_eval(self, head: Tok, span: Span):
        target_tok, target = self.ref_name()
        if self.accept("at"):
            point = self.point()
            space = self.in_space()
            self.check_name(self.scope(space, head), target, target_tok)
            return EvalAt(target, point, space, span)
        if self.accept("under"):
            a, a_tok = self.assign_ref()
            space = self.in_space()
            scope = self.scope(space, head)
            self.check_name(scope, target, target_tok)
            self.check_assignment(scope, a, a_tok)
            return EvalUnder(target, a, space, span)
        self.fail("expected 'at' or 'under'", {"at", "under"})

    def stmt_classify(self, head: Tok, span: Span) -> ClassifyCmd:
        a, a_tok = self.assign_ref()
        space = self.in_space()
        self.check_assignment(self.scope(space, head), a, a_tok)
        return ClassifyCmd(a, space, span)

    def stmt_xi(self, head: Tok, span: Span) -> XiCmd:
        self.expect("at")
        return XiCmd(self.point(), span)

    def stmt_probe(self, head: Tok, span: Span) -> ProbeCmd:
        target_tok, target = self.ref_name()
        self.expect("toward")
        point = self.point()
        space = self.in_space()
        self.check_name(self.scope(space, head), target, target_tok)
        return ProbeCmd(target, point, space, span)

    def stmt_tilde(self, head: Tok, span: Span) -> TildeCmd:
        point = self.point()
        witnesses = []
        if self.accept("with"):
            witnesses.append(self.ref_name())
            while self.accept(","):
                witnesses.append(self.ref_name())
        space = self.in_space()
        scope = self.scope(space, head)
        for tok, w in witnesses:
            self.check_name(scope, w, tok)
        return TildeCmd(point, tuple(w for _, w in witnesses), space, span)

    def stmt_spec(self, head: Tok, span: Span) -> SpecCmd:
        candidates = []
        if self.accept("with"):
            candidates.append(self.assign_ref())
            while self.accept(","):
                candidates.append(self.assign_ref())
        space = self.in_space()
        scope = self.scope(space, head)
        for a, tok in candidates:
            self.check_assignment(scope, a, tok)
        return SpecCmd(tuple(a for a, _ in candidates), space, span)

    def stmt_density(self, head: Tok, span: Span) -> DensityCmd:
        a, a_tok = self.assign_ref()
        self.expect("tol")
        tol_tok = self.peek()
        tol = self.expect_signed()
        if not tol > 0.0:
            self.fail("tolerance must be positive", tok=tol_tok)
        self.expect("family")
        family = [self.ref_name()]
        while self.accept(","):
            family.append(self.ref_name())
        space = self.in_space()
        scope = self.scope(space, head)
        self.check_assignment(scope, a, a_tok)
        for tok, f in family:
            self.check_name(scope, f, tok)
        return DensityCmd(a, tol, tuple(f for _, f in family), space, span)

    # assignments

    def assign_lit(self) -> AssignLit:
        self.expect("{")
        values = []
        if not self.at("}"):
            while True:
                tok, key = self.ref_name()
                self.expect(":")
                values.append((key, self.expect_signed()))
                if not self.accept(","):
                    break
        self.expect("}")
        default = None
        if self.accept("default"):
            default = self.expect_signed()
        return AssignLit(tuple(values), default)

    def assign_ref(self) -> tuple[TypingUnion[str, AssignLit], Tok]:
        tok = self.peek()
        if self.at("{"):
            return self.assign_lit(), tok
        name = self.expect_ident("an assignment")
        if name.text not in self.assignments:
            raise DslNameError(f"unknown assignment {name.text!r}", name.line, name.col, frozenset(self.assignments))
        return name.text, tok

    def check_assignment(self, scope: _Scope, a, tok: Tok) -> None:
        lit = self.assignments[a] if isinstance(a, str) else a
        for key, _ in lit.values:
            self.check_name(scope, key, tok, generators_only=True)

    # names, points, expressions

    def ref_name(self) -> tuple[Tok, str]:
        tok = self.peek()
        if tok.kind != "IDENT":
            self.fail("expected a name", {"IDENT"})
        if tok.text in ("pi", "rho"):
            self.pos += 1
            self.expect("(")
            k = self.expect_int()
            self.expect(")")
            return tok, f"{tok.text}({k})"
        if tok.text in KEYWORDS and tok.text != "xi" or tok.text in BUILTINS:
            self.fail("expected a name", {"IDENT"})
        self.pos += 1
        return tok, tok.text

    def point_set(self) -> tuple[PointLit, ...]:
        self.expect("{")
        points = [self.point()]
        while self.accept(","):
            points.append(self.point())
        self.expect("}")
        return tuple(points)

    def point(self) -> PointLit:
        self.enter()
        try:
            if self.accept("left"):
                return TaggedLit("left", self.point())
            if self.accept("right"):
                return TaggedLit("right", self.point())
            if self.accept("("):
                coords = [self.expect_signed()]
                while self.accept(","):
                    coords.append(self.expect_signed())
                self.expect(")")
                return VecLit(tuple(coords))
            if self.accept("seq"):
                self.expect("{")
                pairs = []
                if not self.at("}"):
                    while True:
                        i = self.expect_int()
                        if i < 1:
                            self.fail("sequence indices start at 1")
                        self.expect(":")
                        pairs.append((i, self.expect_signed()))
                        if not self.accept(","):
                            break
                self.expect("}")
                return SeqLit(tuple(pairs))
            if self.accept("z"):
                self.expect("(")
                k = self.expect_int()
                self.expect(")")
                if k < 1:
                    self.fail("z(k) needs k >= 1")
                return ZLit(k)
            tok = self.peek()
            if tok.kind == "NUMBER" and _INT_TEXT.match(tok.text) and int(tok.text) == 0:
                self.pos += 1
                return ZeroLit()
            self.fail("expected a point", {"(", "seq", "z", "0", "left", "right"})
        finally:
            self.leave()

    def expr(self, scope: _Scope, coordinates_only: bool = False) -> Expr:
        self.enter()
        try:
            left = self.term(scope, coordinates_only)
            while self.at("+") or self.at("-"):
                op = self.peek().text
                self.pos += 1
                left = Bin(op, left, self.term(scope, coordinates_only))
            return left
        finally:
            self.leave()

    def term(self, scope: _Scope, coordinates_only: bool) -> Expr:
        left = self.unary(scope, coordinates_only)
        while self.at("*") or self.at("/"):
            op = self.peek().text
            self.pos += 1
            left = Bin(op, left, self.unary(scope, coordinates_only))
        return left

    def unary(self, scope: _Scope, coordinates_only: bool) -> Expr:
        if self.accept("-"):
            self.enter()
            try:
                return NegE(self.unary(scope, coordinates_only))
            finally:
                self.leave()
        base = self.atom(scope, coordinates_only)
        if self.accept("^"):
            negative = self.accept("-")
            n = self.expect_int()
            return PowE(base, -n if negative else n)
        return base

    def atom(self, scope: _Scope, coordinates_only: bool) -> Expr:
        tok = self.peek()
        if tok.kind == "NUMBER":
            self.pos += 1
            return Num(float(tok.text))
        if self.accept("("):
            inner = self.expr(scope, coordinates_only)
            self.expect(")")
            return inner
        if tok.kind != "IDENT":
            self.fail("expected an expression", {"NUMBER", "IDENT", "("})
        if tok.text in UNARY_BUILTINS:
            self.pos += 1
            args = self.call_args(scope, coordinates_only)
            if len(args) != 1:
                self.fail(f"{tok.text} takes 1 argument, got {len(args)}", tok=tok)
            return Call(tok.text, tuple(args))
        if tok.text in ("dist2", "bump"):
            self.pos += 1
            if scope.kind != "finite" and not (scope.kind == "set" and scope.dim):
                raise DslNameError(f"{tok.text} needs a finite-dimensional space", tok.line, tok.col)
            self.expect("(")
            point = self.point()
            if not isinstance(point, (VecLit, ZeroLit)):
                self.fail(f"{tok.text} takes a vector point", tok=tok)
            args: tuple = (point,)
            if tok.text == "bump":
                self.expect(",")
                r = self.expect_signed()
                if not r > 0.0:
                    self.fail("bump radius must be positive", tok=tok)
                args = (point, Num(r))
            self.expect(")")
            return Call(tok.text, args)
        name_tok, name = self.ref_name()
        if coordinates_only and not name.startswith("pi("):
            raise DslNameError(f"only coordinates pi(i) may appear here, got {name!r}", name_tok.line, name_tok.col,
                               frozenset({"pi"}))
        self.check_name(scope, name, name_tok)
        return Ref(name)

    def call_args(self, scope: _Scope, coordinates_only: bool) -> list[Expr]:
        self.expect("(")
        args = [self.expr(scope, coordinates_only)]
        while self.accept(","):
            args.append(self.expr(scope, coordinates_only))
        self.expect(")")
        return args


def parse_program(text: str, max_nesting: int | None = None) -> Program:
    return Parser(text, max_nesting).parse_program()


def refs_of(expr: Expr) -> list[str]:
    # distinct references in first-appearance order
    seen: list[str] = []

    def visit(e):
        match e:
            case Ref(name):
                if name not in seen:
                    seen.append(name)
            case NegE(a):
                visit(a)
            case Bin(_, l, r):
                visit(l)
                visit(r)
            case PowE(b, _):
                visit(b)
            case Call(_, args):
                for a in args:
                    visit(a)

    visit(expr)
    return seen


# ------------------------------------------------------------------- printing

def _num(v: float) -> str:
    # 1e309 reads back as inf wherever a number is accepted
    if v == float("inf"):
        return "1e309"
    if v == float("-inf"):
        return "-1e309"
    return repr(float(v))


def expr_text(e) -> str:
    match e:
        case Num(v):
            return _num(v)
        case Ref(name):
            return name
        case NegE(a):
            return f"(-{expr_text(a)})"
        case Bin(op, l, r):
            return f"({expr_text(l)} {op} {expr_text(r)})"
        case PowE(b, n):
            base = expr_text(b)
            if isinstance(b, PowE):
                base = f"({base})"
            return f"{base}^{n}"
        case Call(fn, args):
            return f"{fn}(" + ", ".join(point_lit_text(a) if not isinstance(a, (Num, Ref, NegE, Bin, PowE, Call)) else expr_text(a) for a in args) + ")"
    raise TypeError(f"not an expression: {e!r}")


def point_lit_text(p) -> str:
    match p:
        case VecLit(coords):
            return "(" + ", ".join(_num(c) for c in coords) + ")"
        case SeqLit(pairs):
            return "seq{" + ", ".join(f"{i}: {_num(v)}" for i, v in pairs) + "}"
        case ZLit(k):
            return f"z({k})"
        case ZeroLit():
            return "0"
        case TaggedLit(side, inner):
            return f"{side} {point_lit_text(inner)}"
    raise TypeError(f"not a point: {p!r}")


def _assign_text(a) -> str:
    if isinstance(a, str):
        return a
    body = "{" + ", ".join(f"{k}: {_num(v)}" for k, v in a.values) + "}"
    return body + (f" default {_num(a.default)}" if a.default is not None else "")


def _in(space: str | None) -> str:
    return f" in {space}" if space else ""


def _carrier_text(c) -> str:
    match c:
        case FiniteSetExpr(points):
            return "{" + ", ".join(point_lit_text(p) for p in points) + "}"
        case TildeExpr(point):
            return f"tilde({point_lit_text(point)})"
        case RealSpace(dim, constraints, excluded, chart):
            text = "R^" + ("N" if dim is None else str(dim))
            if constraints:
                text += " where " + ", ".join(f"{expr_text(k.expr)} {k.relation} 0" for k in constraints)
            if excluded:
                text += " minus {" + ", ".join(point_lit_text(p) for p in excluded) + "}"
            if chart is not None:
                text += (f" chart {chart.param} in [{_num(chart.lo)}, {_num(chart.hi)}] -> ("
                         + ", ".join(expr_text(e) for e in chart.coords) + ")")
            return text
    raise TypeError(f"not a carrier: {c!r}")


def statement_text(s: Statement) -> str:
    match s:
        case SpaceDef(name, carrier):
            return f"space {name} = {_carrier_text(carrier)}"
        case UnionDef(name, left, right):
            return f"union {name} = {left} + {right}"
        case GenDef(items):
            return "gen " + ", ".join(f"{n} = {expr_text(e)}" for n, e in items)
        case FnDef(name, expr):
            return f"fn {name} = {expr_text(expr)}"
        case PairDef(name, left, right):
            return f"pair {name} = ({left}, {right})"
        case AtlasDef(name, pieces):
            parts = []
            for bounds, expr in pieces:
                b = ", ".join(f"{ref} in ({_num(lo)}, {_num(hi)})" for ref, lo, hi in bounds)
                parts.append(f"when {b} => {expr_text(expr)}")
            return f"atlas {name} = " + " | ".join(parts)
        case AssignDef(name, a):
            return f"assign {name} = {_assign_text(a)}"
        case SampleStmt(points):
            return "sample " + ", ".join(point_lit_text(p) for p in points)
        case UseStmt(name):
            return f"use {name}"
        case EvalAt(target, point, space):
            return f"eval {target} at {point_lit_text(point)}{_in(space)}"
        case EvalUnder(target, a, space):
            return f"eval {target} under {_assign_text(a)}{_in(space)}"
        case ClassifyCmd(a, space):
            return f"classify {_assign_text(a)}{_in(space)}"
        case XiCmd(point):
            return f"xi at {point_lit_text(point)}"
        case ProbeCmd(target, point, space):
            return f"probe {target} toward {point_lit_text(point)}{_in(space)}"
        case TildeCmd(point, witnesses, space):
            w = (" with " + ", ".join(witnesses)) if witnesses else ""
            return f"tilde {point_lit_text(point)}{w}{_in(space)}"
        case SpecCmd(candidates, space):
            w = (" with " + ", ".join(_assign_text(a) for a in candidates)) if candidates else ""
            return f"spec{w}{_in(space)}"
        case DensityCmd(a, tol, family, space):
            return f"density {_assign_text(a)} tol {_num(tol)} family {', '.join(family)}{_in(space)}"
    raise TypeError(f"not a statement: {s!r}")


def format_program(program: Program) -> str:
    return "".join(statement_text(s) + ";\n" for s in program.statements)


def statement_keyword(s: Statement) -> str:
    return {
        SpaceDef: "space", UnionDef: "union", GenDef: "gen", FnDef: "fn", PairDef: "pair",
        AtlasDef: "atlas", AssignDef: "assign", SampleStmt: "sample", UseStmt: "use",
        EvalAt: "eval", EvalUnder: "eval", ClassifyCmd: "classify", XiCmd: "xi",
        ProbeCmd: "probe", TildeCmd: "tilde", SpecCmd: "spec", DensityCmd: "density",
    }[type(s)]

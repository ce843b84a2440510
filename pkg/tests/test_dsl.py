from pathlib import Path

import numpy as np
import pytest

from dsl import (
    Bin,
    ClassifyCmd,
    EvalAt,
    FnDef,
    GenDef,
    Num,
    PowE,
    Ref,
    SpaceDef,
    VecLit,
    format_program,
    lex,
    parse_program,
    refs_of,
    statement_keyword,
)
from errors import DslError, DslNameError, DslSyntaxError

SCRIPTS = sorted(Path(__file__).parent.parent.joinpath("scripts").glob("*.ds"))

SMOKE = """
space M = R^2 minus {(0,0)};
gen x = pi(1), y = pi(2);
fn f = exp(x) * y;
eval f at (2, 3);
"""


def test_parse_smoke_program():
    program = parse_program(SMOKE)
    assert [statement_keyword(s) for s in program.statements] == ["space", "gen", "fn", "eval"]
    space, gen, fn, ev = program.statements
    assert isinstance(space, SpaceDef) and space.carrier.dim == 2
    assert space.carrier.excluded == (VecLit((0.0, 0.0)),)
    assert isinstance(gen, GenDef) and [n for n, _ in gen.items] == ["x", "y"]
    assert isinstance(fn, FnDef) and refs_of(fn.expr) == ["x", "y"]
    assert isinstance(ev, EvalAt) and ev.target == "f" and ev.point == VecLit((2.0, 3.0))
    assert ev.span.line == 5 and ev.span.col == 1


def test_precedence():
    program = parse_program("space M = R^2; fn f = 1 + 2 * pi(1)^2;")
    expr = program.statements[1].expr
    assert expr == Bin("+", Num(1.0), Bin("*", Num(2.0), PowE(Ref("pi(1)"), 2)))


def test_lexer_positions():
    toks = lex("fn f =\n  x^2;")
    assert [(t.text, t.line, t.col) for t in toks[3:6]] == [("x", 2, 3), ("^", 2, 4), ("2", 2, 5)]
    assert toks[-1].kind == "EOF"


def test_missing_name_reports_its_column():
    with pytest.raises(DslSyntaxError) as info:
        parse_program("space M = R^2;\nfn = ;")
    assert (info.value.line, info.value.col) == (2, 4)
    assert "IDENT" in info.value.expected


def test_unexpected_character():
    with pytest.raises(DslSyntaxError) as info:
        parse_program("space M = R^2 @")
    assert info.value.col == 15


def test_missing_semicolon_lists_what_was_expected():
    with pytest.raises(DslSyntaxError) as info:
        parse_program("space M = R^2\nfn f = pi(1);")
    assert info.value.line == 2
    assert ";" in info.value.expected


@pytest.mark.parametrize("source,col", [
    ("space M = R^2; fn f = q + 1;", 23),
    ("space M = R^2; fn f = pi(3);", 23),
    ("space M = R^N; fn f = xi;", 23),
    ("fn f = 1;", 1),
    ("space A = R^2; gen x = pi(1); space B = R^2; fn f = x;", 53),
    ("space M = R^2; gen x = pi(1); classify {w: 1};", 40),
    ("space M = R^2; eval pi(1) at (1, 2) in Q;", 40),
])
def test_name_errors(source, col):
    with pytest.raises(DslNameError) as info:
        parse_program(source)
    assert info.value.col == col


@pytest.mark.parametrize("source", [
    "space at = R^2;",
    "space M = R^0;",
    "space M = R^2 where pi(1) = 1;",
    "space M = R^2; gen x = 3;",
    "space M = R^2; fn f = pi(1); fn f = pi(2);",
    "space M = R^2; fn f = pi(1)^0.5;",
    "space M = R^2; atlas h = when pi(1) in (1, 0) => 1;",
    "space M = R^1 chart t in [0, 1] -> (t, t);",
    "space M = R^2; density {} tol 0 family pi(1);",
    "xi at z(0);",
])
def test_rejected_programs(source):
    with pytest.raises(DslError):
        parse_program(source)


def test_union_names():
    program = parse_program(
        "space A = R^1; gen s = pi(1); space B = {(1), (2)}; union U = A + B;"
        "pair q = (s, pi(1)); classify {e_left: 1, e_right: 0, left.s: 2};")
    assert isinstance(program.statements[-1], ClassifyCmd)
    with pytest.raises(DslNameError):
        parse_program("space A = R^1; gen s = pi(1); space B = R^1; union U = A + B; classify {left.q: 1};")


def test_nesting_limit():
    deep = "space M = R^1; fn f = " + "(" * 200 + "pi(1)" + ")" * 200 + ";"
    with pytest.raises(DslSyntaxError) as info:
        parse_program(deep)
    assert "nesting" in info.value.message
    shallow = "space M = R^1; fn f = " + "(" * 50 + "pi(1)" + ")" * 50 + ";"
    assert parse_program(shallow).statements[1].expr == Ref("pi(1)")
    wide = "space M = R^1; fn f = " + "(" * 150 + "pi(1)" + ")" * 150 + ";"
    assert len(parse_program(wide, max_nesting=300).statements) == 2
    with pytest.raises(DslSyntaxError):
        parse_program("space M = R^1; fn f = " + "-" * 150 + "pi(1);")


@pytest.mark.parametrize("path", SCRIPTS, ids=lambda p: p.name)
def test_format_round_trip(path):
    program = parse_program(path.read_text())
    text = format_program(program)
    assert parse_program(text) == program
    assert format_program(parse_program(text)) == text


def test_infinite_bounds_round_trip():
    program = parse_program("space S = R^N; atlas h = when rho(1) in (-inf, inf) => 1;")
    assert "(-1e309, 1e309)" in format_program(program)
    assert parse_program(format_program(program)) == program


VOCABULARY = [
    "space", "gen", "fn", "eval", "classify", "xi", "probe", "tilde", "spec", "density", "union", "pair",
    "atlas", "assign", "use", "sample", "at", "under", "in", "with", "toward", "where", "minus", "chart",
    "when", "default", "left", "right", "seq", "z", "inf", "tol", "family", "R", "N", "pi", "rho", "exp",
    "dist2", "bump", "M", "x", "y", "f", "0", "1", "2.5", "1e3", "(", ")", "{", "}", "[", "]", ",", ";",
    ":", "=", ">", "!=", "^", "+", "-", "*", "/", "|", "->", "=>", "\n",
]


def _parses_or_reports(text: str) -> None:
    try:
        parse_program(text)
    except DslError as e:
        assert e.line >= 1 and e.col >= 1


def test_fuzz_only_raises_dsl_errors():
    rng = np.random.default_rng(2024)
    for _ in range(50_000):
        raw = rng.integers(0, 256, size=int(rng.integers(0, 40)), dtype=np.uint8).tobytes()
        _parses_or_reports(raw.decode("latin-1"))
    for _ in range(50_000):
        words = rng.choice(VOCABULARY, size=int(rng.integers(1, 30)))
        _parses_or_reports(" ".join(words))
    prefix = "space M = R^2; gen x = pi(1), y = pi(2); "
    for _ in range(2_000):
        words = rng.choice(VOCABULARY, size=int(rng.integers(1, 20)))
        _parses_or_reports(prefix + " ".join(words))

"""Smooth maps R^n -> R as immutable expression trees.

Leaves are argument slots and real constants. Evaluation, exact structural
first derivatives, composition, and the special functions used by the
sequence-space and obstruction constructions (cutoff, bump, squared distance,
Hadamard factors) all live here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np
import sympy as sp
from loguru import logger

from errors import ArityMismatch, GuardViolation

# exp(-u) underflows to exactly 0.0 beyond this
_UNDERFLOW = 745.0
QUADRATURE_ORDER = 32


class Node:
    # Operator sugar shared by every expression node.

    def __add__(self, other): return Add((self, as_node(other)))
    def __radd__(self, other): return Add((as_node(other), self))
    def __sub__(self, other): return Add((self, Neg(as_node(other))))
    def __rsub__(self, other): return Add((as_node(other), Neg(self)))
    def __mul__(self, other): return Mul((self, as_node(other)))
    def __rmul__(self, other): return Mul((as_node(other), self))
    def __truediv__(self, other): return Mul((self, Recip(as_node(other))))
    def __rtruediv__(self, other): return Mul((as_node(other), Recip(self)))
    def __neg__(self): return Neg(self)

    def __pow__(self, n: int):
        if not isinstance(n, int):
            raise TypeError("only integer powers are supported")
        if n < 0:
            return Recip(Pow(self, -n))
        return Pow(self, n)


@dataclass(frozen=True)
class Const(Node):
    value: float


@dataclass(frozen=True)
class Slot(Node):
    index: int


@dataclass(frozen=True)
class Add(Node):
    terms: tuple[Node, ...]


@dataclass(frozen=True)
class Mul(Node):
    factors: tuple[Node, ...]


@dataclass(frozen=True)
class Neg(Node):
    arg: Node


@dataclass(frozen=True)
class Recip(Node):
    # guard: "nonzero" or "positive", the declared domain of the denominator
    arg: Node
    guard: str = "nonzero"


@dataclass(frozen=True)
class Pow(Node):
    arg: Node
    exponent: int


@dataclass(frozen=True)
class Exp(Node):
    arg: Node


@dataclass(frozen=True)
class Sin(Node):
    arg: Node


@dataclass(frozen=True)
class Cos(Node):
    arg: Node


@dataclass(frozen=True)
class Cutoff(Node):
    # phi(t): 1 on (-inf, 1/2], 0 on [1, inf), smooth and monotone in between
    arg: Node


@dataclass(frozen=True)
class Bump(Node):
    # psi(s) = exp(1 - 1/(1-s)) for s < 1, else 0; psi(0) = 1
    arg: Node


@dataclass(frozen=True)
class Flat(Node):
    # order-th derivative of h(t) = exp(-1/t) for t > 0, else 0
    arg: Node
    order: int = 0


@dataclass(frozen=True)
class Compose(Node):
    outer: "SmoothMap"
    inners: tuple[Node, ...]


@dataclass(frozen=True)
class Quadrature(Node):
    # x -> integral over t in [0,1] of t**power * integrand(base + t*(x - base))
    integrand: Node
    base: tuple[float, ...]
    power: int = 0


@dataclass(frozen=True)
class SmoothMap:
    arity: int
    body: Node

    def __post_init__(self):
        if self.arity < 1:
            raise ArityMismatch(f"arity must be positive, got {self.arity}")
        top = max_slot(self.body)
        if top >= self.arity:
            raise ArityMismatch(f"slot {top} out of range for arity {self.arity}")

    def __call__(self, *args: float) -> float:
        return eval_map(self, args)


def as_node(x) -> Node:
    if isinstance(x, Node):
        return x
    return Const(float(x))


def children(node: Node) -> tuple[Node, ...]:
    match node:
        case Add(terms):
            return terms
        case Mul(factors):
            return factors
        case Neg(a) | Recip(a, _) | Pow(a, _) | Exp(a) | Sin(a) | Cos(a) | Cutoff(a) | Bump(a) | Flat(a, _):
            return (a,)
        case Compose(_, inners):
            return inners
    return ()


def walk(node: Node) -> Iterator[Node]:
    stack = [node]
    while stack:
        n = stack.pop()
        yield n
        stack.extend(children(n))


def max_slot(node: Node) -> int:
    # Highest argument slot the node reads in its own argument space, -1 if none.
    top = -1
    for n in walk(node):
        if isinstance(n, Slot):
            top = max(top, n.index)
        elif isinstance(n, Quadrature):
            top = max(top, len(n.base) - 1)
    return top


# ---------------------------------------------------------------- evaluation

@lru_cache(maxsize=None)
def _flat_poly(order: int) -> np.polynomial.Polynomial:
    # h^(k)(t) = h(t) * P_k(1/t) with P_0 = 1 and P_{k+1}(u) = u^2 (P_k(u) - P_k'(u))
    poly = np.polynomial.Polynomial([1.0])
    u2 = np.polynomial.Polynomial([0.0, 0.0, 1.0])
    for _ in range(order):
        poly = u2 * (poly - poly.deriv())
    return poly


def flat_value(t: float, order: int = 0) -> float:
    if t <= 0.0:
        return 0.0
    u = 1.0 / t
    if u > _UNDERFLOW:
        return 0.0
    h = math.exp(-u)
    if order == 0:
        return h
    return h * float(_flat_poly(order)(u))


def cutoff_value(t: float) -> float:
    if t <= 0.5:
        return 1.0
    if t >= 1.0:
        return 0.0
    a = flat_value(1.0 - t)
    b = flat_value(t - 0.5)
    return a / (a + b)


def cutoff_array(t: np.ndarray) -> np.ndarray:
    # Vectorised phi for long runs of terms; may differ from cutoff_value in the last ulp.
    t = np.asarray(t, dtype=float)
    out = np.where(t <= 0.5, 1.0, 0.0)
    mid = (t > 0.5) & (t < 1.0)
    if np.any(mid):
        tm = t[mid]
        with np.errstate(over="ignore", under="ignore", divide="ignore"):
            a = np.exp(-1.0 / (1.0 - tm))
            b = np.exp(-1.0 / (tm - 0.5))
        out[mid] = a / (a + b)
    return out


def bump_value(s: float) -> float:
    if s >= 1.0:
        return 0.0
    u = 1.0 / (1.0 - s)
    if u - 1.0 > _UNDERFLOW:
        return 0.0
    return math.exp(1.0 - u)


@lru_cache(maxsize=None)
def _gauss_legendre() -> tuple[tuple[float, ...], tuple[float, ...]]:
    nodes, weights = np.polynomial.legendre.leggauss(QUADRATURE_ORDER)
    ts = tuple(float(v) for v in (nodes + 1.0) / 2.0)
    ws = tuple(float(v) for v in weights / 2.0)
    return ts, ws


def _value(node: Node, args: Sequence[float]) -> float:
    match node:
        case Const(v):
            return v
        case Slot(i):
            return args[i]
        case Add(terms):
            total = 0.0
            for t in terms:
                total += _value(t, args)
            return total
        case Mul(factors):
            prod = 1.0
            for f in factors:
                prod *= _value(f, args)
            return prod
        case Neg(a):
            return -_value(a, args)
        case Recip(a, guard):
            d = _value(a, args)
            if guard == "positive" and not d > 0.0:
                raise GuardViolation(f"reciprocal requires a positive denominator, got {d!r}")
            if d == 0.0 or math.isnan(d):
                raise GuardViolation(f"reciprocal of {d!r}")
            return 1.0 / d
        case Pow(a, n):
            try:
                return _value(a, args) ** n
            except OverflowError:
                raise GuardViolation(f"power {n} overflows") from None
        case Exp(a):
            try:
                return math.exp(_value(a, args))
            except OverflowError:
                raise GuardViolation("exp overflow") from None
        case Sin(a) | Cos(a):
            x = _value(a, args)
            if math.isinf(x):
                raise GuardViolation(f"{type(node).__name__.lower()} of {x!r}")
            return math.sin(x) if isinstance(node, Sin) else math.cos(x)
        case Cutoff(a):
            return cutoff_value(_value(a, args))
        case Bump(a):
            return bump_value(_value(a, args))
        case Flat(a, order):
            return flat_value(_value(a, args), order)
        case Compose(outer, inners):
            return _value(outer.body, [_value(i, args) for i in inners])
        case Quadrature(integrand, base, power):
            ts, ws = _gauss_legendre()
            total = 0.0
            for t, w in zip(ts, ws):
                point = [b + t * (x - b) for b, x in zip(base, args)]
                total += w * (t ** power) * _value(integrand, point)
            return total
    raise TypeError(f"unknown node {type(node).__name__}")


def eval_map(fn: SmoothMap, args: Sequence[float]) -> float:
    if len(args) != fn.arity:
        raise ArityMismatch(f"map of arity {fn.arity} applied to {len(args)} arguments")
    return _value(fn.body, [float(a) for a in args])


# ------------------------------------------------------------ differentiation

def _add(*terms: Node) -> Node:
    kept = tuple(t for t in terms if not (isinstance(t, Const) and t.value == 0.0))
    if not kept:
        return Const(0.0)
    if len(kept) == 1:
        return kept[0]
    return Add(kept)


def _mul(*factors: Node) -> Node:
    if any(isinstance(f, Const) and f.value == 0.0 for f in factors):
        return Const(0.0)
    kept = tuple(f for f in factors if not (isinstance(f, Const) and f.value == 1.0))
    if not kept:
        return Const(1.0)
    if len(kept) == 1:
        return kept[0]
    return Mul(kept)


def _cutoff_slope(t: Node) -> Node:
    # phi' = -(h'(1-t) h(t-1/2) + h(1-t) h'(t-1/2)) / (h(1-t) + h(t-1/2))^2
    left = Add((Const(1.0), Neg(t)))
    right = Add((t, Const(-0.5)))
    denom = Add((Flat(left, 0), Flat(right, 0)))
    numer = Add((Mul((Flat(left, 1), Flat(right, 0))), Mul((Flat(left, 0), Flat(right, 1)))))
    return Neg(Mul((numer, Pow(Recip(denom, "positive"), 2))))


def derivative_node(node: Node, i: int) -> Node:
    match node:
        case Const(_):
            return Const(0.0)
        case Slot(j):
            return Const(1.0) if j == i else Const(0.0)
        case Add(terms):
            return _add(*(derivative_node(t, i) for t in terms))
        case Mul(factors):
            parts = []
            for k, f in enumerate(factors):
                df = derivative_node(f, i)
                parts.append(_mul(*factors[:k], df, *factors[k + 1:]))
            return _add(*parts)
        case Neg(a):
            da = derivative_node(a, i)
            return Const(0.0) if isinstance(da, Const) and da.value == 0.0 else Neg(da)
        case Recip(a, guard):
            da = derivative_node(a, i)
            return _mul(Const(-1.0), da, Pow(Recip(a, guard), 2))
        case Pow(a, n):
            if n == 0:
                return Const(0.0)
            if n == 1:
                return derivative_node(a, i)
            return _mul(Const(float(n)), Pow(a, n - 1), derivative_node(a, i))
        case Exp(a):
            return _mul(node, derivative_node(a, i))
        case Sin(a):
            return _mul(Cos(a), derivative_node(a, i))
        case Cos(a):
            return _mul(Neg(Sin(a)), derivative_node(a, i))
        case Cutoff(a):
            return _mul(_cutoff_slope(a), derivative_node(a, i))
        case Bump(a):
            # psi(s) = e * h(1 - s)
            return _mul(Const(-math.e), Flat(Add((Const(1.0), Neg(a))), 1), derivative_node(a, i))
        case Flat(a, order):
            return _mul(Flat(a, order + 1), derivative_node(a, i))
        case Compose(outer, inners):
            parts = []
            for j, inner in enumerate(inners):
                d_inner = derivative_node(inner, i)
                if isinstance(d_inner, Const) and d_inner.value == 0.0:
                    continue
                d_outer = SmoothMap(outer.arity, derivative_node(outer.body, j))
                parts.append(_mul(Compose(d_outer, inners), d_inner))
            return _add(*parts)
        case Quadrature(integrand, base, power):
            return Quadrature(derivative_node(integrand, i), base, power + 1)
    raise TypeError(f"unknown node {type(node).__name__}")


@lru_cache(maxsize=4096)
def derivative(fn: SmoothMap, i: int) -> SmoothMap:
    if not 0 <= i < fn.arity:
        raise ArityMismatch(f"no argument {i} in a map of arity {fn.arity}")
    return SmoothMap(fn.arity, derivative_node(fn.body, i))


def partials(fn: SmoothMap, args: Sequence[float]) -> list[float]:
    if len(args) != fn.arity:
        raise ArityMismatch(f"map of arity {fn.arity} applied to {len(args)} arguments")
    point = [float(a) for a in args]
    return [_value(derivative(fn, i).body, point) for i in range(fn.arity)]


# ---------------------------------------------------------------- composition

def compose(outer: SmoothMap, inners: Sequence[SmoothMap]) -> SmoothMap:
    if len(inners) != outer.arity:
        raise ArityMismatch(f"outer map takes {outer.arity} inputs, {len(inners)} given")
    arities = {m.arity for m in inners}
    if len(arities) != 1:
        raise ArityMismatch(f"inner maps disagree on arity: {sorted(arities)}")
    return SmoothMap(arities.pop(), Compose(outer, tuple(m.body for m in inners)))


def projection(i: int, arity: int) -> SmoothMap:
    return SmoothMap(arity, Slot(i))


def constant(c: float, arity: int = 1) -> SmoothMap:
    return SmoothMap(arity, Const(float(c)))


# ---------------------------------------------------------- special functions

def cutoff1d() -> SmoothMap:
    return SmoothMap(1, Cutoff(Slot(0)))


def _distance_sq_node(p: Sequence[float]) -> Node:
    terms = []
    for i, c in enumerate(p):
        shifted = Slot(i) if c == 0.0 else Add((Slot(i), Const(-float(c))))
        terms.append(Pow(shifted, 2))
    return Add(tuple(terms))


def distance_sq(p: Sequence[float]) -> SmoothMap:
    if len(p) < 1:
        raise ArityMismatch("distance_sq needs a point of dimension >= 1")
    return SmoothMap(len(p), _distance_sq_node(p))


def bump_ball(p: Sequence[float], r: float) -> SmoothMap:
    if not r > 0.0:
        raise ValueError(f"bump radius must be positive, got {r}")
    scaled = Mul((_distance_sq_node(p), Const(1.0 / (r * r))))
    return SmoothMap(len(p), Bump(scaled))


# ------------------------------------------------------------ Hadamard factors

def is_polynomial(node: Node) -> bool:
    for n in walk(node):
        if isinstance(n, Compose):
            if not is_polynomial(n.outer.body):
                return False
        elif not isinstance(n, (Const, Slot, Add, Mul, Neg, Pow)):
            return False
    return True


def to_sympy(node: Node, slots: Sequence[sp.Expr]) -> sp.Expr:
    # Exact rational image of a polynomial node.
    match node:
        case Const(v):
            return sp.Rational(v)
        case Slot(i):
            return slots[i]
        case Add(terms):
            return sp.Add(*(to_sympy(t, slots) for t in terms))
        case Mul(factors):
            return sp.Mul(*(to_sympy(f, slots) for f in factors))
        case Neg(a):
            return -to_sympy(a, slots)
        case Pow(a, n):
            return to_sympy(a, slots) ** n
        case Compose(outer, inners):
            return to_sympy(outer.body, [to_sympy(i, slots) for i in inners])
    raise TypeError(f"{type(node).__name__} is not polynomial")


def _monomial_node(coeff: float, exps: Sequence[int], p: Sequence[float]) -> Node:
    factors: list[Node] = [Const(coeff)]
    for j, e in enumerate(exps):
        if e == 0:
            continue
        base = Slot(j) if p[j] == 0.0 else Add((Slot(j), Const(-float(p[j]))))
        factors.append(base if e == 1 else Pow(base, e))
    return factors[0] if len(factors) == 1 else Mul(tuple(factors))


def hadamard_factors(fn: SmoothMap, p: Sequence[float]) -> tuple[float, list[SmoothMap]]:
    """Split fn as fn(p) + sum_i g_i * (x_i - p_i).

    g_i(x) is the integral over t in [0,1] of d_i fn(p + t(x - p)). Polynomial
    bodies are integrated exactly; other bodies get a Gauss-Legendre quadrature
    node, which keeps every g_i a differentiable SmoothMap.
    """
    if len(p) != fn.arity:
        raise ArityMismatch(f"base point has dimension {len(p)}, map has arity {fn.arity}")
    base = tuple(float(c) for c in p)
    value = eval_map(fn, base)
    n = fn.arity
    if is_polynomial(fn.body):
        ys = sp.symbols(f"y0:{n}")
        shifted = to_sympy(fn.body, [sp.Rational(c) + y for c, y in zip(base, ys)])
        poly = sp.Poly(shifted, *ys, domain="QQ")
        factors = []
        for i in range(n):
            terms = []
            for exps, coeff in poly.diff(ys[i]).terms():
                if coeff == 0:
                    continue
                c = float(coeff / (sum(exps) + 1))
                terms.append(_monomial_node(c, exps, base))
            body = Add(tuple(terms)) if len(terms) > 1 else (terms[0] if terms else Const(0.0))
            factors.append(SmoothMap(n, body))
        logger.debug(f"Hadamard factors of a polynomial of degree {poly.total_degree()} in {n} variables")
        return value, factors
    factors = [SmoothMap(n, Quadrature(derivative(fn, i).body, base, 0)) for i in range(n)]
    return value, factors


# -------------------------------------------------------------------- export

_UNARY_TEXT = {Exp: "exp", Sin: "sin", Cos: "cos", Cutoff: "cutoff", Bump: "psi"}


def node_text(node: Node, names: Sequence[str]) -> str:
    # Infix rendering; slot i prints as names[i].
    match node:
        case Const(v):
            return repr(v) if v >= 0 else f"({v!r})"
        case Slot(i):
            return names[i]
        case Add(terms):
            return "(" + " + ".join(node_text(t, names) for t in terms) + ")"
        case Mul(factors):
            return "(" + " * ".join(node_text(f, names) for f in factors) + ")"
        case Neg(a):
            return f"(-{node_text(a, names)})"
        case Recip(a, _):
            return f"(1 / {node_text(a, names)})"
        case Pow(a, n):
            return f"{node_text(a, names)}^{n}"
        case Flat(a, order):
            return f"flat{order}({node_text(a, names)})"
        case Compose(outer, inners):
            inner_texts = [node_text(i, names) for i in inners]
            return node_text(outer.body, inner_texts)
        case Quadrature(integrand, base, power):
            return f"quad{power}[{node_text(integrand, names)} @ {list(base)}]"
    return f"{_UNARY_TEXT[type(node)]}({node_text(node.arg, names)})"


def map_text(fn: SmoothMap, names: Sequence[str] | None = None) -> str:
    names = list(names) if names is not None else [f"u{i + 1}" for i in range(fn.arity)]
    return node_text(fn.body, names)


def node_to_dict(node: Node) -> dict:
    match node:
        case Const(v):
            return {"op": "const", "value": v}
        case Slot(i):
            return {"op": "slot", "index": i}
        case Recip(a, guard):
            return {"op": "recip", "guard": guard, "args": [node_to_dict(a)]}
        case Pow(a, n):
            return {"op": "pow", "exponent": n, "args": [node_to_dict(a)]}
        case Flat(a, order):
            return {"op": "flat", "order": order, "args": [node_to_dict(a)]}
        case Compose(outer, inners):
            return {"op": "compose", "outer": map_to_dict(outer), "args": [node_to_dict(i) for i in inners]}
        case Quadrature(integrand, base, power):
            return {"op": "quadrature", "base": list(base), "power": power, "args": [node_to_dict(integrand)]}
    return {"op": type(node).__name__.lower(), "args": [node_to_dict(c) for c in children(node)]}


def map_to_dict(fn: SmoothMap) -> dict:
    return {"arity": fn.arity, "body": node_to_dict(fn.body)}

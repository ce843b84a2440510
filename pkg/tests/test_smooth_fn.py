import math

import numpy as np
import pytest

from errors import ArityMismatch, GuardViolation
from smooth_fn import (
    Add,
    Const,
    Cos,
    Cutoff,
    Exp,
    Mul,
    Pow,
    Recip,
    Sin,
    Slot,
    SmoothMap,
    bump_ball,
    bump_value,
    compose,
    cutoff1d,
    cutoff_array,
    cutoff_value,
    derivative,
    distance_sq,
    eval_map,
    hadamard_factors,
    map_text,
    map_to_dict,
    partials,
    projection,
)


def test_eval_exp_times_y():
    f = SmoothMap(2, Mul((Exp(Slot(0)), Slot(1))))
    assert f(2.0, 3.0) == pytest.approx(3.0 * math.e ** 2)


def test_arity_checks():
    f = SmoothMap(2, Add((Slot(0), Slot(1))))
    with pytest.raises(ArityMismatch):
        eval_map(f, [1.0])
    with pytest.raises(ArityMismatch):
        SmoothMap(1, Slot(1))
    with pytest.raises(ArityMismatch):
        SmoothMap(0, Const(1.0))


def test_guards():
    with pytest.raises(GuardViolation):
        SmoothMap(1, Recip(Slot(0)))(0.0)
    with pytest.raises(GuardViolation):
        SmoothMap(1, Recip(Slot(0), "positive"))(-1.0)
    with pytest.raises(GuardViolation):
        SmoothMap(1, Exp(Slot(0)))(1000.0)
    with pytest.raises(GuardViolation):
        SmoothMap(1, Pow(Slot(0), 400))(1e10)
    assert SmoothMap(1, Recip(Slot(0), "positive"))(4.0) == 0.25


def test_operator_overloads():
    x = Slot(0)
    assert x + 1 == Add((x, Const(1.0)))
    assert 2 * x == Mul((Const(2.0), x))
    assert x ** -2 == Recip(Pow(x, 2))
    with pytest.raises(TypeError):
        x ** 0.5


def test_cutoff_values():
    assert cutoff_value(0.0) == 1.0
    assert cutoff_value(0.5) == 1.0
    assert cutoff_value(1.0) == 0.0
    assert cutoff_value(2.0) == 0.0
    # symmetric weights at the midpoint of the transition
    assert cutoff_value(0.75) == 0.5
    ts = np.linspace(0.6, 0.9, 31)
    values = [cutoff_value(t) for t in ts]
    assert all(0.0 < v < 1.0 for v in values)
    assert all(b < a for a, b in zip(values, values[1:]))


def test_cutoff_array_matches_scalar():
    ts = np.linspace(-1.0, 2.0, 301)
    np.testing.assert_allclose(cutoff_array(ts), [cutoff_value(t) for t in ts], rtol=0, atol=1e-15)


def test_bump():
    assert bump_value(0.0) == 1.0
    assert bump_value(1.0) == 0.0
    ball = bump_ball((1.0, 0.0), 0.5)
    assert ball(1.0, 0.0) == 1.0
    assert ball(1.6, 0.0) == 0.0
    assert 0.0 < ball(1.2, 0.1) < 1.0


def test_distance_sq():
    assert distance_sq((1.0, 0.0))(1.0, 2.0) == 4.0
    assert distance_sq((0.0, 0.0)).body == Add((Pow(Slot(0), 2), Pow(Slot(1), 2)))


def _central(f: SmoothMap, args, i, h=1e-6):
    up = list(args)
    down = list(args)
    up[i] += h
    down[i] -= h
    return (f(*up) - f(*down)) / (2 * h)


@pytest.mark.parametrize("body,args", [
    (Add((Mul((Sin(Slot(0)), Pow(Slot(1), 3))), Exp(Mul((Slot(0), Slot(1)))))), (0.3, -0.7)),
    (Mul((Slot(0), Recip(Add((Const(1.0), Pow(Slot(1), 2)))))), (1.2, 0.4)),
    (Cos(Add((Slot(0), Mul((Const(-2.0), Slot(1)))))), (0.1, 0.9)),
    (Cutoff(Mul((Slot(0), Slot(1)))), (0.8, 0.9)),
])
def test_partials_match_finite_differences(body, args):
    f = SmoothMap(2, body)
    exact = partials(f, args)
    for i in range(2):
        assert exact[i] == pytest.approx(_central(f, args, i), rel=1e-5, abs=1e-7)


def test_cutoff_second_derivative():
    phi = cutoff1d()
    d1 = derivative(phi, 0)
    d2 = derivative(d1, 0)
    for t in (0.6, 0.75, 0.9):
        assert d2(t) == pytest.approx(_central(d1, [t], 0), rel=1e-4, abs=1e-6)
    assert d1(0.3) == 0.0
    assert d1(1.2) == 0.0


def test_derivative_rejects_bad_index():
    with pytest.raises(ArityMismatch):
        derivative(projection(0, 2), 2)


def test_compose():
    outer = SmoothMap(1, Exp(Slot(0)))
    inner = SmoothMap(2, Add((Slot(0), Slot(1))))
    h = compose(outer, [inner])
    assert h.arity == 2
    assert h(1.0, 2.0) == pytest.approx(math.e ** 3)
    with pytest.raises(ArityMismatch):
        compose(outer, [inner, inner])


def _random_polynomial(rng, arity, degree):
    # (coefficient, exponents) terms alongside the map
    terms = []
    for _ in range(int(rng.integers(1, 6))):
        c = float(rng.integers(-3, 4))
        exps = tuple(int(e) for e in rng.multinomial(int(rng.integers(0, degree + 1)), [1 / arity] * arity))
        factors = [Const(c)] + [Pow(Slot(j), e) for j, e in enumerate(exps) if e]
        terms.append((c, exps, Mul(tuple(factors))))
    return [(c, exps) for c, exps, _ in terms], SmoothMap(arity, Add(tuple(t for _, _, t in terms)))


def _scale(terms, x):
    return 1.0 + sum(abs(c) * math.prod(max(1.0, abs(v)) ** e for v, e in zip(x, exps)) for c, exps in terms)


def test_hadamard_reconstructs_polynomials():
    rng = np.random.default_rng(5)
    for _ in range(500):
        arity = int(rng.integers(1, 5))
        terms, f = _random_polynomial(rng, arity, 5)
        p = rng.integers(-64, 65, arity) / 32
        value, factors = hadamard_factors(f, p)
        assert value == f(*p)
        for _ in range(3):
            x = rng.uniform(-2, 2, arity)
            rebuilt = value + sum(g(*x) * (x[i] - p[i]) for i, g in enumerate(factors))
            reach = [abs(a) + abs(b) for a, b in zip(x, p)]
            assert abs(rebuilt - f(*x)) <= 1e-9 * _scale(terms, reach)
        # g_i(p) is the i-th partial at p
        tol = 1e-9 * 5 * _scale(terms, p)
        assert all(abs(g(*p) - d) <= tol for g, d in zip(factors, partials(f, p)))


def test_hadamard_quadrature_for_non_polynomials():
    f = SmoothMap(2, Mul((Exp(Slot(0)), Sin(Slot(1)))))
    p = (0.2, -0.4)
    value, factors = hadamard_factors(f, p)
    for x in [(0.5, 0.1), (-1.0, 1.3)]:
        rebuilt = value + sum(g(*x) * (x[i] - p[i]) for i, g in enumerate(factors))
        assert rebuilt == pytest.approx(f(*x), abs=1e-9)
    # the factors stay differentiable
    assert partials(factors[0], (0.5, 0.1))[0] == pytest.approx(_central(factors[0], (0.5, 0.1), 0), rel=1e-5)


def test_text_and_dict_export():
    f = SmoothMap(2, Add((Pow(Slot(0), 2), Slot(1))))
    assert map_text(f) == "(u1^2 + u2)"
    assert map_text(f, ["x", "y"]) == "(x^2 + y)"
    data = map_to_dict(f)
    assert data["arity"] == 2
    assert data["body"]["op"] == "add"
    assert data["body"]["args"][0] == {"op": "pow", "exponent": 2, "args": [{"op": "slot", "index": 0}]}


def _random_body(rng, arity, depth):
    if depth == 0 or rng.random() < 0.25:
        if rng.random() < 0.8:
            return Slot(int(rng.integers(arity)))
        return Const(float(rng.uniform(-1, 1)))
    kind = int(rng.integers(5))
    if kind == 0:
        return Add((_random_body(rng, arity, depth - 1), _random_body(rng, arity, depth - 1)))
    if kind == 1:
        return Mul((_random_body(rng, arity, depth - 1), _random_body(rng, arity, depth - 1)))
    if kind == 2:
        return Sin(_random_body(rng, arity, depth - 1))
    if kind == 3:
        return Cos(_random_body(rng, arity, depth - 1))
    return Exp(Sin(_random_body(rng, arity, depth - 1)))


def _random_map(rng, arity, depth=4):
    return SmoothMap(arity, _random_body(rng, arity, depth))


def test_chain_rule_on_random_compositions():
    rng = np.random.default_rng(17)
    for _ in range(100):
        n, m = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        outer = _random_map(rng, m)
        inners = [_random_map(rng, n) for _ in range(m)]
        h = compose(outer, inners)
        x = rng.uniform(-1, 1, n)
        at = [g(*x) for g in inners]
        d_outer = partials(outer, at)
        d_inners = [partials(g, x) for g in inners]
        for i, d in enumerate(partials(h, x)):
            expected = sum(d_outer[j] * d_inners[j][i] for j in range(m))
            assert d == pytest.approx(expected, rel=1e-9, abs=1e-12)


def test_cutoff_on_a_fine_grid():
    ts = np.linspace(0.0, 1.0, 10_000)
    values = np.array([cutoff_value(t) for t in ts])
    assert np.all((values >= 0.0) & (values <= 1.0))
    assert np.all(values[ts <= 0.5] == 1.0)
    assert values[-1] == 0.0
    assert np.all(np.diff(values) <= 1e-15)


def test_bump_ball_over_many_radii():
    rng = np.random.default_rng(3)
    for r in rng.uniform(0.01, 10.0, 1000):
        center = tuple(float(v) for v in rng.uniform(-5, 5, 2))
        ball = bump_ball(center, float(r))
        assert ball(*center) == 1.0
        theta = rng.uniform(0, 2 * np.pi)
        direction = (math.cos(theta), math.sin(theta))
        outside = [c + 1.01 * r * d for c, d in zip(center, direction)]
        assert ball(*outside) == 0.0
        u = rng.uniform(0.0, 0.99)
        inside = [c + u * r * d for c, d in zip(center, direction)]
        assert 0.0 < ball(*inside) <= 1.0

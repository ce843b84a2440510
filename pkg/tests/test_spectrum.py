import math

import numpy as np
import pytest

from carrier import Chart, Constraint, FiniteDim, FiniteVec, Region, Tagged, seq_point
from configuration_values import ConfigurationValues
from errors import (
    CarrierMismatch,
    IdempotentViolation,
    LocalElementUnderAssignment,
    MissingGeneratorValue,
    SearchBudgetExhausted,
    UnknownName,
)
from seqspace import tilde_structure, xi_space, z
from smooth_fn import Add, Const, Cos, Exp, Mul, Neg, Pow, Recip, Sin, Slot, SmoothMap
from spectrum import (
    EvaluationOutcome,
    FromAssignment,
    Obstructed,
    apply_hom,
    assignment,
    classify,
    classify_batch,
    density_witness,
    ev,
    hat,
    iota,
    kappa,
    recover_point,
    spec_space,
    union_classify,
)
from structure import (
    Composite,
    Constant,
    Global,
    Projection,
    add_samples,
    from_atlas,
    new_space,
    pair,
    register,
    union_space,
    value_of,
)

SUM_OF_SQUARES = SmoothMap(2, Add((Pow(Slot(0), 2), Pow(Slot(1), 2))))


def punctured_plane(with_w=True):
    space = new_space("M", FiniteDim(2, excluded=(FiniteVec((0.0, 0.0)),)),
                      {"x": Projection(1), "y": Projection(2)}, seed=0)
    if with_w:
        register(space, "w", Global(SUM_OF_SQUARES, ("x", "y")))
        register(space, "g", Global(SmoothMap(1, Recip(Slot(0))), ("w",)))
    return space


def circle():
    on_circle = Constraint(SmoothMap(2, Add((Pow(Slot(0), 2), Pow(Slot(1), 2), Const(-1.0)))),
                           "=0", (1, 2), "cx^2 + cy^2 - 1")
    chart = Chart(((0.0, 2 * math.pi),), (SmoothMap(1, Cos(Slot(0))), SmoothMap(1, Sin(Slot(0)))))
    return new_space("C", FiniteDim(2, constraints=(on_circle,), chart=chart),
                     {"cx": Projection(1), "cy": Projection(2)}, seed=0)


def open_interval():
    positive = Constraint(SmoothMap(1, Slot(0)), ">0", (1,), "s")
    below_one = Constraint(SmoothMap(1, Add((Const(1.0), Neg(Slot(0))))), ">0", (1,), "1 - s")
    return new_space("I", FiniteDim(1, constraints=(positive, below_one)), {"s": Projection(1)}, seed=0)


@pytest.fixture(scope="module")
def seq_space():
    return xi_space(K=20, check_count=50, seed=0)


def test_origin_is_obstructed_by_reciprocal():
    outcome = classify(punctured_plane(), assignment({"x": 0, "y": 0}))
    assert isinstance(outcome, Obstructed)
    assert outcome.witness == "1/w"
    assert outcome.diagnosis == "AlgebraicContradiction"
    assert outcome.probe == (FiniteVec((0.0, 0.0)),)
    bare = classify(punctured_plane(with_w=False), assignment({"x": 0, "y": 0}))
    assert bare.witness == "1/dist2((0.0, 0.0))"


def test_points_classify_as_evaluations():
    space = punctured_plane()
    for p in space.carrier_samples(200):
        outcome = classify(space, assignment({"x": p.coords[0], "y": p.coords[1]}))
        assert outcome == EvaluationOutcome((p,))


def test_composition_law():
    space = punctured_plane()
    for p in space.carrier_samples(1000):
        h = FromAssignment(assignment({"x": p.coords[0], "y": p.coords[1]}))
        assert apply_hom(space, h, "w") == value_of(space, "w", p)
        assert apply_hom(space, h, "g") == apply_hom(space, ev(space, p), "g")
    assert hat(space, "w")(FromAssignment(assignment({"x": 3, "y": 4}))) == 25.0


def test_assignment_errors():
    space = punctured_plane()
    with pytest.raises(MissingGeneratorValue):
        apply_hom(space, FromAssignment(assignment({"x": 1})), "w")
    with pytest.raises(UnknownName):
        classify(space, assignment({"w": 1}))


def test_local_elements_need_a_point():
    space = new_space("L", FiniteDim(1), {"s": Projection(1)}, seed=0)
    square = SmoothMap(1, Pow(Slot(0), 2))
    from_atlas(space, [(Region((("s", -math.inf, math.inf),)), square, ["s"])], name="h", check_count=16)
    with pytest.raises(LocalElementUnderAssignment):
        apply_hom(space, FromAssignment(assignment({"s": 0.5})), "h")


def test_circle():
    space = circle()
    assert classify(space, assignment({"cx": 0.6, "cy": 0.8})) == EvaluationOutcome((FiniteVec((0.6, 0.8)),))
    outcome = classify(space, assignment({"cx": 0, "cy": 0}))
    assert outcome.witness == "cx^2 + cy^2 - 1"
    assert outcome.values == (-1.0,)
    for p in space.carrier_samples(200):
        a = assignment({"cx": p.coords[0], "cy": p.coords[1]})
        assert isinstance(classify(space, a), EvaluationOutcome)


def test_recover_point(seq_space):
    space = circle()
    h = FromAssignment(assignment({"cx": 0.6, "cy": 0.8}))
    assert recover_point(space, h) == FiniteVec((0.6, 0.8))
    with pytest.raises(CarrierMismatch):
        recover_point(seq_space, h)


def test_zero_sequence_is_obstructed_by_xi(seq_space):
    outcome = classify(seq_space, assignment({}))
    assert outcome.witness == "xi"
    assert outcome.diagnosis == "DivergentAlongProbe"
    assert len(outcome.probe) == 20
    assert outcome.probe[0] == z(1)
    assert all(b > a for a, b in zip(outcome.values, outcome.values[1:]))
    assert outcome.values[-1] >= 1e6


def test_sequence_assignments(seq_space):
    outcome = classify(seq_space, assignment({"pi(1)": 0.3, "pi(4)": -1}))
    assert outcome == EvaluationOutcome((seq_point({1: 0.3, 4: -1.0}),))
    tail = classify(seq_space, assignment({"pi(1)": 0.3}, default=1.0))
    assert tail.diagnosis == "NotInCarrier"


def test_tilde_space():
    space = tilde_structure(z(1), name="V", seed=0)
    outcome = classify(space, assignment({"pi(1)": 1 / math.sqrt(2), "theta": 1}))
    assert outcome == EvaluationOutcome((z(1),))
    obstructed = classify(space, assignment({"pi(1)": 0.5, "theta": 1}))
    assert obstructed.witness == "theta"
    assert obstructed.values == (0.0, 1.0)


def test_union_routing():
    u = union_space(circle(), open_interval(), "U")
    side, outcome = union_classify(u, assignment({"e_left": 1, "e_right": 0, "left.cx": 1, "left.cy": 0}))
    assert side == "left"
    assert outcome == EvaluationOutcome((Tagged("left", FiniteVec((1.0, 0.0))),))
    side, outcome = union_classify(u, assignment({"e_left": 1, "e_right": 0, "left.cx": 1, "left.cy": 0,
                                                  "right.s": 0.5}))
    assert outcome.witness == "right.s"
    outcome = classify(u, assignment({"e_left": 0, "e_right": 1, "right.s": 2}))
    assert outcome.witness == "sqrt(1 - s)"
    assert outcome.values == (-1.0,)


def test_union_idempotents():
    u = union_space(circle(), open_interval(), "U")
    with pytest.raises(IdempotentViolation):
        union_classify(u, assignment({"e_left": 1, "e_right": 1}))
    with pytest.raises(IdempotentViolation):
        union_classify(u, assignment({"e_left": 0.5, "e_right": 0.5}))
    with pytest.raises(MissingGeneratorValue):
        union_classify(u, assignment({"e_left": 1}))
    with pytest.raises(CarrierMismatch):
        union_classify(circle(), assignment({"cx": 1, "cy": 0}))


def test_classify_batch_keeps_order():
    space = punctured_plane()
    points = space.carrier_samples(10)
    outcomes = classify_batch(space, [assignment({"x": p.coords[0], "y": p.coords[1]}) for p in points], workers=4)
    assert [o.points[0] for o in outcomes] == points


def test_iota_is_kappa_after_ev():
    space = punctured_plane()
    names = ["x", "y", "w"]
    for p in space.carrier_samples(30):
        assert iota(space, p, names) == kappa(space, ev(space, p), names)


def test_spec_space():
    space = punctured_plane()
    candidates = [assignment({"x": 0, "y": 0}), assignment({"x": 0.6, "y": 0.8})]
    spec = spec_space(space, candidates, count=20)
    assert spec.generators.names() == ["hat(x)", "hat(y)"]
    assert len(spec.carrier.points) == 21
    assert FiniteVec((0.6, 0.8)) in spec.carrier.points
    for p, v in zip(space.carrier_samples(20), spec.carrier.points):
        assert value_of(spec, "hat(w)", v) == value_of(space, "w", p)


def test_density_witness():
    space = circle()
    a = assignment({"cx": 0.6, "cy": 0.8})
    assert density_witness(space, a, 1e-3, ["cx", "cy"]) == FiniteVec((0.6, 0.8))
    plane = punctured_plane()
    target = assignment({"x": 0.5, "y": 0.5})
    p = density_witness(plane, target, 0.1, ["x", "y"], search_only=True)
    assert abs(p.coords[0] - 0.5) <= 0.1 and abs(p.coords[1] - 0.5) <= 0.1
    with pytest.raises(SearchBudgetExhausted):
        density_witness(plane, target, 1e-6, ["x", "y"], budget=100, search_only=True)
    with pytest.raises(ValueError):
        density_witness(plane, target, 0.0, ["x", "y"])


def test_union_routes_sampled_points():
    u = union_space(circle(), open_interval(), "U")
    for p in u.carrier_samples(100):
        inner = u.sides[0] if p.side == "left" else u.sides[1]
        values = {"e_left": float(p.side == "left"), "e_right": float(p.side == "right")}
        for i, g in enumerate(inner.generators.names()):
            values[f"{p.side}.{g}"] = p.inner.coords[i]
        side, outcome = union_classify(u, assignment(values))
        assert side == p.side
        assert outcome == EvaluationOutcome((p,))


def test_generator_values_determine_the_homomorphism():
    space = punctured_plane()
    rng = np.random.default_rng(11)
    names = []
    for i in range(20):
        a, b, c = (float(v) for v in rng.uniform(-2, 2, 3))
        body = Add((Mul((Exp(Mul((Const(a), Slot(0)))), Sin(Mul((Const(b), Slot(1)))))), Const(c)))
        register(space, f"f{i}", Global(SmoothMap(2, body), ("x", "y")))
        names.append(f"f{i}")
    for p in space.carrier_samples(100):
        chi = FromAssignment(assignment({"x": p.coords[0], "y": p.coords[1]}))
        assert [apply_hom(space, chi, f) for f in names] == [apply_hom(space, ev(space, p), f) for f in names]


def test_fiber_of_a_non_separating_generator():
    square = Composite(SmoothMap(1, Pow(Slot(0), 2)), (1,))
    space = new_space("R1", FiniteDim(1), {"g": square}, seed=0)
    add_samples(space, [FiniteVec((-1.5,)), FiniteVec((1.5,))])
    outcome = classify(space, assignment({"g": 2.25}))
    assert sorted(p.coords for p in outcome.points) == [(-1.5,), (1.5,)]
    # no sample realises g = 4, the roots come from refinement
    outcome = classify(space, assignment({"g": 4}))
    assert isinstance(outcome, EvaluationOutcome)
    roots = sorted(p.coords[0] for p in outcome.points)
    assert roots == pytest.approx([-2.0, 2.0], abs=1e-8)
    assert classify(space, assignment({"g": -1})).diagnosis == "NotInCarrier"


def test_fiber_stays_off_excluded_points():
    space = new_space("P", FiniteDim(2, excluded=(FiniteVec((0.0, 0.0)),)),
                      {"w": Composite(SUM_OF_SQUARES, (1, 2))}, seed=0)
    outcome = classify(space, assignment({"w": 0}))
    assert isinstance(outcome, Obstructed)
    outcome = classify(space, assignment({"w": 1}))
    assert outcome.points
    for p in outcome.points:
        assert p.coords[0] ** 2 + p.coords[1] ** 2 == pytest.approx(1.0, abs=1e-8)


def test_classify_batch_warms_the_witness_window():
    space = punctured_plane()
    classify_batch(space, [assignment({"x": 0, "y": 0}), assignment({"x": 1, "y": 0})], workers=2)
    assert ConfigurationValues.get_sample_count() in space._sample_cache
    assert 32 in space._sample_cache


def test_sequence_space_accepts_only_evaluations(seq_space):
    rng = np.random.default_rng(8)
    for p in seq_space.carrier_samples(50):
        a = assignment({f"pi({i})": v for i, v in p.support})
        assert classify(seq_space, a) == EvaluationOutcome((p,))
    for _ in range(45):
        indices = rng.choice(np.arange(1, 30), size=int(rng.integers(1, 5)), replace=False)
        values = {int(i): float(rng.uniform(-2, 2)) for i in indices}
        outcome = classify(seq_space, assignment({f"pi({i})": v for i, v in values.items()}))
        assert outcome == EvaluationOutcome((seq_point(values),))
    for n in range(5):
        outcome = classify(seq_space, assignment({f"pi({i})": 0.0 for i in range(1, n + 1)}))
        assert isinstance(outcome, Obstructed)
        assert outcome.witness == "xi"


@pytest.mark.parametrize("n", range(1, 7))
def test_recover_point_on_R_n(n):
    space = new_space(f"R{n}", FiniteDim(n), {f"x{i}": Projection(i) for i in range(1, n + 1)}, seed=0)
    rng = np.random.default_rng(n)
    for _ in range(100):
        p = FiniteVec(tuple(float(v) for v in rng.uniform(-10, 10, n)))
        a = assignment({f"x{i}": p.coords[i - 1] for i in range(1, n + 1)})
        assert recover_point(space, FromAssignment(a)) == p
        assert classify(space, a) == EvaluationOutcome((p,))


def test_assignments_respect_the_ring_operations():
    space = punctured_plane()
    register(space, "one", Constant(1.0))
    register(space, "f", Global(SmoothMap(2, Add((Mul((Slot(0), Slot(1))), Sin(Slot(0))))), ("x", "y")))
    register(space, "h", Global(SmoothMap(1, Exp(Slot(0))), ("y",)))
    register(space, "f_plus_h", Global(SmoothMap(2, Add((Slot(0), Slot(1)))), ("f", "h")))
    register(space, "f_times_h", Global(SmoothMap(2, Mul((Slot(0), Slot(1)))), ("f", "h")))
    rng = np.random.default_rng(21)
    for _ in range(100):
        x, y = (float(v) for v in rng.uniform(-3, 3, 2))
        chi = FromAssignment(assignment({"x": x, "y": y}))
        f, h = apply_hom(space, chi, "f"), apply_hom(space, chi, "h")
        assert apply_hom(space, chi, "f_plus_h") == f + h
        assert apply_hom(space, chi, "f_times_h") == f * h
        assert apply_hom(space, chi, "one") == 1.0


def test_pair_splits_along_the_idempotents():
    left, right = circle(), open_interval()
    register(left, "f", Global(SmoothMap(2, Mul((Slot(0), Exp(Slot(1))))), ("cx", "cy")))
    register(right, "g", Global(SmoothMap(1, Sin(Slot(0))), ("s",)))
    for side in (left, right):
        register(side, "zero", Constant(0.0))
        register(side, "one", Constant(1.0))
    u = union_space(left, right, "U")
    pair(u, "fg", "f", "g")
    pair(u, "f0", "f", "zero")
    pair(u, "0g", "zero", "g")
    pair(u, "10", "one", "zero")
    pair(u, "01", "zero", "one")
    for p in u.carrier_samples(100):
        v = {name: value_of(u, name, p) for name in ("fg", "f0", "0g", "10", "01")}
        assert v["fg"] == v["f0"] * v["10"] + v["0g"] * v["01"]
        inner = u.sides[0] if p.side == "left" else u.sides[1]
        values = {"e_left": float(p.side == "left"), "e_right": float(p.side == "right")}
        for i, g in enumerate(inner.generators.names()):
            values[f"{p.side}.{g}"] = p.inner.coords[i]
        chi = FromAssignment(assignment(values))
        h = {name: apply_hom(u, chi, name) for name in v}
        assert h["fg"] == h["f0"] * h["10"] + h["0g"] * h["01"]
        assert h["fg"] == v["fg"]


def test_spec_space_is_its_own_spectrum():
    spec = spec_space(punctured_plane(), count=20)
    again = spec_space(spec)
    assert again.carrier.points == spec.carrier.points
    for v in spec.carrier.points:
        exact = assignment({"hat(x)": v.coords[0], "hat(y)": v.coords[1]})
        assert classify(spec, exact) == EvaluationOutcome((v,))
        nudged = assignment({"hat(x)": v.coords[0] + 1e-12, "hat(y)": v.coords[1] - 1e-12})
        assert classify(spec, nudged) == EvaluationOutcome((v,))
    assert isinstance(classify(spec, assignment({"hat(x)": 100, "hat(y)": 100})), Obstructed)

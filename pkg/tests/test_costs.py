"""Cost engine: extended reals, evaluation, derivatives, classification."""

from __future__ import annotations

import math

import numpy as np
import pytest

from wardrop.costs import (
    Affine,
    CongestionRational,
    Constant,
    CostDomainError,
    ExtReal,
    ExtRealGuardError,
    InfiniteCostError,
    MonomialTerm,
    NonMonotoneAffine,
    Polynomial,
    Scale,
    Sum,
    classify_cost,
    compile_scalar,
    cost_from_obj,
    cost_to_obj,
    eval_array,
    eval_cost,
    eval_partial,
)
from conftest import random_monotone_expr


class TestExtReal:
    def test_finite_arithmetic(self):
        a, b = ExtReal.of(1.5), ExtReal.of(2.0)
        assert (a + b).finite == 3.5
        assert a.scaled(2.0).finite == 3.0
        assert a < b and b >= a

    def test_infinity_propagates(self):
        inf = ExtReal.infinity()
        assert (ExtReal.of(1.0) + inf).is_infinite
        assert inf.scaled(0.5).is_infinite
        assert ExtReal.of(7.0) < inf
        assert str(inf) == "inf"

    def test_zero_times_infinity_guarded(self):
        with pytest.raises(ExtRealGuardError):
            ExtReal.infinity().scaled(0.0)

    def test_constructor_rejects_bad_values(self):
        with pytest.raises(ValueError):
            ExtReal.of(-1.0)
        with pytest.raises(ValueError):
            ExtReal.of(math.inf)


SHARED_AFFINE = Affine(1.0, {"upper": 1.0, "lower": 1.0})
CORRIDOR = CongestionRational({"upper": 1.0, "lower": 1.0}, 1.0)


class TestEval:
    def test_shared_affine_at_half_half(self):
        assert eval_cost(SHARED_AFFINE, {"upper": 0.5, "lower": 0.5}).finite == 2.0

    def test_congestion_blows_up_at_capacity(self):
        assert eval_cost(CORRIDOR, {"upper": 0.5, "lower": 0.5}).is_infinite
        assert eval_cost(CORRIDOR, {"upper": 1.0, "lower": 0.5}).is_infinite

    def test_congestion_finite_below_capacity(self):
        v = eval_cost(CORRIDOR, {"upper": 0.25, "lower": 0.25})
        assert v.finite == pytest.approx(1.0)  # 0.5 / (1 - 0.5)

    def test_constant(self):
        assert eval_cost(Constant(3.0), {}).finite == 3.0

    def test_flow_out_of_range(self):
        with pytest.raises(CostDomainError):
            eval_cost(SHARED_AFFINE, {"upper": 1.5, "lower": 0.0})
        with pytest.raises(CostDomainError):
            eval_cost(SHARED_AFFINE, {"upper": 0.5})  # missing population

    def test_scale_sum_algebra(self):
        inner = Affine(1.0, {"a": 2.0})
        flows = {"a": 0.25}
        assert eval_cost(Scale(3.0, inner), flows).finite == pytest.approx(
            3.0 * eval_cost(inner, flows).finite
        )
        total = Sum((inner, Constant(2.0), Scale(0.5, inner)))
        assert eval_cost(total, flows).finite == pytest.approx(1.5 + 2.0 + 0.75)

    def test_nonmonotone_affine_negative_value_rejected(self):
        expr = NonMonotoneAffine(0.5, {"a": -1.0})
        with pytest.raises(CostDomainError):
            eval_cost(expr, {"a": 1.0})


class TestPartial:
    def test_affine_coefficient(self):
        assert eval_partial(SHARED_AFFINE, {"upper": 0.3, "lower": 0.9}, "upper") == 1.0

    def test_constant_derivative(self):
        assert eval_partial(Constant(5.0), {}, "upper") == 0.0

    def test_congestion_derivative_at_half_load(self):
        # weight * capacity / (capacity - s)^2 = 1 * 1 / 0.25 = 4 at s = 1/2
        got = eval_partial(CORRIDOR, {"upper": 0.25, "lower": 0.25}, "upper")
        assert got == pytest.approx(4.0)
        # central finite difference oracle
        h = 1e-6
        up = eval_cost(CORRIDOR, {"upper": 0.25 + h, "lower": 0.25}).finite
        down = eval_cost(CORRIDOR, {"upper": 0.25 - h, "lower": 0.25}).finite
        assert got == pytest.approx((up - down) / (2 * h), rel=1e-6)

    def test_derivative_at_blowup_is_error(self):
        with pytest.raises(InfiniteCostError):
            eval_partial(CORRIDOR, {"upper": 0.75, "lower": 0.75}, "upper")

    def test_polynomial_partial(self):
        expr = Polynomial((MonomialTerm(2.0, {"a": 2, "b": 1}),))
        got = eval_partial(expr, {"a": 0.5, "b": 0.25}, "a")
        assert got == pytest.approx(2.0 * 2 * 0.5 * 0.25)


class TestClassify:
    def test_nonmonotone_escape_form_flagged(self):
        report = classify_cost(NonMonotoneAffine(3.0, {"commuters": -1.0}))
        assert not report.monotone
        assert report.c1_smooth_where_finite

    def test_affine_is_monotone_convex(self):
        report = classify_cost(Affine(1.0, {"a": 1.0, "b": 1.0}))
        assert report.monotone and report.convex

    def test_congestion_convex_on_finite_domain(self):
        report = classify_cost(CongestionRational({"a": 1.0, "b": 1.0}, 1.0), grid=101)
        assert report.monotone and report.convex
        assert report.samples_used > 0

    def test_cross_term_monomial_not_convex(self):
        report = classify_cost(Polynomial((MonomialTerm(1.0, {"a": 1, "b": 1}),)))
        assert report.monotone and not report.convex

    def test_affine_rejects_signed_coefficients(self):
        # signed slopes must go through the explicit escape form
        with pytest.raises(ValueError, match="NonMonotoneAffine"):
            Affine(3.0, {"a": -1.0})


def test_blowup_boundary_values_grow_without_bound():
    # grid refinement toward the congestion boundary: values exceed any bound
    for bound in (10.0, 1e3, 1e6):
        loads = 1.0 - np.logspace(-1, -9, 17)
        values = [
            eval_cost(CORRIDOR, {"upper": float(s) / 2, "lower": float(s) / 2})
            for s in loads
        ]
        assert any(v.finite is not None and v.finite > bound for v in values)
    assert eval_cost(CORRIDOR, {"upper": 0.5, "lower": 0.5}).is_infinite


def test_values_converge_along_sampled_sequences():
    # continuity into the extended reals, checked at interior limits
    rng = np.random.default_rng(19)
    names = ["a", "b"]
    for _ in range(100):
        expr = random_monotone_expr(rng, names)
        target = {n: float(rng.uniform(0.1, 0.9)) for n in names}
        limit = eval_cost(expr, target)
        if limit.is_infinite:
            continue
        for k in (1e-2, 1e-4, 1e-6, 1e-8):
            nearby = {n: v + k * (0.5 - rng.random()) for n, v in target.items()}
            value = eval_cost(expr, nearby)
            assert not value.is_infinite
            assert abs(value.finite - limit.finite) <= 1e3 * k + 1e-12


def test_serialization_round_trip():
    samples = [
        Constant(2.5),
        Affine(1.0, {"a": 2.0, "b": 0.5}),
        Polynomial((MonomialTerm(1.5, {"a": 2}), MonomialTerm(0.5, {"b": 1}))),
        CongestionRational({"a": 1.0, "b": 1.0}, 1.0),
        Sum((Constant(1.0), Affine(0.0, {"a": 3.0}))),
        Scale(2.0, CongestionRational({"a": 1.0}, 2.0)),
        NonMonotoneAffine(3.0, {"a": -1.0}),
    ]
    for expr in samples:
        assert cost_from_obj(cost_to_obj(expr)) == expr


def test_from_obj_rejects_malformed():
    with pytest.raises(ValueError):
        cost_from_obj({"kind": "mystery"})
    with pytest.raises(ValueError):
        cost_from_obj({"kind": "congestion", "weights": {"a": 1.0}})
    with pytest.raises(ValueError):
        cost_from_obj(["not", "a", "mapping"])


def test_compiled_matches_ast_evaluation():
    rng = np.random.default_rng(7)
    names = ["first", "second"]
    for _ in range(200):
        expr = random_monotone_expr(rng, names)
        fn = compile_scalar(expr, names)
        point = {n: float(rng.uniform(0, 1)) for n in names}
        fast = fn([point[n] for n in names])
        exact = eval_cost(expr, point)
        if exact.is_infinite:
            assert math.isinf(fast)
        else:
            assert fast == pytest.approx(exact.finite, rel=1e-12, abs=1e-12)
        vec = eval_array(expr, {n: np.array([point[n]]) for n in names})
        vec_value = float(np.asarray(vec).reshape(-1)[0])
        if exact.is_infinite:
            assert math.isinf(vec_value)
        else:
            assert vec_value == pytest.approx(exact.finite, rel=1e-12, abs=1e-12)

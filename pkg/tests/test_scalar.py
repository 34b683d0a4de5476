import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bellforge.errors import DomainError, UnboundParameterError
from bellforge.scalar import Param, cos, cot, parse_expr, sin, sqrt, tan

b = Param("b")


class TestEvaluate:
    def test_tan_squared(self):
        assert abs((tan(b) ** 2).evaluate({"b": np.pi / 4}) - 1) < 1e-14

    def test_pole_is_domain_error(self):
        with pytest.raises(DomainError):
            (1 / (2 * cos(b))).evaluate({"b": np.pi / 2})

    def test_sqrt_negative(self):
        with pytest.raises(DomainError):
            sqrt(b).evaluate({"b": -1.0})

    def test_unbound(self):
        with pytest.raises(UnboundParameterError):
            (b + 1).evaluate({})

    def test_singlet_c_formula(self):
        a2, b1, b2 = Param("a2"), Param("b1"), Param("b2")
        C = 2 * sin(a2) * sin(a2 - b1 - b2) / (sin(a2 - b1) * sin(a2 - b2))
        v = C.evaluate({"a2": np.pi / 2, "b1": np.pi / 4, "b2": 3 * np.pi / 4})
        assert abs(v - 4) < 1e-12

    def test_cot(self):
        assert abs(cot(b).evaluate({"b": 0.3}) - 1 / math.tan(0.3)) < 1e-14


class TestAlgebraOfExpressions:
    def test_zero_pruning(self):
        e = sin(b) - sin(b)
        assert e.is_zero

    def test_constant_folding(self):
        e = parse_expr("2*3 + 1")
        assert e.is_constant and e.constant_value() == 7

    def test_params(self):
        assert (sin(b) * Param("lam") ** 2).params() == {"b", "lam"}

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0.05, 1.5), st.floats(0.05, 1.5))
    def test_text_round_trip(self, x, y):
        e = sin(b) ** 2 / cos(Param("c")) + 3 * tan(b - Param("c")) - sqrt(b)
        back = parse_expr(str(e))
        env = {"b": x, "c": y}
        assert abs(back.evaluate(env) - e.evaluate(env)) < 1e-12 * max(1, abs(e.evaluate(env)))

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-3, 3), st.floats(-3, 3))
    def test_arithmetic_matches_floats(self, x, y):
        e = (b * b - 2 * Param("c")) * (b + 1) - Param("c") / 3
        ref = (x * x - 2 * y) * (x + 1) - y / 3
        assert abs(e.evaluate({"b": x, "c": y}) - ref) < 1e-10 * max(1, abs(ref))

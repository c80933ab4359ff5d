import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gfbounds import (
    EvalDomainError,
    ParseError,
    VectorFunction,
    eval_dual2,
    eval_dual2_batch,
    eval_value,
    eval_value_batch,
    parse_expr,
    to_source,
)
from gfbounds.expressions import BinOp, Call, Const, ExprAst, Neg, Var

from conftest import F1_EXPR, F2_EXPR, assert_close_fd, fd_gradient, fd_hessian


def _ast_strategy(arity):
    leaves = st.one_of(
        st.builds(Const, st.floats(0.0, 10.0, allow_nan=False)),
        st.builds(Var, st.integers(0, arity - 1)),
    )

    def extend(children):
        return st.one_of(
            st.builds(Neg, children),
            st.builds(BinOp, st.sampled_from("+-*/^"), children, children),
            st.builds(
                Call, st.sampled_from(["sin", "cos", "exp", "tanh", "atan"]), children
            ),
        )

    return st.recursive(leaves, extend, max_leaves=12)


class TestParsing:
    def test_f2_structure(self):
        ast = parse_expr(F2_EXPR, 1)
        assert ast.arity == 1
        assert isinstance(ast.root, BinOp) and ast.root.op == "+"
        assert ast.root.lhs == Var(0)
        assert isinstance(ast.root.rhs, BinOp) and ast.root.rhs.op == "/"

    def test_single_variable_with_wider_arity(self):
        ast = parse_expr("x1", 3)
        assert ast.root == Var(0)
        assert ast.arity == 3

    def test_trailing_operator_position(self):
        with pytest.raises(ParseError) as err:
            parse_expr("x1 + ", 1)
        assert err.value.position == 5

    @pytest.mark.parametrize(
        "source",
        ["", "   ", "x1 +* x1", "(x1", "1 2", "sin(x1", "x1)"],
    )
    def test_malformed_inputs(self, source):
        with pytest.raises(ParseError):
            parse_expr(source, 1)

    @pytest.mark.parametrize("source", ["y1", "foo", "sin", "x"])
    def test_unknown_identifier(self, source):
        with pytest.raises(ParseError, match="unknown"):
            parse_expr(source, 2)

    def test_unknown_function(self):
        with pytest.raises(ParseError, match="unknown function"):
            parse_expr("foo(x1)", 1)

    @pytest.mark.parametrize("source,arity", [("x3", 2), ("x0", 1), ("x12", 4)])
    def test_variable_out_of_range(self, source, arity):
        with pytest.raises(ParseError, match="out of range"):
            parse_expr(source, arity)

    def test_bad_character_position(self):
        with pytest.raises(ParseError) as err:
            parse_expr("x1 + $", 1)
        assert err.value.position == 5

    @pytest.mark.parametrize(
        "source,point,expected",
        [
            ("2*x1^2", [3.0], 18.0),  # ^ binds tighter than *
            ("-x1^2", [2.0], -4.0),  # ^ binds tighter than unary minus
            ("2^3^2", [0.0], 512.0),  # ^ is right-associative
            ("6/3/2", [0.0], 1.0),  # / is left-associative
            ("1 - 2 - 3", [0.0], -4.0),
            ("x1^-2", [2.0], 0.25),  # negated exponent via unary minus
            ("2*-x1", [3.0], -6.0),
            ("1.5e2 + .5", [0.0], 150.5),
        ],
    )
    def test_precedence_and_literals(self, source, point, expected):
        fn = VectorFunction.parse([source], 1)
        assert eval_value(fn, point)[0] == pytest.approx(expected, abs=1e-12)


class TestSerialization:
    @pytest.mark.parametrize(
        "source",
        [
            F1_EXPR,
            F2_EXPR,
            "sin(x1)*exp(x2/2) - tanh(x1*x2)",
            "-x1^2 + sqrt(1 + x2^2)",
            "atan(x1) / (2 - cos(x2))",
            "x1^-2 + 1e-3*x2",
        ],
    )
    def test_round_trip(self, source):
        ast = parse_expr(source, 2)
        assert parse_expr(to_source(ast), 2) == ast

    @given(_ast_strategy(3))
    @settings(max_examples=200, deadline=None)
    def test_round_trip_random_trees(self, node):
        ast = ExprAst(node, 3)
        assert parse_expr(to_source(ast), 3) == ast


class TestValueEvaluation:
    def test_benchmark_values_at_origin(self):
        f2 = VectorFunction.parse([F2_EXPR], 1)
        f1 = VectorFunction.parse([F1_EXPR], 1)
        assert eval_value(f2, [0.0])[0] == 0.0
        assert eval_value(f1, [0.0])[0] == 0.5

    def test_f1_grid_against_direct_arithmetic(self):
        fn = VectorFunction.parse([F1_EXPR], 1)
        grid = np.linspace(-8.0, 8.0, 64)
        got = eval_value_batch(fn, grid[:, None])[:, 0]
        expected = grid + (1.0 + grid) / (2.0 * (1.0 + grid**4))
        np.testing.assert_allclose(got, expected, rtol=1e-14)

    def test_domain_error_reports_component(self):
        fn = VectorFunction.parse(["x1", "log(x1)"], 1)
        with pytest.raises(EvalDomainError, match="component 2"):
            eval_value(fn, [-1.0])

    @pytest.mark.parametrize(
        "source,point",
        [
            ("sqrt(x1)", [-2.0]),
            ("x1^0.5", [-1.0]),
            ("exp(x1)", [1000.0]),  # overflow is flagged, never silent
            ("1/x1", [0.0]),
        ],
    )
    def test_bad_evaluations_raise(self, source, point):
        fn = VectorFunction.parse([source], 1)
        with pytest.raises(EvalDomainError):
            eval_value(fn, point)

    def test_sqrt_at_zero_value_only(self):
        fn = VectorFunction.parse(["sqrt(x1)"], 1)
        assert eval_value(fn, [0.0])[0] == 0.0

    def test_vector_function_validation(self):
        with pytest.raises(ValueError):
            VectorFunction(
                (parse_expr("x1", 1), parse_expr("x1 + x2", 2))
            )
        with pytest.raises(ValueError):
            VectorFunction(())


class TestDerivatives:
    def test_polynomial_jet(self):
        fn = VectorFunction.parse(["x1^2"], 1)
        dual = eval_dual2(fn, [3.0])[0]
        assert dual.value == 9.0
        np.testing.assert_array_equal(dual.gradient, [6.0])
        np.testing.assert_array_equal(dual.hessian, [[2.0]])

    def test_f1_gradient_at_origin(self):
        fn = VectorFunction.parse([F1_EXPR], 1)
        dual = eval_dual2(fn, [0.0])[0]
        fd = fd_gradient(lambda p: eval_value(fn, p)[0], [0.0])
        assert dual.gradient[0] == pytest.approx(1.5, abs=1e-9)
        assert_close_fd(dual.gradient, fd)

    def test_composite_hessian_against_finite_differences(self):
        # h(f(x1) + x2) with h(y) = y^2/2 and the rational benchmark drift
        fn = VectorFunction.parse([f"(({F2_EXPR}) + x2)^2/2"], 2)
        point = [0.3, -0.1]
        dual = eval_dual2(fn, point)[0]
        fd = fd_hessian(lambda p: eval_value(fn, p)[0], point)
        assert_close_fd(dual.hessian, fd, rtol=1e-6)

    def test_sqrt_not_differentiable_at_zero(self):
        fn = VectorFunction.parse(["sqrt(x1)"], 1)
        with pytest.raises(EvalDomainError):
            eval_dual2(fn, [0.0])

    FD_EXPRESSIONS = [
        F1_EXPR,
        F2_EXPR.replace("x1", "x2"),
        "sin(x1)*exp(x2/2)",
        "tanh(x1) + atan(x2)*x1",
        "sqrt(1 + x1^2) / (2 + cos(x2))",
        "log(1 + x1^2) - x2*x1^3",
        "x1^3 - 2*x1*x2 + x2^2",
        "(x1 + x2)^4 / (1 + x1^2 + x2^2)",
    ]

    @pytest.mark.parametrize("source", FD_EXPRESSIONS)
    def test_gradient_and_hessian_match_finite_differences(self, source):
        fn = VectorFunction.parse([source], 2)
        rng = np.random.default_rng(1234)
        points = rng.standard_normal((100, 2))
        vals, jac, hess = eval_dual2_batch(fn, points)
        func = lambda p: eval_value(fn, p)[0]  # noqa: E731
        for idx in range(points.shape[0]):
            assert_close_fd(jac[idx, 0], fd_gradient(func, points[idx]), atol=1e-8)
            assert_close_fd(hess[idx, 0], fd_hessian(func, points[idx]), rtol=2e-5)

    def test_hessian_bitwise_symmetric(self):
        fn = VectorFunction.parse(self.FD_EXPRESSIONS, 2)
        rng = np.random.default_rng(7)
        points = rng.standard_normal((256, 2))
        _, _, hess = eval_dual2_batch(fn, points)
        assert np.array_equal(hess, hess.swapaxes(-1, -2))

    def test_value_channel_equals_plain_evaluation(self):
        fn = VectorFunction.parse(self.FD_EXPRESSIONS, 2)
        rng = np.random.default_rng(42)
        points = rng.standard_normal((512, 2))
        vals, _, _ = eval_dual2_batch(fn, points)
        assert np.array_equal(vals, eval_value_batch(fn, points))

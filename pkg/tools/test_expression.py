import math

import numpy as np
import pytest

from swerate.exceptions import ArityError, ExpressionEvalError, ExpressionSyntaxError, UnknownIdentifierError
from swerate.expression import (
    FUNCTION_ARITY,
    BinOp,
    Call,
    Expression,
    Neg,
    Num,
    Pow,
    Var,
    eval_expression,
    parse_expression,
    to_source,
)


def test_simple_sum_with_function():
    e = parse_expression("2 + sin(x)")
    assert e(0.3) == pytest.approx(2.0 + math.sin(0.3), abs=1e-15)


def test_identity():
    assert parse_expression("x")(0.37) == 0.37


def test_sine_of_pi_x():
    assert parse_expression("sin(3.141592653589793*x)")(0.5) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize(
    "src, x, expected",
    [
        ("0", 12.5, 0.0),
        ("x*x - x", 1.0, 0.0),
        ("exp(x)", 1.0, 2.718281828459045),
        ("2+3*4", 0.0, 14.0),
        ("(2+3)*4", 0.0, 20.0),
        ("-x^2", 3.0, -9.0),
        ("x**3", 2.0, 8.0),
        ("2^-1", 0.0, 0.5),
        ("max(x, 1) - min(x, 1)", 3.0, 2.0),
        ("abs(-x) + tanh(0)", 1.5, 1.5),
        ("1e-3 * x", 2.0, 2e-3),
    ],
)
def test_evaluation(src, x, expected):
    assert eval_expression(parse_expression(src), x) == pytest.approx(expected, abs=1e-12)


def test_vectorised_evaluation():
    xs = np.linspace(-1.0, 1.0, 7)
    np.testing.assert_allclose(parse_expression("x*x")(xs), xs * xs)
    assert parse_expression("2")(xs).shape == xs.shape


@pytest.mark.parametrize("src, offset", [("2 +", 3), ("2 $ 3", 2), ("(x", 2), ("x)", 1)])
def test_syntax_errors_carry_offset(src, offset):
    with pytest.raises(ExpressionSyntaxError) as info:
        parse_expression(src)
    assert info.value.offset == offset


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifierError) as info:
        parse_expression("1 + foo(x)")
    assert info.value.offset == 4


def test_function_set():
    assert set(FUNCTION_ARITY) == {"sin", "cos", "exp", "tanh", "abs", "min", "max"}
    for src in ("log(x)", "sqrt(x)"):
        with pytest.raises(UnknownIdentifierError):
            parse_expression(src)


@pytest.mark.parametrize("src", ["sin(x, x)", "min(x)", "cos()"])
def test_arity(src):
    with pytest.raises(ArityError):
        parse_expression(src)


def test_empty_source_rejected():
    with pytest.raises(ExpressionSyntaxError):
        parse_expression("   ")


def test_division_by_zero_is_an_error():
    with pytest.raises(ExpressionEvalError):
        parse_expression("1/x")(0.0)


def test_overflow_is_an_error():
    with pytest.raises(ExpressionEvalError):
        parse_expression("exp(x)")(1000.0)


def test_derivatives_are_exact():
    e = parse_expression("sin(x)*x^2 + exp(-x)")
    x = np.array([-0.7, 0.1, 1.3])
    value, deriv = e.with_derivative(x)
    np.testing.assert_allclose(value, np.sin(x) * x ** 2 + np.exp(-x), rtol=1e-14)
    np.testing.assert_allclose(deriv, np.cos(x) * x ** 2 + 2 * x * np.sin(x) - np.exp(-x), rtol=1e-13)


def test_constant_detection():
    assert parse_expression("2 + sin(1)").is_constant()
    assert not parse_expression("0*x").is_constant()


def _random_tree(rng, depth):
    if depth == 0 or rng.uniform() < 0.2:
        return Var() if rng.uniform() < 0.6 else Num(float(np.round(rng.normal(), 3)))
    kind = rng.integers(4)
    if kind == 0:
        return BinOp(str(rng.choice(["+", "-", "*"])), _random_tree(rng, depth - 1), _random_tree(rng, depth - 1))
    if kind == 1:
        return Call(str(rng.choice(["sin", "cos", "tanh"])), (_random_tree(rng, depth - 1),))
    if kind == 2:
        return Pow(_random_tree(rng, depth - 1), int(rng.integers(0, 3)))
    return Neg(_random_tree(rng, depth - 1))


def test_print_parse_round_trip():
    rng = np.random.default_rng(7)
    xs = rng.uniform(-1.0, 1.0, 100)
    for _ in range(50):
        tree = Expression(_random_tree(rng, 4), "generated")
        again = parse_expression(to_source(tree.root))
        np.testing.assert_allclose(again(xs) * np.ones_like(xs), tree(xs) * np.ones_like(xs), rtol=1e-12, atol=1e-12)

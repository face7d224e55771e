"""Tests for scaled matrices and precision reals"""

import math

import numpy as np
import pytest

from thuemorse_lab.errors import ConfigError
from thuemorse_lab.numerics import (
    PrecisionReal,
    ScaledMat2,
    ScaledReal,
    as_precision,
    log_norm,
    mp_context,
    product_log_norm,
    relative_difference,
    scaled_mul,
    with_precision,
)
from thuemorse_lab.transfer import U


def test_scaled_mul_identity_and_powers_of_two():
    eye = ScaledMat2.identity()
    product = scaled_mul(eye, eye)
    assert product.exp2 == 0
    assert np.array_equal(product.m, np.eye(2))

    two = ScaledMat2(np.eye(2), 1)
    four = scaled_mul(two, two)
    assert four.exp2 == 2
    assert np.array_equal(four.m, np.eye(2))


def test_from_array_normalizes_mantissa():
    a = ScaledMat2.from_array([[1e300, 0.0], [0.0, 3.0]])
    peak = float(np.max(np.abs(a.m)))
    assert 1.0 <= peak < 2.0
    assert np.allclose(a.to_array(), [[1e300, 0.0], [0.0, 3.0]], rtol=1e-15)


def test_log_norm_examples():
    assert log_norm(ScaledMat2.identity()) == 0.0
    assert abs(log_norm(ScaledMat2.from_array([[2.0, 0.0], [0.0, 0.5]])) - math.log(2.0)) < 1e-15
    assert abs(log_norm(ScaledMat2.from_array(U))) < 1e-15


def test_log_norm_zero_matrix():
    with pytest.raises(ValueError, match="log of zero norm"):
        log_norm(ScaledMat2.from_array(np.zeros((2, 2))))


def _random_sl2(rng):
    while True:
        a, b, c = rng.uniform(-3, 3, size=3)
        if abs(a) > 0.1:
            return np.array([[a, b], [c, (1 + b * c) / a]])


def test_long_product_matches_bigfloat_oracle():
    rng = np.random.default_rng(7)
    matrices = [_random_sl2(rng) for _ in range(4096)]
    ctx = mp_context(512)
    acc = ctx.eye(2)
    for mat in matrices:
        acc = ctx.matrix(mat.tolist()) * acc
    a, b, c, d = acc[0, 0], acc[0, 1], acc[1, 0], acc[1, 1]
    frob = a * a + b * b + c * c + d * d
    det = a * d - b * c
    oracle = float(ctx.log((frob + ctx.sqrt(frob * frob - 4 * det * det)) / 2) / 2)
    value = product_log_norm(matrices)
    assert abs(value - oracle) <= 1e-6 * abs(oracle)


def test_submultiplicative_and_inverse_norm():
    rng = np.random.default_rng(3)
    for _ in range(50):
        a = ScaledMat2.from_array(_random_sl2(rng), int(rng.integers(-40, 40)))
        b = ScaledMat2.from_array(_random_sl2(rng), int(rng.integers(-40, 40)))
        assert log_norm(scaled_mul(a, b)) <= log_norm(a) + log_norm(b) + 1e-9
        unit = ScaledMat2.from_array(_random_sl2(rng))
        assert abs(log_norm(unit) - log_norm(unit.inverse())) < 1e-9
        assert log_norm(unit) >= -1e-12


def test_scaled_real_round_trip():
    for x in (1.0, -3.25, 2.0 ** -500, 2.0 ** 500 * 1.75, 0.1, -7e-120):
        assert ScaledReal.from_float(x).to_float() == x
    assert ScaledReal.from_float(0.0).to_float() == 0.0


def test_relative_difference():
    a = ScaledMat2.from_array([[1.0, 2.0], [3.0, 4.0]], 10)
    assert relative_difference(a, a) == 0.0
    b = ScaledMat2.from_array([[1.0, 2.0], [3.0, 4.5]], 10)
    assert relative_difference(a, b) == pytest.approx(0.5 / 4.5)
    assert relative_difference(a, ScaledMat2.from_array(a.m, a.exp2 + 200)) == pytest.approx(1.0)


def test_scaled_real_from_mpf_and_trace():
    ctx = mp_context(256)
    huge = ctx.ldexp(ctx.mpf(3), 5000)
    scaled = ScaledReal.from_mpf(huge, ctx)
    assert (scaled.mantissa, scaled.exp2) == (1.5, 5001)
    assert ScaledReal.from_mpf(ctx.mpf(-0.375), ctx).to_float() == -0.375
    assert ScaledReal.from_mpf(ctx.mpf(0), ctx) == ScaledReal(0.0, 0)
    trace = ScaledMat2.from_array([[1.5, 0.0], [0.0, 1.5]], 3000).trace()
    assert (trace.mantissa, trace.exp2) == (1.5, 3001)


def test_with_precision_examples():
    x = PrecisionReal.parse("1.5", 256)
    narrowed = with_precision(x, 128)
    assert narrowed.prec_bits == 128
    assert narrowed.value == 1.5

    third = PrecisionReal.parse("1/3", 128)
    widened = with_precision(third, 256)
    assert widened.prec_bits == 256
    assert widened.value == third.value

    pi = PrecisionReal(mp_context(1024).pi, 1024)
    short = with_precision(pi, 64)
    ctx = mp_context(1024)
    assert abs(ctx.mpf(short.value) - pi.value) / pi.value < ctx.ldexp(1, -63)


def test_with_precision_rejects_low_bits():
    with pytest.raises(ConfigError):
        with_precision(as_precision("1"), 32)
    with pytest.raises(ConfigError):
        PrecisionReal(1, 16)


def test_parse_forms():
    assert float(PrecisionReal.parse("sqrt3")) == pytest.approx(math.sqrt(3), rel=1e-15)
    assert float(PrecisionReal.parse("-sqrt5")) == pytest.approx(-math.sqrt(5), rel=1e-15)
    assert float(PrecisionReal.parse("3/4")) == 0.75
    with pytest.raises(ConfigError):
        PrecisionReal.parse("not-a-number")


def test_precision_arithmetic_uses_common_bits():
    a = as_precision("1", 128)
    b = as_precision("2", 256)
    total = a + b
    assert total.prec_bits == 128
    assert float(total) == 3.0
    assert (b - a).sign() == 1
    assert (a - b) < 0
    assert hash(as_precision("1", 256)) == hash(as_precision("1", 256))

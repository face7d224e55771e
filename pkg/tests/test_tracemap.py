"""Tests for trace polynomials and the auxiliary sequences"""

import math

import numpy as np
import pytest

from thuemorse_lab.errors import (
    ConfigError,
    NotCandidateError,
    PrecisionExhaustedError,
    ZeroCouplingError,
    ZeroEnergyError,
)
from thuemorse_lab.numerics import PrecisionReal, as_precision
from thuemorse_lab.tracemap import (
    check_trace_bounds,
    coupling_angle,
    eventual_sign,
    invariant_residuals,
    trace_derivatives,
    trace_seq,
)
from thuemorse_lab.transfer import transfer_product_exact


def test_seeds_at_unit_coupling():
    one = as_precision("1")
    seq = trace_seq(as_precision("0"), one, 4)
    assert [float(t) for t in seq.t] == [-3.0, 3.0, 11.0, 9.0 * 9.0 + 2.0]
    assert float(seq.mu[0]) == -2.0
    assert float(seq.nu[0]) == 0.0


def test_sqrt3_traces_become_two():
    seq = trace_seq(PrecisionReal.parse("sqrt3"), as_precision("1"), 10)
    assert abs(seq.trace(1)) < 1e-70
    assert float(seq.trace(2)) == pytest.approx(-6.0, abs=1e-60)
    for n in range(3, 11):
        assert abs(seq.trace(n) - 2) < 1e-60


def test_traces_match_transfer_products():
    E, lam = as_precision("0.731"), as_precision("0.8")
    seq = trace_seq(E, lam, 8)
    for n in range(1, 9):
        T = transfer_product_exact(E, lam, 0, 2 ** n)
        assert abs(T[0, 0] + T[1, 1] - seq.trace(n)) < 1e-40 * max(1, abs(T[0, 0]), abs(T[0, 1]), abs(T[1, 0]), abs(T[1, 1]))


@pytest.mark.parametrize("energy,coupling", [("0.3", "1"), ("-1.7", "0.5"), ("2.2", "2"), ("1.1", "0.25")])
def test_invariant_residuals_are_tiny(energy, coupling):
    seq = trace_seq(as_precision(energy), as_precision(coupling), 14, on_exhaustion="truncate")
    for r in invariant_residuals(seq):
        assert r.value < 2.0 ** -100


def test_invariant_residuals_on_random_samples():
    rng = np.random.default_rng(100)
    for e, c in zip(rng.uniform(-4.0, 4.0, 100), rng.uniform(0.2, 3.0, 100)):
        E, lam = PrecisionReal.from_float(float(e), 256), PrecisionReal.from_float(float(c), 256)
        seq = trace_seq(E, lam, 14, on_exhaustion="truncate")
        assert all(r.value < 2.0 ** -100 for r in invariant_residuals(seq)), (e, c)


def test_derivatives_match_finite_differences():
    lam = as_precision("1")
    E = as_precision("1.3")
    h = as_precision("1e-30")
    t, dt = trace_derivatives(E, lam, 6)
    t_plus, _ = trace_derivatives(E + h, lam, 6)
    for n in range(6):
        slope = (t_plus[n] - t[n]) / h.value
        assert abs(slope - dt[n]) <= 1e-20 * max(1, abs(dt[n]))


def test_exhaustion_modes():
    E = PrecisionReal.parse("1.5716142", 64)
    lam = as_precision("1", 64)
    with pytest.raises(PrecisionExhaustedError) as info:
        trace_seq(E, lam, 30)
    assert info.value.exit_code == 5
    truncated = trace_seq(E, lam, 30, on_exhaustion="truncate")
    assert truncated.N == truncated.reliable_until < 30


def test_argument_errors():
    one = as_precision("1")
    with pytest.raises(ZeroCouplingError):
        trace_seq(one, as_precision("0"), 5)
    with pytest.raises(ConfigError):
        trace_seq(one, one, 1)
    with pytest.raises(ConfigError):
        trace_seq(one, one, 5, on_exhaustion="ignore")


def test_coupling_angle():
    E, lam = as_precision("1.5716142"), as_precision("1")
    angle = coupling_angle(E, lam)
    kappa = (1.5716142 ** 2 - 1) / (2 * 1.5716142)
    assert float(angle.kappa) == pytest.approx(kappa, rel=1e-14)
    assert float(angle.theta) == pytest.approx(math.asin(kappa), rel=1e-14)
    with pytest.raises(ZeroEnergyError):
        coupling_angle(as_precision("0"), lam)
    with pytest.raises(NotCandidateError):
        coupling_angle(as_precision("3"), lam)


def test_trace_bounds_inside_spectrum():
    root3 = PrecisionReal.parse("sqrt3")
    seq = trace_seq(root3, as_precision("1"), 10)
    assert check_trace_bounds(seq, 10) == []
    outside = trace_seq(as_precision("0"), as_precision("1"), 6)
    assert check_trace_bounds(outside, 6) == [2, 3, 4, 5]


def test_eventual_sign():
    assert eventual_sign([1, -2, -3, -4]) == (-1, True)
    assert eventual_sign([1, -2, 3]) == (1, False)
    with pytest.raises(ValueError):
        eventual_sign([])

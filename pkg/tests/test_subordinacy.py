"""Tests for half-line solutions, length scales and local-dimension indicators"""

import math

import pytest

from thuemorse_lab.asymptotics import angle_distance, sign_bookkeeping
from thuemorse_lab.errors import ConfigError, RangeExceededError
from thuemorse_lab.numerics import PrecisionReal, as_precision, mp_context
from thuemorse_lab.subordinacy import (
    class_angle,
    classify_trend,
    default_eps_grid,
    half_line_solution,
    length_scale,
    local_dim_indicator,
    m_magnitude,
    subordinate_angle,
    truncated_norm,
)
from thuemorse_lab.tracemap import trace_seq


@pytest.fixture(scope="module")
def root3():
    return PrecisionReal.parse("sqrt3")


def test_boundary_condition(one):
    u = half_line_solution(as_precision("0.5"), one, 0.3, 50)
    assert u.n_max == 50
    assert float(u.values[0]) == pytest.approx(-math.sin(0.3), abs=1e-15)
    assert float(u.values[1]) == pytest.approx(math.cos(0.3), abs=1e-15)
    assert u.boundary_residual() < 1e-70


def test_solutions_are_linear_in_the_angle(one):
    E = as_precision("0.5")
    beta = 0.7
    u = half_line_solution(E, one, beta, 40)
    p = half_line_solution(E, one, 0.0, 40)
    q = half_line_solution(E, one, PrecisionReal(mp_context(256).pi / 2), 40)
    for n in range(41):
        combined = math.cos(beta) * p.values[n] + math.sin(beta) * q.values[n]
        assert abs(u.values[n] - combined) <= 1e-12 * max(1, abs(u.values[n]))


def test_truncated_norm(one):
    u = half_line_solution(as_precision("0.5"), one, 0.3, 20)
    squares = [v ** 2 for v in u.values]
    assert float(truncated_norm(u, 5)) == pytest.approx(math.sqrt(float(sum(squares[1:6]))), rel=1e-14)
    half = float(truncated_norm(u, 5.5)) ** 2
    assert half == pytest.approx(float(sum(squares[1:6]) + 0.5 * squares[6]), rel=1e-14)
    with pytest.raises(RangeExceededError, match="L beyond computed range"):
        truncated_norm(u, 25)


def test_length_scale_solves_defining_equation(one, root3):
    for eps in (0.1, 0.02, 0.005):
        scale = length_scale(root3, one, math.pi / 4, eps, max_length=2048)
        assert scale.L >= 1
        assert not scale.clamped
        assert scale.residual < 1e-20


def test_length_scale_limits(one, root3):
    clamped = length_scale(root3, one, math.pi / 4, 10.0, max_length=64)
    assert clamped.clamped and clamped.L == 1
    with pytest.raises(RangeExceededError, match="epsilon too small for range"):
        length_scale(root3, one, math.pi / 4, 1e-12, max_length=256)
    with pytest.raises(ConfigError):
        length_scale(root3, one, math.pi / 4, 0.0)


def test_m_magnitudes_of_orthogonal_angles_are_reciprocal(one, root3):
    pi = mp_context(256).pi
    beta = PrecisionReal(pi / 4)
    perp = PrecisionReal(3 * pi / 4)
    product = m_magnitude(root3, one, beta, 0.01, 2048) * m_magnitude(root3, one, perp, 0.01, 2048)
    assert product == pytest.approx(1.0, rel=1e-12)


def test_subordinate_angle_at_type2_energy(one, type2_hunt):
    E = type2_hunt.energy
    eta = sign_bookkeeping(trace_seq(E, one, 10, on_exhaustion="truncate"), "TypeII").eta
    beta = subordinate_angle(E, one, 1024)
    assert angle_distance(beta, -eta * math.pi / 4) < 1e-4


def test_class_angles(one, root3, gamma_hunt):
    assert float(class_angle(root3, one, "TypeI")) == pytest.approx(math.pi / 4, abs=1e-15)
    snapped = float(class_angle(gamma_hunt.energy, gamma_hunt.coupling, "TypeIII"))
    assert snapped in (0.0, pytest.approx(math.pi / 2, abs=1e-15))
    with pytest.raises(ConfigError):
        class_angle(root3, one, "Undetermined")


def test_classify_trend():
    assert classify_trend(-0.3, 0.1) == "diverging"
    assert classify_trend(0.3, 0.1) == "vanishing"
    assert classify_trend(0.05, 0.1) == "bounded"


def test_default_grid():
    grid = default_eps_grid()
    assert grid[0] == 2.0 ** -4
    assert grid[-1] == 2.0 ** -40


def test_type1_indicator_vanishes(one, root3):
    report = local_dim_indicator(root3, one, 0.5, energy_class="TypeI")
    assert report.beta == pytest.approx(math.pi / 4)
    assert report.trend == "vanishing"
    assert len(report.rows) >= 2
    assert report.to_dict()["dropped_epsilons"] == report.dropped


def test_type2_indicator_diverges(one, type2_hunt):
    report = local_dim_indicator(type2_hunt.energy, one, 0.95, energy_class="TypeII")
    assert report.trend == "diverging"


def test_type3_gamma_coupling_indicator_vanishes(gamma_hunt):
    report = local_dim_indicator(gamma_hunt.energy, gamma_hunt.coupling, 1.0, energy_class="TypeIII")
    assert report.trend == "vanishing"
    assert all(r["M_proxy"] <= 1 + 1e-12 for r in report.rows)


def test_indicator_arguments(one, root3):
    with pytest.raises(ConfigError):
        local_dim_indicator(root3, one, 0.0, beta=0.3)
    with pytest.raises(ConfigError):
        local_dim_indicator(root3, one, 0.5)

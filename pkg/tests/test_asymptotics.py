"""Tests for growth rates, limit laws, stable directions and solution profiles"""

import math

import numpy as np
import pytest

from thuemorse_lab.asymptotics import (
    angle_distance,
    direction_laws,
    envelope_check,
    estimate_gamma,
    expected_directions,
    expected_refined,
    fingerprint,
    fit_alpha,
    index_reflection_residual,
    oscillation,
    reflection_symmetry,
    sign_bookkeeping,
    solution_profile,
    stable_direction,
    structure_limits,
)
from thuemorse_lab.errors import ConfigError, NotAsymptoticError
from thuemorse_lab.numerics import PrecisionReal
from thuemorse_lab.subordinacy import class_angle
from thuemorse_lab.tracemap import coupling_angle, trace_seq
from thuemorse_lab.transfer import norm_profile


@pytest.fixture(scope="module")
def type3(one, type3_hunt):
    E = type3_hunt.energy
    seq = trace_seq(E, one, 14, on_exhaustion="truncate")
    return E, seq, estimate_gamma(seq, "TypeIII")


@pytest.fixture(scope="module")
def type2(one, type2_hunt):
    E = type2_hunt.energy
    seq = trace_seq(E, one, 14, on_exhaustion="truncate")
    return E, seq, estimate_gamma(seq, "TypeII")


def test_type3_gamma(type3):
    _, _, estimate = type3
    assert estimate.value == pytest.approx(1.2325, rel=1e-2)
    assert all(abs(gap - math.log(2)) < 0.5 for _, gap in estimate.gaps)
    assert estimate.to_dict()["type"] == "TypeIII"


def test_type2_gamma(type2):
    _, _, estimate = type2
    assert estimate.value > 0
    assert len(estimate.residuals) >= 3
    assert abs(estimate.gaps[-1][1] - math.log(2)) < 0.5


def test_type3_gap_corrections_shrink(type3):
    _, _, estimate = type3
    deviations = [abs(gap - math.log(2)) for n, gap in estimate.gaps if n <= 3]
    assert len(deviations) == 3
    assert all(a > b for a, b in zip(deviations, deviations[1:]))


@pytest.mark.parametrize("which,levels", [("type2", (4, 5)), ("type3", (3, 4))])
def test_refined_products(request, one, which, levels):
    E, _, estimate = request.getfixturevalue(which)
    theta = float(coupling_angle(E, one).theta)
    expected = expected_refined(estimate.type_tag, theta)
    for key, rows in estimate.refined.items():
        values = dict(rows)
        for n in levels:
            assert values[n] == pytest.approx(expected[key], rel=0.1), (key, n)


def test_gamma_needs_asymptotic_levels(one):
    seq = trace_seq(PrecisionReal.parse("sqrt3"), one, 14)
    with pytest.raises(NotAsymptoticError, match="not asymptotic regime"):
        estimate_gamma(seq, "TypeIII")
    with pytest.raises(ConfigError):
        estimate_gamma(seq, "TypeI")


def test_type3_structure_laws(one, type3):
    E, _, _ = type3
    report = structure_limits(E, one, "TypeIII", 4)
    for name in ("even", "odd_A", "odd_B"):
        rows = report.residuals[name]
        assert rows[-1][1] < rows[0][1]
    assert abs(report.constants["c"][-1][1]) == pytest.approx(math.sqrt(2) / 2, rel=0.05)
    c = [value for _, value in report.constants["c"]]
    assert c[-2] == pytest.approx(c[-1], rel=0.1)
    payload = report.to_dict()
    assert payload["eta_hat"] in (-1, 1)
    assert set(payload["structure_residuals"]) == {"even", "odd_A", "odd_B"}


def test_type2_structure_laws(one, type2):
    E, _, _ = type2
    report = structure_limits(E, one, "TypeII", 4)
    for name in ("odd", "even_A", "even_B"):
        rows = report.residuals[name]
        assert rows[-1][1] < rows[0][1]
    for name in ("c", "c_hat"):
        values = [value for _, value in report.constants[name]]
        assert values[-2] == pytest.approx(values[-1], rel=0.1), name
    ratio = report.constants["b2a_ratio"][-1][1]
    target = report.constants["b2a_target"][-1][1]
    assert ratio == pytest.approx(target, rel=0.05)


def test_type3_stable_directions(one, type3):
    E, seq, _ = type3
    pair = stable_direction(E, one, "TypeIII", 4)
    assert pair.resolution < 1e-7
    first, second = expected_directions(E, one, "TypeIII", sign_bookkeeping(seq, "TypeIII"))
    assert angle_distance(pair.angle_s, first) < 1e-6
    assert angle_distance(pair.angle_s_hat, second) < 1e-6
    theta = float(coupling_angle(E, one).theta)
    cross = abs(pair.s[0] * pair.s_hat[1] - pair.s[1] * pair.s_hat[0])
    assert cross == pytest.approx(abs(math.cos(theta)), abs=1e-6)


def test_type2_stable_directions(one, type2):
    E, seq, _ = type2
    eta = sign_bookkeeping(seq, "TypeII").eta
    pair = stable_direction(E, one, "TypeII", 5)
    assert angle_distance(pair.angle_s, -eta * math.pi / 4) < 1e-6
    assert angle_distance(pair.angle_s_hat, eta * math.pi / 4) < 1e-6
    assert np.allclose(np.abs(pair.s), [math.sqrt(0.5)] * 2, atol=1e-6)


def test_direction_laws(one, type2, type3):
    E2, _, _ = type2
    laws = direction_laws(E2, one, "TypeII", 4, stable_direction(E2, one, "TypeII", 5))
    report = structure_limits(E2, one, "TypeII", 4)
    c_hat = abs(dict(report.constants["c_hat"])[3])
    assert laws["even_decay"][2][1] < laws["even_decay"][0][1]
    assert laws["const_limit"][2][1] == pytest.approx(c_hat, rel=0.05)
    assert laws["const_parallel"][2][1] < 1e-3

    E3, _, _ = type3
    laws = direction_laws(E3, one, "TypeIII", 4)
    assert laws["addition"][2][1] == pytest.approx(math.sqrt(2) / 2, rel=0.05)
    assert laws["addition_parallel"][2][1] < 1e-3


def test_direction_depth_validation(one, type3):
    E, _, _ = type3
    with pytest.raises(ConfigError):
        stable_direction(E, one, "TypeIII", 1)


def test_type2_solution_profile(one, type2):
    E, seq, estimate = type2
    eta = sign_bookkeeping(seq, "TypeII").eta
    angle = class_angle(E, one, "TypeII")
    assert float(angle) == pytest.approx(-eta * math.pi / 4, abs=1e-15)

    profile = solution_profile(E, one, angle, 1024)
    assert profile.fitted_decay_rate == pytest.approx(estimate.value, rel=0.25)
    assert reflection_symmetry(profile, eta) < 1e-20
    assert len(profile.samples) == 2 * 1024 + 1

    for offset in (0.1, -0.1):
        other = solution_profile(E, one, float(angle) + offset, 1024)
        assert all(v >= estimate.value / 4 * math.sqrt(n) - 2 for n, v in other.samples if 256 <= n <= 1024)


def test_type3_index_reflection(one, type3):
    E, _, _ = type3
    pair = stable_direction(E, one, "TypeIII", 4)
    assert index_reflection_residual(E, one, pair.s_exact, 256) < 1e-20


def test_type3_envelope_and_oscillation(one, type3):
    E, _, estimate = type3
    profile = norm_profile(E, one, 4096)
    report = envelope_check(E, one, profile, estimate, "TypeIII")
    assert report.C >= 1
    assert report.block_violations == []
    assert report.envelope_violations == []
    assert report.c1 <= report.c2
    osc = report.oscillation
    assert osc["even"][-1] == pytest.approx(estimate.value, abs=0.05)
    assert osc["odd"][-1] == pytest.approx(estimate.value / math.sqrt(2), abs=0.05)
    assert osc["expected_odd"] == pytest.approx(estimate.value / math.sqrt(2))


def test_type2_envelope(one, type2):
    E, _, estimate = type2
    report = envelope_check(E, one, norm_profile(E, one, 4096), estimate, "TypeII")
    assert report.block_violations == []
    assert report.envelope_violations == []
    assert report.alpha == pytest.approx(math.log(report.C) / math.log(2))
    assert report.oscillation["expected_odd"] == pytest.approx(math.sqrt(2) * estimate.value)


def test_type1_envelope(one):
    root3 = PrecisionReal.parse("sqrt3")
    report = envelope_check(root3, one, norm_profile(root3, one, 256), type_tag="TypeI")
    assert report.C >= 1
    assert report.block_violations == []


def test_fingerprint(one, type3):
    E, _, _ = type3
    seq = trace_seq(E, one, 10)
    pair = stable_direction(E, one, "TypeIII", 4)
    profile = solution_profile(E, one, 0.0, 256, initial=pair.s_exact)
    result = fingerprint(seq, profile, "TypeIII")
    assert len(result["small_traces"]) == 4
    assert result["small_traces_decreasing"]
    assert len(result["block_energies"]) == 9


def test_oscillation_on_synthetic_profile():
    gamma = 0.8
    values = {2 ** m: (gamma if m % 2 == 0 else gamma / math.sqrt(2)) * 2 ** (m / 2) for m in range(1, 11)}
    result = oscillation(values, gamma, "TypeIII")
    assert result["even"] == pytest.approx([gamma] * 5)
    assert result["odd"] == pytest.approx([gamma / math.sqrt(2)] * 5)


def test_fit_alpha_on_power_law():
    values = {n: 0.5 * math.log(n) for n in range(1, 4097)}
    assert fit_alpha(values) == pytest.approx(0.5, abs=0.05)


def test_angle_distance():
    assert angle_distance(0.0, math.pi) == pytest.approx(0.0, abs=1e-15)
    assert angle_distance(0.1, math.pi - 0.1) == pytest.approx(0.2)

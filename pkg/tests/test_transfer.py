"""Tests for transfer products and dyadic matrices"""

import math

import numpy as np
import pytest

from thuemorse_lab.errors import ConfigError, ZeroCouplingError
from thuemorse_lab.numerics import PrecisionReal, ScaledMat2, as_precision, mp_context, relative_difference, with_precision
from thuemorse_lab.spectrum import sigma_bands
from thuemorse_lab.tracemap import trace_seq
from thuemorse_lab.transfer import (
    MAX_EXACT_LEVEL,
    dyadic_identity_residuals,
    dyadic_pairs,
    exact_dyadic_pairs,
    norm_profile,
    pair_residuals,
    periodicity_check,
    reflection_check,
    subexp_bound,
    transfer_product,
    transfer_product_exact,
)

SAMPLES = [("0.5", "1"), ("-1.2", "0.5"), ("2.1", "2"), ("0.05", "0.75")]
COUPLINGS = [0.5, 1.0, 2.0]


def _max_entry(M):
    return max(abs(M[i, j]) for i in range(2) for j in range(2))


def _scaled(M):
    return ScaledMat2.from_mp([M[0, 0], M[0, 1], M[1, 0], M[1, 1]], mp_context(512))


def _random_samples(count, seed):
    rng = np.random.default_rng(seed)
    energies = rng.uniform(-4.0, 4.0, count)
    couplings = rng.uniform(0.2, 3.0, count)
    return [(PrecisionReal.from_float(float(e), 256), PrecisionReal.from_float(float(c), 256))
            for e, c in zip(energies, couplings)]


def test_unit_products():
    one = as_precision("1")
    assert np.array_equal(transfer_product(one, one, 3, 3).to_array(), np.eye(2))
    T = transfer_product(as_precision("0.5"), one, 0, 1)
    assert np.allclose(T.to_array(), [[-0.5, -1.0], [1.0, 0.0]])


def test_composition_and_inverse():
    E, lam = as_precision("0.37"), as_precision("1.3")
    T07 = transfer_product_exact(E, lam, 0, 7)
    T37 = transfer_product_exact(E, lam, 3, 7)
    T03 = transfer_product_exact(E, lam, 0, 3)
    assert _max_entry(T07 - T37 * T03) < 1e-60
    back = transfer_product_exact(E, lam, 7, 0)
    assert _max_entry(back * T07 - mp_context(256).eye(2)) < 1e-60


@pytest.mark.parametrize("energy,coupling", SAMPLES)
def test_dyadic_pairs_match_word_products(energy, coupling):
    E, lam = as_precision(energy), as_precision(coupling)
    pairs = exact_dyadic_pairs(E, lam, 8)
    for n in range(9):
        direct = transfer_product_exact(E, lam, 0, 2 ** n)
        assert _max_entry(pairs[n].A - direct) <= 1e-40 * max(1, _max_entry(direct))


@pytest.mark.parametrize("energy,coupling", SAMPLES)
def test_dyadic_identities(energy, coupling):
    E, lam = as_precision(energy), as_precision(coupling)
    seq = trace_seq(E, lam, 10, on_exhaustion="truncate")
    pairs = exact_dyadic_pairs(E, lam, seq.N)
    for name, value in dyadic_identity_residuals(pairs, seq).items():
        assert value < 2.0 ** -100, name


@pytest.mark.parametrize("lam", COUPLINGS)
def test_dyadic_pairs_match_big_float_words(lam):
    coupling = PrecisionReal.from_float(lam, 256)
    wide = with_precision(coupling, 512)
    rng = np.random.default_rng(int(lam * 100))
    for x in rng.uniform(-(2 + lam), 2 + lam, 20):
        E = PrecisionReal.from_float(float(x), 256)
        wide_E = with_precision(E, 512)
        pairs = exact_dyadic_pairs(E, coupling, 14)
        A = transfer_product_exact(wide_E, wide, 0, 1)
        B = transfer_product_exact(wide_E, -wide, 0, 1)
        for n in range(15):
            if n:
                A = transfer_product_exact(wide_E, wide, 2 ** (n - 1), 2 ** n) * A
                B = transfer_product_exact(wide_E, -wide, 2 ** (n - 1), 2 ** n) * B
            assert relative_difference(_scaled(pairs[n].A), _scaled(A)) < 1e-9, (float(E), n)
            assert relative_difference(_scaled(pairs[n].B), _scaled(B)) < 1e-9, (float(E), n)


def test_dyadic_identities_on_random_samples():
    for E, lam in _random_samples(100, seed=7):
        seq = trace_seq(E, lam, 10, on_exhaustion="truncate")
        pairs = exact_dyadic_pairs(E, lam, seq.N)
        for name, value in dyadic_identity_residuals(pairs, seq).items():
            assert value < 2.0 ** -100, (float(E), float(lam), name)


def test_reflection_on_random_samples():
    ctx = mp_context(256)
    swap = ctx.matrix([[0, 1], [1, 0]])
    for E, lam in _random_samples(100, seed=11):
        backward = transfer_product_exact(E, lam, 0, -16)
        mirrored = swap * transfer_product_exact(E, lam, 0, 16) * swap
        assert _max_entry(backward - mirrored) < 2.0 ** -100 * _max_entry(mirrored)


def test_determinant_is_one():
    for energy, coupling in SAMPLES:
        E, lam = as_precision(energy), as_precision(coupling)
        for n in (1, 7, 64, 1024):
            T = transfer_product_exact(E, lam, 0, n)
            det = T[0, 0] * T[1, 1] - T[0, 1] * T[1, 0]
            assert abs(det - 1) <= 2.0 ** -200 * max(1, _max_entry(T)) ** 2
        for n in (1, 16, 256):
            T = transfer_product(E, lam, 0, n)
            assert abs(np.linalg.det(T.m) - 2.0 ** (-2 * T.exp2)) < 1e-10


def test_machine_pairs_satisfy_structure():
    E, lam = as_precision("0.5"), as_precision("1")
    seq = trace_seq(E, lam, 8)
    residuals = pair_residuals(dyadic_pairs(E, lam, 8), seq)
    assert all(v < 1e-6 for v in residuals.values())


@pytest.mark.parametrize("energy,coupling", SAMPLES)
def test_reflection(energy, coupling):
    assert reflection_check(as_precision(energy), as_precision(coupling), 64) < 1e-9


def test_norm_profile_machine_matches_exact():
    E, lam = as_precision("0.5"), as_precision("1")
    exact = norm_profile(E, lam, 512, exact=True)
    machine = norm_profile(E, lam, 512, exact=False)
    assert [k for k, _ in exact] == list(range(1, 513))
    for (_, a), (_, b) in zip(exact, machine):
        assert a >= -1e-12
        assert abs(a - b) < 1e-6 * max(1.0, a)


def test_type_one_periodicity():
    root3 = PrecisionReal.parse("sqrt3")
    assert periodicity_check(root3, as_precision("1"), 1) < 1e-9


def test_type_one_profile_repeats_first_period():
    root3 = PrecisionReal.parse("sqrt3")
    values = dict(norm_profile(root3, as_precision("1"), 2 ** 12))
    assert all(abs(values[k]) < 1e-9 for k in range(8, 2 ** 12 + 1, 8))
    first = max(values[k] for k in range(1, 9))
    assert max(values.values()) == pytest.approx(first, abs=1e-9)


def test_subexponential_bound_on_spectrum():
    one = as_precision("1")
    K = subexp_bound(1.0)
    for E in (PrecisionReal.parse("sqrt3"), PrecisionReal.parse("-sqrt3")):
        for k, value in norm_profile(E, one, 4096):
            assert value <= K * math.sqrt(k)


def test_subexponential_bound_on_level_eight_bands():
    one = as_precision("1")
    K = subexp_bound(1.0)
    bands = sigma_bands(one, 8)
    rng = np.random.default_rng(8)
    for i in rng.integers(0, len(bands), 50):
        lo, hi = float(bands[i].lo), float(bands[i].hi)
        E = PrecisionReal.from_float(lo + rng.uniform() * (hi - lo))
        for k, value in norm_profile(E, one, 2 ** 12, exact=False):
            assert value <= K * math.sqrt(k), (float(E), k)


def test_errors():
    one = as_precision("1")
    zero = as_precision("0")
    with pytest.raises(ZeroCouplingError):
        transfer_product(one, zero, 0, 4)
    with pytest.raises(ConfigError):
        exact_dyadic_pairs(one, one, MAX_EXACT_LEVEL + 1)
    with pytest.raises(ConfigError):
        norm_profile(one, one, 0)
    with pytest.raises(ConfigError):
        reflection_check(one, one, 0)

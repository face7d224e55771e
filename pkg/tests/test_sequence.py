"""Tests for the two-sided Thue-Morse sequence"""

import pytest

from thuemorse_lab.errors import ZeroCouplingError
from thuemorse_lab.numerics import as_precision
from thuemorse_lab.sequence import (
    Letter,
    bar_word,
    check_palindrome,
    prefix,
    substitute,
    tm_letter,
    tm_potential,
    weights,
)


def test_first_letters():
    assert [tm_letter(n) for n in range(1, 5)] == [Letter.A, Letter.B, Letter.B, Letter.A]
    assert tm_letter(0) is Letter.A


def test_bar_is_an_involution():
    for letter in Letter:
        assert letter.bar.bar is letter
        assert letter.bar is not letter


def test_matches_iterated_substitution():
    word = substitute(20)
    assert len(word) == 2 ** 20
    for n in (1, 2, 3, 17, 1000, 65537, 2 ** 20 - 1, 2 ** 20):
        assert tm_letter(n).value == word[n - 1]
    assert prefix(4096) == word[:4096]


def test_two_sided_symmetry():
    for n in range(-300, 301):
        assert tm_letter(1 - n) is tm_letter(n)


def test_potential():
    one = as_precision("1")
    half = as_precision("0.5")
    assert tm_potential(1, one).value == 1
    assert tm_potential(2, one).value == -1
    assert tm_potential(-5, half) == tm_potential(6, half)
    with pytest.raises(ZeroCouplingError, match="zero coupling excluded"):
        tm_potential(1, as_precision("0"))


def test_palindromic_blocks():
    for n in range(1, 7):
        assert check_palindrome(n)
    with pytest.raises(ValueError):
        check_palindrome(0)


def test_words_and_weights():
    assert substitute(3, Letter.B) == bar_word(substitute(3))
    assert weights(1, 9) == [1, -1, -1, 1, -1, 1, 1, -1]

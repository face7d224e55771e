"""
Sequence
Two-sided Thue-Morse sequence, its potential, and its palindromic block structure
"""

from enum import Enum
from typing import List

from .errors import ZeroCouplingError
from .numerics import PrecisionReal


class Letter(str, Enum):
    A = "a"
    B = "b"

    @property
    def bar(self) -> "Letter":
        return Letter.B if self is Letter.A else Letter.A

    @property
    def weight(self) -> int:
        """w(n): +1 on a, -1 on b"""
        return 1 if self is Letter.A else -1


def tm_letter(n: int) -> Letter:
    """n-th letter of the fixed point of a->ab, b->ba, reflected about 1/2 for n <= 0"""
    if n <= 0:
        n = 1 - n
    return Letter.A if (n - 1).bit_count() % 2 == 0 else Letter.B


def substitute(k: int, start: Letter = Letter.A) -> str:
    """The word sigma^k(start), built by explicit substitution"""
    word = start.value
    rules = {"a": "ab", "b": "ba"}
    for _ in range(k):
        word = "".join(rules[c] for c in word)
    return word


def prefix(length: int) -> str:
    return "".join(tm_letter(n).value for n in range(1, length + 1))


def bar_word(word: str) -> str:
    return word.translate(str.maketrans("ab", "ba"))


def tm_potential(n: int, coupling: PrecisionReal) -> PrecisionReal:
    """lambda * w(n)"""
    if coupling.is_zero():
        raise ZeroCouplingError()
    return coupling if tm_letter(n) is Letter.A else -coupling


def check_palindrome(n: int) -> bool:
    """
    The 2^(2n) prefix reads the same backwards, and u_{2^n+1}..u_{2^(n+1)} is the
    barred 2^n prefix.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    word = prefix(2 ** (2 * n))
    head = word[: 2 ** n]
    second = word[2 ** n: 2 ** (n + 1)]
    return word == word[::-1] and second == bar_word(head)


def weights(start: int, stop: int) -> List[int]:
    """w(n) for start <= n < stop"""
    return [tm_letter(n).weight for n in range(start, stop)]

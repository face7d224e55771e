"""
Numerics
Scaled machine-precision matrices and arbitrary-precision reals.

Trace and transfer-matrix magnitudes grow like e^(2^n gamma); every value that can
leave the double range is carried either as a mantissa plus base-2 exponent
(ScaledReal, ScaledMat2) or as an mpmath number at an explicit precision (PrecisionReal).
"""

import math
import threading
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional, Sequence, Tuple, Union

import numpy as np
from mpmath import MPContext

from .errors import ConfigError

LN2 = math.log(2.0)
MIN_PRECISION_BITS = 64
DEFAULT_PRECISION_BITS = 256
EXPONENT_LIMIT = 2 ** 62

_contexts = threading.local()


def mp_context(bits: int) -> MPContext:
    """
    Thread-local mpmath context fixed at `bits` of precision.

    A cached context's precision is never changed after creation, so values created
    in it keep their meaning when read from other threads.
    """
    cache = getattr(_contexts, "by_bits", None)
    if cache is None:
        cache = _contexts.by_bits = {}
    ctx = cache.get(bits)
    if ctx is None:
        ctx = MPContext()
        ctx.prec = bits
        cache[bits] = ctx
    return ctx


Number = Union["PrecisionReal", int, float]


@dataclass(frozen=True)
class PrecisionReal:
    """Arbitrary-precision real with an explicit precision in bits"""

    value: Any
    prec_bits: int = DEFAULT_PRECISION_BITS

    def __post_init__(self):
        if self.prec_bits < MIN_PRECISION_BITS:
            raise ConfigError(f"precision must be at least {MIN_PRECISION_BITS} bits, got {self.prec_bits}")
        object.__setattr__(self, "value", mp_context(self.prec_bits).mpf(self.value))

    @property
    def ctx(self) -> MPContext:
        return mp_context(self.prec_bits)

    @classmethod
    def parse(cls, text: str, bits: int = DEFAULT_PRECISION_BITS) -> "PrecisionReal":
        """Decimal string, fraction `p/q`, or `sqrtX` / `-sqrtX`"""
        ctx = mp_context(bits)
        raw = text.strip().lower()
        sign = 1
        if raw.startswith("-"):
            sign, raw = -1, raw[1:].strip()
        elif raw.startswith("+"):
            raw = raw[1:].strip()
        try:
            if raw.startswith("sqrt"):
                inner = raw[4:].strip("() ")
                value = ctx.sqrt(cls.parse(inner, bits).value)
            elif "/" in raw:
                num, den = raw.split("/", 1)
                value = ctx.mpf(num) / ctx.mpf(den)
            else:
                value = ctx.mpf(raw)
        except (ValueError, ZeroDivisionError) as e:
            raise ConfigError(f"cannot parse number {text!r}") from e
        return cls(sign * value, bits)

    @classmethod
    def from_float(cls, x: float, bits: int = DEFAULT_PRECISION_BITS) -> "PrecisionReal":
        return cls(mp_context(bits).mpf(x), bits)

    def to_decimal(self) -> str:
        """Decimal string carrying every significant digit of the working precision"""
        digits = int(self.prec_bits * math.log10(2)) + 1
        return self.ctx.nstr(self.value, digits)

    def is_zero(self) -> bool:
        return self.value == 0

    def sign(self) -> int:
        return int(self.ctx.sign(self.value))

    def _binary(self, other: Number, op) -> "PrecisionReal":
        if isinstance(other, PrecisionReal):
            bits = min(self.prec_bits, other.prec_bits)
            ctx = mp_context(bits)
            return PrecisionReal(op(ctx.mpf(self.value), ctx.mpf(other.value)), bits)
        ctx = self.ctx
        return PrecisionReal(op(self.value, ctx.mpf(other)), self.prec_bits)

    def __add__(self, other: Number) -> "PrecisionReal":
        return self._binary(other, lambda a, b: a + b)

    __radd__ = __add__

    def __sub__(self, other: Number) -> "PrecisionReal":
        return self._binary(other, lambda a, b: a - b)

    def __rsub__(self, other: Number) -> "PrecisionReal":
        return self._binary(other, lambda a, b: b - a)

    def __mul__(self, other: Number) -> "PrecisionReal":
        return self._binary(other, lambda a, b: a * b)

    __rmul__ = __mul__

    def __truediv__(self, other: Number) -> "PrecisionReal":
        return self._binary(other, lambda a, b: a / b)

    def __neg__(self) -> "PrecisionReal":
        return PrecisionReal(-self.value, self.prec_bits)

    def __abs__(self) -> "PrecisionReal":
        return PrecisionReal(abs(self.value), self.prec_bits)

    def __float__(self) -> float:
        return float(self.value)

    def __lt__(self, other: Number) -> bool:
        return self.value < (other.value if isinstance(other, PrecisionReal) else other)

    def __le__(self, other: Number) -> bool:
        return self.value <= (other.value if isinstance(other, PrecisionReal) else other)

    def __gt__(self, other: Number) -> bool:
        return self.value > (other.value if isinstance(other, PrecisionReal) else other)

    def __ge__(self, other: Number) -> bool:
        return self.value >= (other.value if isinstance(other, PrecisionReal) else other)

    def __repr__(self) -> str:
        return f"PrecisionReal({self.ctx.nstr(self.value, 20)} @ {self.prec_bits} bits)"


def as_precision(x: Union[PrecisionReal, str, int, float], bits: int = DEFAULT_PRECISION_BITS) -> PrecisionReal:
    if isinstance(x, PrecisionReal):
        return x
    if isinstance(x, str):
        return PrecisionReal.parse(x, bits)
    return PrecisionReal(mp_context(bits).mpf(x), bits)


def with_precision(x: PrecisionReal, bits: int) -> PrecisionReal:
    """Round (narrowing) or zero-extend (widening) to `bits`"""
    if bits < MIN_PRECISION_BITS:
        raise ConfigError(f"precision must be at least {MIN_PRECISION_BITS} bits, got {bits}")
    return PrecisionReal(mp_context(bits).mpf(x.value), bits)


def common_bits(*values: PrecisionReal) -> int:
    return min(v.prec_bits for v in values)


@dataclass(frozen=True)
class ScaledReal:
    """mantissa * 2**exp2 with |mantissa| in [1, 2), or exactly zero"""

    mantissa: float
    exp2: int = 0

    @classmethod
    def from_float(cls, x: float) -> "ScaledReal":
        if x == 0.0:
            return cls(0.0, 0)
        m, e = math.frexp(x)
        return cls(2.0 * m, e - 1)

    @classmethod
    def from_mpf(cls, x: Any, ctx: Optional[MPContext] = None) -> "ScaledReal":
        ctx = ctx or mp_context(DEFAULT_PRECISION_BITS)
        if x == 0:
            return cls(0.0, 0)
        m, e = ctx.frexp(x)
        mantissa, exp2 = float(2 * m), int(e) - 1
        if abs(mantissa) >= 2.0:
            mantissa, exp2 = mantissa / 2.0, exp2 + 1
        return cls(mantissa, exp2)

    def to_float(self) -> float:
        return math.ldexp(self.mantissa, self.exp2)


def _normalize(m: np.ndarray, exp2: int) -> Tuple[np.ndarray, int]:
    peak = float(np.max(np.abs(m)))
    if peak == 0.0:
        return np.zeros((2, 2)), 0
    if not math.isfinite(peak):
        raise OverflowError("non-finite mantissa matrix")
    _, e = math.frexp(peak)
    shift = e - 1
    exp2 += shift
    if abs(exp2) >= EXPONENT_LIMIT:
        raise OverflowError("scaled exponent overflow")
    return np.ldexp(m, -shift), exp2


@dataclass(frozen=True, eq=False)
class ScaledMat2:
    """2x2 matrix m * 2**exp2 with max |m_ij| in [1, 2) unless zero"""

    m: np.ndarray = field(default_factory=lambda: np.eye(2))
    exp2: int = 0

    @classmethod
    def from_array(cls, values: Any, exp2: int = 0) -> "ScaledMat2":
        m, e = _normalize(np.asarray(values, dtype=float).reshape(2, 2), exp2)
        return cls(m, e)

    @classmethod
    def identity(cls) -> "ScaledMat2":
        return cls(np.eye(2), 0)

    @classmethod
    def from_mp(cls, entries: Sequence[Any], ctx: MPContext) -> "ScaledMat2":
        """Build from four mpmath entries (row-major) of any magnitude"""
        entries = [ctx.mpf(x) for x in entries]
        peak = max(abs(x) for x in entries)
        if peak == 0:
            return cls(np.zeros((2, 2)), 0)
        _, e = ctx.frexp(peak)
        shift = int(e) - 1
        m = np.array([float(ctx.ldexp(x, -shift)) for x in entries]).reshape(2, 2)
        m, extra = _normalize(m, 0)
        return cls(m, shift + extra)

    def to_array(self) -> np.ndarray:
        """Denormalized values; overflows to inf for very large exponents"""
        return np.ldexp(self.m, self.exp2)

    def trace(self) -> ScaledReal:
        t = ScaledReal.from_float(float(self.m[0, 0] + self.m[1, 1]))
        return ScaledReal(t.mantissa, t.exp2 + self.exp2) if t.mantissa else t

    def inverse(self) -> "ScaledMat2":
        """Adjugate; equals the inverse for det-1 matrices"""
        (a, b), (c, d) = self.m
        return ScaledMat2(np.array([[d, -b], [-c, a]]), self.exp2)

    def conjugate(self, q: np.ndarray) -> "ScaledMat2":
        """q @ self @ q for an orthogonal +-1 matrix q"""
        return ScaledMat2(q @ self.m @ q, self.exp2)

    def log_norm(self) -> float:
        return log_norm(self)


def scaled_mul(a: ScaledMat2, b: ScaledMat2) -> ScaledMat2:
    m, e = _normalize(a.m @ b.m, a.exp2 + b.exp2)
    return ScaledMat2(m, e)


def relative_difference(a: ScaledMat2, b: ScaledMat2) -> float:
    """max |a - b| entry relative to the larger max-entry of a and b"""
    top = max(a.exp2, b.exp2)
    da = np.ldexp(a.m, a.exp2 - top)
    db = np.ldexp(b.m, b.exp2 - top)
    scale = max(float(np.max(np.abs(da))), float(np.max(np.abs(db))))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(da - db))) / scale


def log_norm(a: ScaledMat2) -> float:
    """
    Natural log of the spectral norm.

    sigma_max^2 = (F + sqrt(((a-d)^2 + (b+c)^2)((a+d)^2 + (b-c)^2))) / 2 with F the squared
    Frobenius norm; the product form avoids the cancellation in F^2 - 4 det^2.
    """
    a11, a12, a21, a22 = (float(x) for x in a.m.ravel())
    frob = a11 * a11 + a12 * a12 + a21 * a21 + a22 * a22
    if frob == 0.0:
        raise ValueError("log of zero norm")
    disc = math.sqrt(((a11 - a22) ** 2 + (a12 + a21) ** 2) * ((a11 + a22) ** 2 + (a12 - a21) ** 2))
    sigma_sq = 0.5 * (frob + disc)
    return 0.5 * math.log(sigma_sq) + a.exp2 * LN2


def product_log_norm(matrices: Iterable[np.ndarray]) -> float:
    """log-norm of M_k ... M_1 for an iterable M_1, M_2, ... of plain 2x2 arrays"""
    acc = ScaledMat2.identity()
    for mat in matrices:
        acc = scaled_mul(ScaledMat2.from_array(mat), acc)
    return log_norm(acc)

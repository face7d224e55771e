"""
Transfer
Transfer-matrix products T_{m->n}(E), the dyadic matrices A_n = T_{2^n}, B_n, their
norm profiles, and residuals of the algebraic identities they satisfy.
"""

import math
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from mpmath import MPContext

from .errors import ConfigError, ZeroCouplingError
from .numerics import PrecisionReal, ScaledMat2, ScaledReal, common_bits, log_norm, mp_context, relative_difference, scaled_mul
from .sequence import tm_letter
from .tracemap import TraceSequence

logger = logging.getLogger(__name__)

I2 = np.eye(2)
U = np.array([[0.0, 1.0], [1.0, 0.0]])
V = np.array([[1.0, 0.0], [0.0, -1.0]])
W = np.array([[0.0, -1.0], [1.0, 0.0]])

MAX_EXACT_LEVEL = 40


def local_matrix(E: float, potential: float) -> np.ndarray:
    """M_n = [[E - V(n), -1], [1, 0]]"""
    return np.array([[E - potential, -1.0], [1.0, 0.0]])


@dataclass(frozen=True, eq=False)
class DyadicPair:
    A: ScaledMat2
    B: ScaledMat2
    n: int


@dataclass(frozen=True, eq=False)
class ExactDyadicPair:
    """A_n, B_n as mpmath matrices"""

    A: Any
    B: Any
    n: int
    prec_bits: int


def mp_basis(ctx: MPContext) -> Dict[str, Any]:
    return {
        "I": ctx.eye(2),
        "U": ctx.matrix([[0, 1], [1, 0]]),
        "V": ctx.matrix([[1, 0], [0, -1]]),
        "W": ctx.matrix([[0, -1], [1, 0]]),
    }


def mp_log_norm(M: Any, ctx: MPContext) -> float:
    return log_norm(ScaledMat2.from_mp([M[0, 0], M[0, 1], M[1, 0], M[1, 1]], ctx))


def _check_coupling(coupling: PrecisionReal):
    if coupling.is_zero():
        raise ZeroCouplingError()


def transfer_product(E: PrecisionReal, coupling: PrecisionReal, m: int, n: int) -> ScaledMat2:
    """
    T_{m->n} = M_n ... M_{m+1} for m < n, I for m = n, T_{n->m}^(-1) for m > n.

    Machine-precision mantissas with a running base-2 exponent.
    """
    _check_coupling(coupling)
    if m == n:
        return ScaledMat2.identity()
    if m > n:
        return transfer_product(E, coupling, n, m).inverse()
    e, lam = float(E), float(coupling)
    acc = ScaledMat2.identity()
    for j in range(m + 1, n + 1):
        acc = scaled_mul(ScaledMat2.from_array(local_matrix(e, lam * tm_letter(j).weight)), acc)
    return acc


def transfer_product_exact(E: PrecisionReal, coupling: PrecisionReal, m: int, n: int) -> Any:
    """Arbitrary-precision T_{m->n} as an mpmath matrix"""
    _check_coupling(coupling)
    ctx = mp_context(common_bits(E, coupling))
    if m == n:
        return ctx.eye(2)
    if m > n:
        return ctx.inverse(transfer_product_exact(E, coupling, n, m))
    e, lam = ctx.mpf(E.value), ctx.mpf(coupling.value)
    a, b, c, d = ctx.mpf(1), ctx.mpf(0), ctx.mpf(0), ctx.mpf(1)
    for j in range(m + 1, n + 1):
        x = e - lam * tm_letter(j).weight
        a, b, c, d = x * a - c, x * b - d, a, b
    return ctx.matrix([[a, b], [c, d]])


def dyadic_pairs(E: PrecisionReal, coupling: PrecisionReal, N: int) -> List[DyadicPair]:
    """A_0 = rho(a), B_0 = rho(b); A_{n+1} = B_n A_n, B_{n+1} = A_n B_n"""
    _check_coupling(coupling)
    if N < 0:
        raise ConfigError("N must be non-negative")
    e, lam = float(E), float(coupling)
    A = ScaledMat2.from_array(local_matrix(e, lam))
    B = ScaledMat2.from_array(local_matrix(e, -lam))
    pairs = [DyadicPair(A, B, 0)]
    for n in range(1, N + 1):
        A, B = scaled_mul(B, A), scaled_mul(A, B)
        pairs.append(DyadicPair(A, B, n))
    return pairs


def exact_dyadic_pairs(E: PrecisionReal, coupling: PrecisionReal, N: int) -> List[ExactDyadicPair]:
    _check_coupling(coupling)
    if not 0 <= N <= MAX_EXACT_LEVEL:
        raise ConfigError(f"exact dyadic levels limited to 0..{MAX_EXACT_LEVEL}")
    bits = common_bits(E, coupling)
    ctx = mp_context(bits)
    e, lam = ctx.mpf(E.value), ctx.mpf(coupling.value)
    A = ctx.matrix([[e - lam, -1], [1, 0]])
    B = ctx.matrix([[e + lam, -1], [1, 0]])
    pairs = [ExactDyadicPair(A, B, 0, bits)]
    for n in range(1, N + 1):
        A, B = B * A, A * B
        pairs.append(ExactDyadicPair(A, B, n, bits))
    return pairs


def norm_profile(
    E: PrecisionReal,
    coupling: PrecisionReal,
    N: int,
    exact: Optional[bool] = None,
) -> List[Tuple[int, float]]:
    """
    (k, log ||T_k||) for k = 1..N, one local multiply per step.

    Args:
        exact: run the product in E's precision (default when E carries more than 64 bits)
    """
    _check_coupling(coupling)
    if N < 1:
        raise ConfigError("N must be at least 1")
    if exact is None:
        exact = E.prec_bits > 64

    profile = []
    if exact:
        ctx = mp_context(common_bits(E, coupling))
        e, lam = ctx.mpf(E.value), ctx.mpf(coupling.value)
        a, b, c, d = ctx.mpf(1), ctx.mpf(0), ctx.mpf(0), ctx.mpf(1)
        for k in range(1, N + 1):
            x = e - lam * tm_letter(k).weight
            a, b, c, d = x * a - c, x * b - d, a, b
            profile.append((k, log_norm(ScaledMat2.from_mp([a, b, c, d], ctx))))
        return profile

    e, lam = float(E), float(coupling)
    acc = ScaledMat2.identity()
    for k in range(1, N + 1):
        acc = scaled_mul(ScaledMat2.from_array(local_matrix(e, lam * tm_letter(k).weight)), acc)
        profile.append((k, log_norm(acc)))
    return profile


def reflection_check(E: PrecisionReal, coupling: PrecisionReal, n: int) -> float:
    """Relative difference between T_{0->-n} and U T_{0->n} U"""
    if n < 1:
        raise ConfigError("n must be at least 1")
    direct = transfer_product(E, coupling, 0, -n)
    mirrored = transfer_product(E, coupling, 0, n).conjugate(U)
    return relative_difference(direct, mirrored)


def _trace_gap(M: ScaledMat2, target: ScaledReal) -> float:
    """|tr M - target| relative to max(1, max |M_ij|), without leaving the scaled form"""
    top = max(M.exp2, 0)
    trace = M.trace()
    shift = min(target.exp2 - top, 1000)
    return abs(math.ldexp(trace.mantissa, trace.exp2 - top) - math.ldexp(target.mantissa, shift))


def pair_residuals(pairs: Sequence[DyadicPair], seq: TraceSequence) -> Dict[str, float]:
    """
    Machine-precision residuals of the DyadicPair invariants, each relative to the
    largest entry of the matrices involved.
    """
    worst = {"trace": 0.0, "odd_structure": 0.0, "even_structure": 0.0, "antisymmetry": 0.0}
    for pair in pairs[1:]:
        n = pair.n
        if n > seq.N:
            break
        t = ScaledReal.from_mpf(seq.trace(n), seq.ctx)
        for M in (pair.A, pair.B):
            worst["trace"] = max(worst["trace"], _trace_gap(M, t))
        A, B = pair.A.to_array(), pair.B.to_array()
        scale = max(1.0, float(np.max(np.abs(A))), float(np.max(np.abs(B))))
        k = (n + 1) // 2
        if n % 2 == 1:
            expected = float(seq.mu[k - 1]) * U
            worst["odd_structure"] = max(worst["odd_structure"], float(np.max(np.abs(A - B - expected))) / scale)
        elif k <= len(seq.nu):
            expected = float(seq.nu[k - 1]) * V + float(seq.omega[k - 1]) * W
            worst["even_structure"] = max(worst["even_structure"], float(np.max(np.abs(A - B - expected))) / scale)
            anti = abs(A[0, 1] + A[1, 0]) + abs(B[0, 1] + B[1, 0])
            worst["antisymmetry"] = max(worst["antisymmetry"], anti / scale)
    return worst


def dyadic_identity_residuals(pairs: Sequence[ExactDyadicPair], seq: TraceSequence) -> Dict[str, Any]:
    """
    Arbitrary-precision residuals (relative to the Frobenius size of the terms) of:
    trace law, A-B structure on odd and even levels, antisymmetry, B_n^2 A_n = t_n A_{n+1} - A_n,
    and A_{n+2} = t_n (t_{n+1} - 1) A_n + t_n B_n + (1 - t_n^2) I.
    """
    bits = pairs[0].prec_bits
    ctx = mp_context(bits)
    basis = mp_basis(ctx)
    fro = lambda M: ctx.mnorm(M, 'f')
    worst = {name: ctx.mpf(0) for name in
             ("trace", "odd_structure", "even_structure", "antisymmetry", "cayley_hamilton", "two_step")}

    def note(name, value, *terms):
        scale = max([ctx.mpf(1)] + [fro(x) for x in terms])
        worst[name] = max(worst[name], value / scale)

    top = min(len(pairs) - 1, seq.N)
    for n in range(1, top + 1):
        A, B = pairs[n].A, pairs[n].B
        t = seq.trace(n)
        note("trace", abs(A[0, 0] + A[1, 1] - t) + abs(B[0, 0] + B[1, 1] - t), A, B)
        k = (n + 1) // 2
        if n % 2 == 1 and k <= len(seq.mu):
            note("odd_structure", fro(A - B - seq.mu[k - 1] * basis["U"]), A, B)
        elif n % 2 == 0 and k <= len(seq.nu):
            note("even_structure", fro(A - B - seq.nu[k - 1] * basis["V"] - seq.omega[k - 1] * basis["W"]), A, B)
            note("antisymmetry", abs(A[0, 1] + A[1, 0]) + abs(B[0, 1] + B[1, 0]), A, B)
        if n + 1 <= top:
            lhs = B * B * A
            rhs = t * pairs[n + 1].A - A
            note("cayley_hamilton", fro(lhs - rhs), lhs, rhs)
        if n + 2 <= top:
            t_next = seq.trace(n + 1)
            rhs = t * (t_next - 1) * A + t * B + (1 - t * t) * basis["I"]
            note("two_step", fro(pairs[n + 2].A - rhs), pairs[n + 2].A, rhs)
    return worst


def subexp_bound(coupling: float) -> float:
    """Coefficient K with log ||T_n|| <= K sqrt(n) for every E in the spectrum"""
    c = 2.0 * (math.log(2.0) + math.log(2.0 + abs(coupling))) + math.log(12.0)
    return math.sqrt(2.0) * c / (math.sqrt(2.0) - 1.0)


def periodicity_check(E: PrecisionReal, coupling: PrecisionReal, k: int, repeats: int = 16) -> float:
    """max |log ||T_{m 2^(k+2)}|| | over 1 <= m <= repeats; zero at a root of t_k"""
    period = 2 ** (k + 2)
    profile = norm_profile(E, coupling, period * repeats)
    return max(abs(value) for step, value in profile if step % period == 0)

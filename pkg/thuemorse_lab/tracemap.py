"""
Trace Map
Trace polynomials t_n(E) of the dyadic transfer matrices, the auxiliary sequences
mu_n, nu_n, omega_n, and the coupling angle kappa(E) = sin(theta(E)).

All evaluation is pointwise in arbitrary precision; a shadow run at half precision
locates the first index whose value can no longer be trusted.
"""

import logging
from dataclasses import dataclass
from typing import Any, List, Optional, Tuple

from mpmath import MPContext

from .errors import ConfigError, NotCandidateError, PrecisionExhaustedError, ZeroCouplingError, ZeroEnergyError
from .numerics import PrecisionReal, common_bits, mp_context

logger = logging.getLogger(__name__)

RESIDUAL_NAMES = ("recurrence", "odd_structure", "even_structure", "initial_condition")


@dataclass(frozen=True)
class TraceSequence:
    """
    t[i] holds t_{i+1}; mu[i], nu[i], omega[i] hold the (i+1)-th terms.

    mu_n pairs with t_{2n-1}, nu_n and omega_n pair with t_{2n}. Values are mpmath
    numbers at `prec_bits`; `reliable_until` is the last index the shadow run trusts.
    """

    E: PrecisionReal
    coupling: PrecisionReal
    t: Tuple[Any, ...]
    mu: Tuple[Any, ...]
    nu: Tuple[Any, ...]
    omega: Tuple[Any, ...]
    prec_bits: int
    reliable_until: int

    @property
    def N(self) -> int:
        return len(self.t)

    @property
    def ctx(self) -> MPContext:
        return mp_context(self.prec_bits)

    def trace(self, n: int) -> Any:
        """t_n, 1-based"""
        if not 1 <= n <= len(self.t):
            raise IndexError(f"t_{n} not computed (N={len(self.t)})")
        return self.t[n - 1]

    def traces(self) -> List[PrecisionReal]:
        return [PrecisionReal(v, self.prec_bits) for v in self.t]

    def point(self, k: int) -> Tuple[Any, Any]:
        """phi_k = (t_k, t_{k+1})"""
        return self.trace(k), self.trace(k + 1)


@dataclass(frozen=True)
class CouplingAngle:
    kappa: PrecisionReal
    theta: PrecisionReal

    @property
    def sec(self) -> Any:
        return 1 / self.theta.ctx.cos(self.theta.value)

    @property
    def tan(self) -> Any:
        return self.theta.ctx.tan(self.theta.value)


def raw_traces(E: Any, lam: Any, N: int, ctx: MPContext) -> List[Any]:
    """t_1..t_N without bookkeeping; inputs already in `ctx`"""
    e2 = E * E
    d = e2 - lam * lam
    t = [d - 2, d * d - 4 * e2 + 2]
    for n in range(2, N):
        t.append(t[n - 2] ** 2 * (t[n - 1] - 2) + 2)
    return t[:N]


def _auxiliary(E: Any, lam: Any, t: List[Any]) -> Tuple[List[Any], List[Any], List[Any]]:
    half = len(t) // 2
    mu, nu, omega = [-2 * lam], [4 * lam * E], [2 * lam * (E * E - lam * lam)]
    for n in range(1, half):
        # t_{2n} is t[2n-1], t_{2n-1} is t[2n-2], t_{2n+1} is t[2n]
        mu.append((t[2 * n - 1] - 2) * t[2 * n - 2] * mu[-1])
        factor = (t[2 * n] - 2) * t[2 * n - 1]
        nu.append(factor * nu[-1])
        omega.append(factor * omega[-1])
    return mu[:half], nu[:half], omega[:half]


def first_divergence(values: List[Any], shadow: List[Any], bits: int, ctx: MPContext) -> Optional[int]:
    """1-based index of the first entry where the shadow run disagrees beyond 2^(-bits/8)"""
    threshold = ctx.ldexp(1, -(bits // 8))
    for i, (a, b) in enumerate(zip(values, shadow)):
        if abs(a - ctx.mpf(b)) > threshold * max(1, abs(a)):
            return i + 1
    return None


def trace_seq(
    E: PrecisionReal,
    coupling: PrecisionReal,
    N: int,
    on_exhaustion: str = "raise",
) -> TraceSequence:
    """
    Seed t_1, t_2, iterate t_{n+1} = t_{n-1}^2 (t_n - 2) + 2, and build mu/nu/omega.

    Args:
        on_exhaustion: "raise" (PrecisionExhaustedError) or "truncate" (keep the reliable prefix)
    """
    if coupling.is_zero():
        raise ZeroCouplingError()
    if N < 2:
        raise ConfigError("N must be at least 2")
    if on_exhaustion not in ("raise", "truncate"):
        raise ConfigError(f"unknown on_exhaustion mode {on_exhaustion!r}")

    bits = common_bits(E, coupling)
    ctx = mp_context(bits)
    e, lam = ctx.mpf(E.value), ctx.mpf(coupling.value)
    t = raw_traces(e, lam, N, ctx)

    shadow_ctx = mp_context(max(32, bits // 2))
    shadow = raw_traces(shadow_ctx.mpf(e), shadow_ctx.mpf(lam), N, shadow_ctx)
    bad = first_divergence(t, shadow, bits, ctx)

    reliable = N
    if bad is not None:
        if on_exhaustion == "raise":
            raise PrecisionExhaustedError(bad)
        reliable = max(2, bad - 1)
        logger.debug(f"trace sequence truncated at index {reliable} ({bits} bits)")
        t = t[:reliable]

    mu, nu, omega = _auxiliary(e, lam, t)
    return TraceSequence(
        E=PrecisionReal(e, bits),
        coupling=PrecisionReal(lam, bits),
        t=tuple(t),
        mu=tuple(mu),
        nu=tuple(nu),
        omega=tuple(omega),
        prec_bits=bits,
        reliable_until=reliable,
    )


def trace_derivatives(E: PrecisionReal, coupling: PrecisionReal, N: int) -> Tuple[List[Any], List[Any]]:
    """(t_1..t_N, t_1'..t_N') by the differentiated recurrence"""
    if coupling.is_zero():
        raise ZeroCouplingError()
    ctx = mp_context(common_bits(E, coupling))
    e, lam = ctx.mpf(E.value), ctx.mpf(coupling.value)
    t = raw_traces(e, lam, max(N, 2), ctx)
    d = e * e - lam * lam
    dt = [2 * e, 4 * e * d - 8 * e]
    for n in range(2, N):
        dt.append(2 * t[n - 2] * dt[n - 2] * (t[n - 1] - 2) + t[n - 2] ** 2 * dt[n - 1])
    return t[:N], dt[:N]


def coupling_angle(E: PrecisionReal, coupling: PrecisionReal) -> CouplingAngle:
    """kappa = (E^2 - lambda^2) / (2E), theta = arcsin(kappa)"""
    if E.is_zero():
        raise ZeroEnergyError()
    bits = common_bits(E, coupling)
    ctx = mp_context(bits)
    e, lam = ctx.mpf(E.value), ctx.mpf(coupling.value)
    kappa = (e * e - lam * lam) / (2 * e)
    if abs(kappa) >= 1:
        raise NotCandidateError()
    return CouplingAngle(PrecisionReal(kappa, bits), PrecisionReal(ctx.asin(kappa), bits))


def invariant_residuals(seq: TraceSequence) -> List[PrecisionReal]:
    """
    Normalized residuals, in RESIDUAL_NAMES order, of the trace recurrence, the two
    mu/nu/omega identities, and t_1^2 - t_2 - 2 = 4 lambda^2.
    """
    ctx = seq.ctx
    t = seq.t
    lam = ctx.mpf(seq.coupling.value)

    def rel(lhs, rhs, *terms):
        scale = max([ctx.mpf(1), abs(lhs), abs(rhs)] + [abs(x) for x in terms])
        return abs(lhs - rhs) / scale

    recurrence = ctx.mpf(0)
    for n in range(2, len(t)):
        big = t[n - 2] ** 2 * (t[n - 1] - 2)
        recurrence = max(recurrence, rel(t[n], big + 2, big))

    odd = ctx.mpf(0)
    for i, mu in enumerate(seq.mu):
        if 2 * i + 1 < len(t):
            odd = max(odd, rel(t[2 * i + 1], t[2 * i] ** 2 - mu ** 2 - 2, t[2 * i] ** 2, mu ** 2))

    even = ctx.mpf(0)
    for i, (nu, om) in enumerate(zip(seq.nu, seq.omega)):
        if 2 * i + 2 < len(t):
            even = max(even, rel(t[2 * i + 2], t[2 * i + 1] ** 2 - nu ** 2 + om ** 2 - 2,
                                 t[2 * i + 1] ** 2, nu ** 2, om ** 2))

    initial = rel(t[0] ** 2 - t[1] - 2, 4 * lam * lam, t[0] ** 2, t[1])
    return [PrecisionReal(r, seq.prec_bits) for r in (recurrence, odd, even, initial)]


def check_trace_bounds(seq: TraceSequence, depth: int) -> List[int]:
    """
    Indices 2 <= n < depth with t_{n-1} != 0 and t_n > 2.

    For E in sigma_depth U sigma_{depth+1} the list must be empty: t_n > 2 with
    t_{n-1} != 0 forces every later trace above 2.
    """
    limit = min(depth, seq.N + 1)
    return [n for n in range(2, limit) if seq.trace(n - 1) != 0 and seq.trace(n) > 2]


def eventual_sign(values, tail: int = 3) -> Tuple[int, bool]:
    """Sign of the last value and whether it held over the last `tail` values"""
    if not values:
        raise ValueError("empty sequence")
    signs = [1 if v > 0 else -1 for v in values[-tail:]]
    return signs[-1], len(set(signs)) == 1

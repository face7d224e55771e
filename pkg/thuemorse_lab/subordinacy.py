"""
Subordinacy
Half-line solutions with a boundary angle, truncated norms, the length scale L(eps),
m-function magnitude proxies and local-dimension trend indicators.

Only right half-line solutions are computed: the potential is symmetric about 1/2, so the
left half-line problem is the same one.
"""

import math
import logging
from bisect import bisect_left
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .asymptotics import line_angle, sign_bookkeeping, stable_direction
from .dynamics import EnergyClass
from .errors import ConfigError, RangeExceededError
from .numerics import PrecisionReal, common_bits, mp_context
from .sequence import tm_letter
from .settings import section, workers
from .tracemap import trace_seq

logger = logging.getLogger(__name__)

Angle = Union[float, PrecisionReal]

TRENDS = ("diverging", "vanishing", "bounded")


@dataclass(eq=False)
class HalfLineSolution:
    """
    values[n] = u(n) for n = 0..n_max + 1 with u(0) cos(beta) + u(1) sin(beta) = 0 and
    u(0)^2 + u(1)^2 = 1. prefix[k] = sum_{n=1..k} u(n)^2.
    """

    beta: Any
    values: List[Any]
    prec_bits: int = 256
    prefix: List[Any] = field(default_factory=list, repr=False)

    def __post_init__(self):
        ctx = mp_context(self.prec_bits)
        acc = ctx.mpf(0)
        self.prefix = [acc]
        for v in self.values[1:]:
            acc += ctx.mpf(v) ** 2
            self.prefix.append(acc)

    @property
    def n_max(self) -> int:
        return len(self.values) - 2

    def boundary_residual(self) -> float:
        ctx = mp_context(self.prec_bits)
        beta = ctx.mpf(self.beta)
        return float(abs(self.values[0] * ctx.cos(beta) + self.values[1] * ctx.sin(beta)))


@dataclass(frozen=True)
class LengthScale:
    epsilon: float
    L: Any
    product: Any
    clamped: bool = False

    @property
    def residual(self) -> float:
        """|2 eps ||u_beta||_L ||u_(beta+pi/2)||_L - 1|"""
        return float(abs(2 * self.product * self.epsilon - 1))


@dataclass
class LocalDimReport:
    eta: float
    beta: float
    rows: List[Dict[str, float]]
    slope: float
    trend: str
    threshold: float
    dropped: List[float] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "eta": self.eta,
            "beta": self.beta,
            "slope": self.slope,
            "trend": self.trend,
            "threshold": self.threshold,
            "dropped_epsilons": self.dropped,
            "rows": self.rows,
        }


def _mp_angle(beta: Angle, bits: int):
    ctx = mp_context(bits)
    return ctx.mpf(beta.value if isinstance(beta, PrecisionReal) else beta)


def half_line_solution(E: PrecisionReal, coupling: PrecisionReal, beta: Angle, n_max: int) -> HalfLineSolution:
    """u(0) = -sin(beta), u(1) = cos(beta), u(n+1) = (E - V(n)) u(n) - u(n-1)"""
    if n_max < 1:
        raise ConfigError("n_max must be at least 1")
    bits = common_bits(E, coupling)
    ctx = mp_context(bits)
    e, lam = ctx.mpf(E.value), ctx.mpf(coupling.value)
    b = _mp_angle(beta, bits)
    values = [-ctx.sin(b), ctx.cos(b)]
    for n in range(1, n_max + 1):
        values.append((e - lam * tm_letter(n).weight) * values[n] - values[n - 1])
    return HalfLineSolution(beta=b, values=values, prec_bits=bits)


def truncated_norm(u: HalfLineSolution, L: Any) -> Any:
    """(sum_{n <= [L]} |u(n)|^2 + (L - [L]) |u([L]+1)|^2)^(1/2)"""
    ctx = mp_context(u.prec_bits)
    L = ctx.mpf(L)
    if L < 0:
        raise ConfigError("L must be non-negative")
    k = int(ctx.floor(L))
    if k + 1 >= len(u.values):
        raise RangeExceededError()
    return ctx.sqrt(u.prefix[k] + (L - k) * u.values[k + 1] ** 2)


@dataclass(frozen=True, eq=False)
class _SolutionPair:
    u: HalfLineSolution
    u_perp: HalfLineSolution
    products: List[Any]


@lru_cache(maxsize=64)
def _solution_pair(E: PrecisionReal, coupling: PrecisionReal, beta: PrecisionReal, n_max: int) -> _SolutionPair:
    ctx = mp_context(beta.prec_bits)
    u = half_line_solution(E, coupling, beta, n_max)
    u_perp = half_line_solution(E, coupling, PrecisionReal(beta.value + ctx.pi / 2, beta.prec_bits), n_max)
    products = [a * b for a, b in zip(u.prefix, u_perp.prefix)]
    return _SolutionPair(u, u_perp, products)


def _as_angle(beta: Angle, E: PrecisionReal) -> PrecisionReal:
    if isinstance(beta, PrecisionReal):
        return beta
    return PrecisionReal(beta, E.prec_bits)


def _max_length(max_length: Optional[int]) -> int:
    return int(max_length or section("subordinacy").get("max_length", 4096))


def length_scale(
    E: PrecisionReal,
    coupling: PrecisionReal,
    beta: Angle,
    eps: float,
    max_length: Optional[int] = None,
) -> LengthScale:
    """
    L >= 1 with ||u_beta||_L ||u_(beta+pi/2)||_L = 1/(2 eps).

    The squared product is a quadratic in the fractional part of L between integers, so the
    integer bracket comes from bisection on the prefix products and the rest is closed form.
    """
    if eps <= 0:
        raise ConfigError("epsilon must be positive")
    pair = _solution_pair(E, coupling, _as_angle(beta, E), _max_length(max_length))
    ctx = mp_context(pair.u.prec_bits)
    target = 1 / (2 * ctx.mpf(eps))
    target2 = target ** 2
    products = pair.products

    first = pair.u.prefix[1] + pair.u_perp.prefix[1]
    if first <= 0:
        raise ArithmeticError("both boundary solutions vanish at n = 1")
    if products[-1] < target2:
        raise RangeExceededError("epsilon too small for range")
    if products[1] >= target2:
        return LengthScale(eps, ctx.mpf(1), ctx.sqrt(products[1]), clamped=True)

    k = bisect_left(products, target2, lo=1) - 1
    a1, a2 = pair.u.prefix[k], pair.u_perp.prefix[k]
    b1, b2 = pair.u.values[k + 1] ** 2, pair.u_perp.values[k + 1] ** 2
    B = a1 * b2 + a2 * b1
    C = a1 * a2 - target2
    root = B + ctx.sqrt(B * B - 4 * b1 * b2 * C)
    frac = -2 * C / root if root else ctx.mpf(0)
    L = k + frac
    product = truncated_norm(pair.u, L) * truncated_norm(pair.u_perp, L)
    return LengthScale(eps, L, product)


def _norms_at(E, coupling, beta: PrecisionReal, eps: float, max_length: Optional[int]) -> Tuple[LengthScale, Any, Any]:
    scale = length_scale(E, coupling, beta, eps, max_length)
    pair = _solution_pair(E, coupling, beta, _max_length(max_length))
    return scale, truncated_norm(pair.u, scale.L), truncated_norm(pair.u_perp, scale.L)


def m_magnitude(
    E: PrecisionReal,
    coupling: PrecisionReal,
    beta: Angle,
    eps: float,
    max_length: Optional[int] = None,
) -> float:
    """|m_beta(E + i eps)| up to universal constants: ||u_(beta+pi/2)||_L / ||u_beta||_L"""
    _, norm, norm_perp = _norms_at(E, coupling, _as_angle(beta, E), eps, max_length)
    return float(norm_perp / norm)


def subordinate_angle(E: PrecisionReal, coupling: PrecisionReal, L: Any) -> float:
    """
    beta minimizing ||u_beta||_L: u_beta = cos(beta) u_0 + sin(beta) u_(pi/2), so beta is the
    angle of the smallest eigenvector of the truncated Gram matrix of u_0 and u_(pi/2).
    """
    bits = common_bits(E, coupling)
    ctx = mp_context(bits)
    L = ctx.mpf(L)
    n_max = int(ctx.floor(L)) + 1
    p = half_line_solution(E, coupling, 0.0, n_max)
    q = half_line_solution(E, coupling, PrecisionReal(ctx.pi / 2, bits), n_max)

    k = int(ctx.floor(L))
    frac = L - k
    gram = ctx.matrix(2, 2)
    for i, x in enumerate((p, q)):
        for j, y in enumerate((p, q)):
            total = sum(x.values[n] * y.values[n] for n in range(1, k + 1))
            gram[i, j] = total + frac * x.values[k + 1] * y.values[k + 1]
    evals, evecs = ctx.eigsy(gram)
    idx = 0 if evals[0] <= evals[1] else 1
    w1, w2 = evecs[0, idx], evecs[1, idx]
    beta = ctx.atan2(w2, w1)
    if beta > ctx.pi / 2:
        beta -= ctx.pi
    elif beta <= -ctx.pi / 2:
        beta += ctx.pi
    return float(beta)


def class_angle(
    E: PrecisionReal,
    coupling: PrecisionReal,
    energy_class: Union[EnergyClass, str],
    depth: int = 4,
) -> PrecisionReal:
    """
    Boundary angle for local_dim_indicator: pi/4 (TypeI), -eta pi/4 (TypeII), the stable
    angle (TypeIII), snapped to 0 or pi/2 when |E| = lambda.
    """
    tag = EnergyClass(energy_class)
    bits = common_bits(E, coupling)
    ctx = mp_context(bits)
    if tag is EnergyClass.TYPE_I:
        return PrecisionReal(ctx.pi / 4, bits)
    if tag is EnergyClass.TYPE_II:
        seq = trace_seq(E, coupling, 2 * depth + 2, on_exhaustion="truncate")
        eta = sign_bookkeeping(seq, tag).eta
        return PrecisionReal(-eta * ctx.pi / 4, bits)
    if tag is EnergyClass.TYPE_III:
        if abs(abs(E.value) - abs(coupling.value)) <= ctx.ldexp(1, -(bits // 2)):
            # theta = 0: s is 0 or -pi/2 depending on eta_hat
            seq = trace_seq(E, coupling, 2 * depth + 2, on_exhaustion="truncate")
            eta_hat = sign_bookkeeping(seq, tag).eta_hat
            return PrecisionReal(0 if eta_hat > 0 else ctx.pi / 2, bits)
        direction = stable_direction(E, coupling, tag, depth)
        return PrecisionReal(line_angle(direction.s_exact, ctx), bits)
    raise ConfigError(f"no boundary angle for {tag.value}")


def _check_reflection(n_check: int = 64):
    for n in range(1, n_check + 1):
        if tm_letter(n) is not tm_letter(1 - n):
            raise ArithmeticError(f"potential not symmetric at n = {n}")


def default_eps_grid() -> List[float]:
    cfg = section("subordinacy")
    lo, hi = int(cfg.get("eps_min_exp", 4)), int(cfg.get("eps_max_exp", 40))
    return [2.0 ** -j for j in range(lo, hi + 1)]


def classify_trend(slope: float, threshold: float) -> str:
    """Slope of log(eps^(1-eta) |M|) against log eps: negative means growth as eps -> 0"""
    if slope < -threshold:
        return "diverging"
    if slope > threshold:
        return "vanishing"
    return "bounded"


def local_dim_indicator(
    E: PrecisionReal,
    coupling: PrecisionReal,
    eta: float,
    eps_grid: Optional[Sequence[float]] = None,
    beta: Optional[Angle] = None,
    energy_class: Optional[Union[EnergyClass, str]] = None,
    max_length: Optional[int] = None,
) -> LocalDimReport:
    """
    eps^(1-eta) |M(E + i eps)| over the epsilon grid, with
    |M| ~ (m1 m2 + 1) / (m1 + m2), m1 = |m_beta|, m2 = |m_(pi/2-beta)|.
    """
    if eta <= 0:
        raise ConfigError("eta must be positive")
    _check_reflection()
    if beta is None:
        if energy_class is None:
            raise ConfigError("either beta or energy_class is required")
        beta = class_angle(E, coupling, energy_class)
    beta = _as_angle(beta, E)
    complement = PrecisionReal(beta.ctx.pi / 2 - beta.value, beta.prec_bits)
    grid = sorted(eps_grid or default_eps_grid(), reverse=True)
    threshold = float(section("subordinacy").get("trend_threshold", 0.1))

    def row(eps: float) -> Optional[Dict[str, float]]:
        try:
            scale, norm, norm_perp = _norms_at(E, coupling, beta, eps, max_length)
            _, norm2, norm2_perp = _norms_at(E, coupling, complement, eps, max_length)
        except RangeExceededError:
            return None
        m1, m2 = norm_perp / norm, norm2_perp / norm2
        M = (m1 * m2 + 1) / (m1 + m2)
        ctx = mp_context(beta.prec_bits)
        return {
            "epsilon": eps,
            "L": float(scale.L),
            "m_ratio": float(m1),
            "M_proxy": float(M),
            "eps_power_M": float(ctx.mpf(eps) ** (1 - eta) * M),
        }

    # prime the cache so worker threads only read
    _solution_pair(E, coupling, beta, _max_length(max_length))
    _solution_pair(E, coupling, complement, _max_length(max_length))
    with ThreadPoolExecutor(max_workers=workers()) as executor:
        results = list(executor.map(row, grid))

    rows = [r for r in results if r is not None]
    dropped = [eps for eps, r in zip(grid, results) if r is None]
    if dropped:
        logger.info(f"{len(dropped)} epsilons beyond the solution range")
    if len(rows) < 2:
        raise RangeExceededError("epsilon too small for range")

    x = [math.log(r["epsilon"]) for r in rows]
    y = [math.log(r["eps_power_M"]) for r in rows]
    slope = float(np.polyfit(x, y, 1)[0])
    trend = classify_trend(slope, threshold)
    logger.info(f"eta={eta}: slope {slope:.4f} -> {trend}")
    return LocalDimReport(eta, float(beta), rows, slope, trend, threshold, dropped)

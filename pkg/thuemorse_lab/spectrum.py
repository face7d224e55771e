"""
Spectrum
Band structure of the periodic approximants sigma_n = {E : |t_n(E)| <= 2}, the nested
approximation sigma_n U sigma_(n+1), and type-I energies (roots of t_k).

Edges are built level by level from t_n - 2 = t_(n-2)^2 (t_(n-1) - 2): the +2 edges of
sigma_n are those of sigma_(n-1) plus the roots of t_(n-2) as double points. Between two
consecutive +2 points with t_n < 2 lie exactly two bands, one root of t_n each, and a dip
below -2 that brackets the -2 edges. Floquet eigenvalues of the 2^n-periodic operator
(t_n(E) = 2 cos phase) give an independent check at small n.
"""

import math
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from .errors import BandIsolationError, PrecisionExhaustedError, ZeroCouplingError
from .numerics import PrecisionReal, mp_context, with_precision
from .sequence import weights
from .settings import section, workers
from .tracemap import raw_traces, trace_derivatives

logger = logging.getLogger(__name__)

INV_PHI = (math.sqrt(5) - 1) / 2


@dataclass(frozen=True)
class Band:
    lo: PrecisionReal
    hi: PrecisionReal
    trace_lo: int
    trace_hi: int
    level: int

    @property
    def width(self) -> float:
        return float(self.hi - self.lo)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "lo": self.lo.to_decimal(),
            "hi": self.hi.to_decimal(),
            "trace_lo": self.trace_lo,
            "trace_hi": self.trace_hi,
        }


@dataclass(frozen=True)
class SpectrumComponent:
    """Connected piece of a band union"""

    lo: PrecisionReal
    hi: PrecisionReal
    members: int


@dataclass(frozen=True)
class SpectrumApprox:
    level: int
    bands: Tuple[Band, ...]
    components: Tuple[SpectrumComponent, ...] = field(default_factory=tuple)
    nested: bool = True
    measure: float = 0.0


@dataclass(frozen=True)
class Dip:
    """Stretch between consecutive +2 points of t_n holding two bands"""

    lo: Any
    hi: Any
    bottom: Any  # t_n(bottom) < -2, or the critical point when the -2 edges touch
    touching: bool


def default_tol(bits: int) -> PrecisionReal:
    """Band-edge tolerance 2^(-bits/4)"""
    ctx = mp_context(bits)
    return PrecisionReal(ctx.ldexp(1, -(bits // 4)), bits)


def floquet_eigenvalues(coupling: float, n: int, phase: float) -> np.ndarray:
    """
    Sorted eigenvalues of the 2^n-periodic operator with Bloch phase `phase`.

    Each eigenvalue E solves t_n(E) = 2 cos(phase).
    """
    p = 2 ** n
    H = np.zeros((p, p), dtype=complex)
    H[np.arange(p), np.arange(p)] = coupling * np.array(weights(1, p + 1), dtype=float)
    off = np.arange(p - 1)
    H[off, off + 1] = 1.0
    H[off + 1, off] = 1.0
    H[p - 1, 0] += np.exp(1j * phase)
    H[0, p - 1] += np.exp(-1j * phase)
    if phase in (0.0, np.pi):
        return np.linalg.eigvalsh(H.real)
    return np.linalg.eigvalsh(H)


def _trace_at(e: Any, lam: Any, n: int, ctx) -> Any:
    return raw_traces(e, lam, max(n, 2), ctx)[n - 1]


def _narrow(fn: Callable[[Any], Any], a: Any, b: Any, ctx, width_tol: Any) -> Tuple[Any, Any]:
    """Sign-change bracket [a, b] of fn shrunk to width `width_tol` or working precision"""
    fa = fn(a)
    floor = ctx.ldexp(max(abs(a), abs(b), 1), -ctx.prec + 4)
    for _ in range(ctx.prec + 16):
        if b - a <= width_tol or b - a <= floor:
            break
        mid = (a + b) / 2
        fm = fn(mid)
        if fm == 0:
            return mid, mid
        if (fa < 0) == (fm < 0):
            a, fa = mid, fm
        else:
            b = mid
    return a, b


def _bisect(fn: Callable[[Any], Any], a: Any, b: Any, ctx, width_tol: Any) -> Any:
    """Root of fn in [a, b] (sign change assumed) to width `width_tol`"""
    a, b = _narrow(fn, a, b, ctx, width_tol)
    return (a + b) / 2


def _golden_dip(fn: Callable[[Any], Any], a: Any, b: Any, ctx, below: Any,
                iterations: int) -> Tuple[Optional[Any], Tuple[Any, Any]]:
    """
    Golden-section descent on a unimodal fn over [a, b].

    Returns (x, bracket) with fn(x) < below as soon as such a point is met, else
    (None, bracket) with the final bracket around the minimum.
    """
    r = ctx.mpf(INV_PHI)
    x1, x2 = b - r * (b - a), a + r * (b - a)
    f1, f2 = fn(x1), fn(x2)
    for _ in range(iterations):
        if f1 < below:
            return x1, (a, b)
        if f2 < below:
            return x2, (a, b)
        if f1 < f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - r * (b - a)
            f1 = fn(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + r * (b - a)
            f2 = fn(x2)
    return None, (a, b)


def _locate_dip(coupling: PrecisionReal, n: int, a: Any, b: Any) -> Dip:
    bits = coupling.prec_bits
    ctx = mp_context(bits)
    lam = ctx.mpf(coupling.value)
    fn = lambda e: _trace_at(e, lam, n, ctx)
    iterations = int(section("spectrum").get("dip_iterations", 60))

    bottom, (lo, hi) = _golden_dip(fn, a, b, ctx, -2, iterations)
    if bottom is not None:
        return Dip(a, b, bottom, False)

    def slope(e):
        return trace_derivatives(PrecisionReal(e, bits), coupling, n)[1][-1]

    if not (slope(lo) < 0 < slope(hi)):
        raise BandIsolationError(f"no critical point of t_{n} isolated near {ctx.nstr(lo, 12)}")
    crit = _bisect(slope, lo, hi, ctx, ctx.ldexp(1, -ctx.prec))
    value = fn(crit)
    if value < -2:
        return Dip(a, b, crit, False)
    if value + 2 <= ctx.ldexp(1, -(bits // 4)):
        logger.debug(f"touching -2 edges at {ctx.nstr(crit, 15)} (level {n})")
        return Dip(a, b, crit, True)
    raise BandIsolationError(f"t_{n} stays above -2 near {ctx.nstr(crit, 12)}")


@lru_cache(maxsize=256)
def _plus_points(coupling: PrecisionReal, n: int, tol: PrecisionReal) -> Tuple[Tuple[Any, int], ...]:
    """Sorted roots of t_n - 2 with multiplicity 1 or 2"""
    ctx = mp_context(coupling.prec_bits)
    lam = ctx.mpf(coupling.value)
    if n == 1:
        s = ctx.sqrt(4 + lam * lam)
        return ((-s, 1), (s, 1))
    if n == 2:
        r = ctx.sqrt(1 + lam * lam)
        return tuple((p, 1) for p in sorted([-r - 1, 1 - r, r - 1, r + 1]))
    doubles = [((a + b) / 2, 2) for a, b in _root_brackets(coupling, n - 2, tol)]
    return tuple(sorted(list(_plus_points(coupling, n - 1, tol)) + doubles, key=lambda p: p[0]))


@lru_cache(maxsize=256)
def _dips(coupling: PrecisionReal, n: int, tol: PrecisionReal) -> Tuple[Dip, ...]:
    ctx = mp_context(coupling.prec_bits)
    lam = ctx.mpf(coupling.value)
    points = [p for p, _ in _plus_points(coupling, n, tol)]

    def scan(pair: Tuple[Any, Any]) -> Optional[Dip]:
        a, b = pair
        if _trace_at((a + b) / 2, lam, n, ctx) >= 2:
            return None
        return _locate_dip(coupling, n, a, b)

    with ThreadPoolExecutor(max_workers=workers()) as executor:
        found = list(executor.map(scan, zip(points, points[1:])))
    dips = tuple(d for d in found if d is not None)
    if len(dips) != 2 ** (n - 1):
        raise BandIsolationError(f"expected {2 ** (n - 1)} band pairs at level {n}, found {len(dips)}")
    return dips


@lru_cache(maxsize=256)
def _root_brackets(coupling: PrecisionReal, n: int, tol: PrecisionReal) -> Tuple[Tuple[Any, Any], ...]:
    """One bracket of width <= tol per root of t_n, sorted"""
    ctx = mp_context(coupling.prec_bits)
    lam = ctx.mpf(coupling.value)
    fn = lambda e: _trace_at(e, lam, n, ctx)

    def split(dip: Dip) -> List[Tuple[Any, Any]]:
        return [_narrow(fn, dip.lo, dip.bottom, ctx, tol.value), _narrow(fn, dip.bottom, dip.hi, ctx, tol.value)]

    with ThreadPoolExecutor(max_workers=workers()) as executor:
        pairs = list(executor.map(split, _dips(coupling, n, tol)))
    return tuple(bracket for pair in pairs for bracket in pair)


def _minus_edges(coupling: PrecisionReal, n: int, tol: PrecisionReal) -> List[Any]:
    ctx = mp_context(coupling.prec_bits)
    lam = ctx.mpf(coupling.value)
    fn = lambda e: _trace_at(e, lam, n, ctx) + 2

    def split(dip: Dip) -> List[Any]:
        if dip.touching:
            return [dip.bottom, dip.bottom]
        return [_bisect(fn, dip.lo, dip.bottom, ctx, tol.value), _bisect(fn, dip.bottom, dip.hi, ctx, tol.value)]

    with ThreadPoolExecutor(max_workers=workers()) as executor:
        pairs = list(executor.map(split, _dips(coupling, n, tol)))
    return [edge for pair in pairs for edge in pair]


def check_band_alternation(bands: List[Band]) -> bool:
    """Each band runs between opposite traces; each gap has equal traces at both ends"""
    for i, band in enumerate(bands):
        if band.trace_lo == band.trace_hi:
            return False
        if i + 1 < len(bands) and band.trace_hi != bands[i + 1].trace_lo:
            return False
    return True


def _check_level(coupling: PrecisionReal, n: int, cap: int):
    if coupling.is_zero():
        raise ZeroCouplingError()
    if not 1 <= n <= cap:
        raise BandIsolationError(f"level {n} outside 1..{cap}")


@lru_cache(maxsize=64)
def _sigma_bands(coupling: PrecisionReal, n: int, tol: PrecisionReal) -> Tuple[Band, ...]:
    edges = [(p, 2) for p, mult in _plus_points(coupling, n, tol) for _ in range(mult)]
    edges += [(m, -2) for m in _minus_edges(coupling, n, tol)]
    edges.sort(key=lambda e: e[0])
    p = 2 ** n
    if len(edges) != 2 * p:
        raise BandIsolationError(f"expected {2 * p} edges at level {n}, found {len(edges)}")

    bands = []
    touching = 0
    for i in range(p):
        (lo, label_lo), (hi, label_hi) = edges[2 * i], edges[2 * i + 1]
        if lo >= hi:
            raise BandIsolationError(f"band {i} at level {n} has no interior")
        if i and lo == edges[2 * i - 1][0]:
            touching += 1
        bands.append(Band(
            lo=PrecisionReal(lo, coupling.prec_bits),
            hi=PrecisionReal(hi, coupling.prec_bits),
            trace_lo=label_lo,
            trace_hi=label_hi,
            level=n,
        ))
    if not check_band_alternation(bands):
        raise BandIsolationError(f"edge traces do not alternate at level {n}")
    logger.info(f"sigma_{n}: {len(bands)} bands ({touching} touching gaps)")
    return tuple(bands)


def sigma_bands(coupling: PrecisionReal, n: int, tol: Optional[PrecisionReal] = None) -> List[Band]:
    """The 2^n bands of sigma_n, sorted, edges to width `tol`"""
    _check_level(coupling, n, int(section("spectrum").get("max_level", 24)))
    tol = tol or default_tol(coupling.prec_bits)
    return list(_sigma_bands(coupling, n, tol))


def merge_bands(bands: List[Band]) -> List[SpectrumComponent]:
    components: List[SpectrumComponent] = []
    for band in sorted(bands, key=lambda b: b.lo.value):
        if components and band.lo <= components[-1].hi:
            last = components[-1]
            hi = band.hi if band.hi > last.hi else last.hi
            components[-1] = SpectrumComponent(last.lo, hi, last.members + 1)
        else:
            components.append(SpectrumComponent(band.lo, band.hi, 1))
    return components


def _covered(inner: List[SpectrumComponent], outer: List[SpectrumComponent], slack: Any) -> bool:
    for comp in inner:
        if not any(comp.lo.value >= o.lo.value - slack and comp.hi.value <= o.hi.value + slack for o in outer):
            return False
    return True


def spectrum_approx(coupling: PrecisionReal, n: int, tol: Optional[PrecisionReal] = None) -> SpectrumApprox:
    """sigma_n U sigma_(n+1), checked for nesting inside the level n-1 approximation"""
    tol = tol or default_tol(coupling.prec_bits)
    bands = sorted(sigma_bands(coupling, n, tol) + sigma_bands(coupling, n + 1, tol), key=lambda b: b.lo.value)
    components = merge_bands(bands)

    nested = True
    if n >= 2:
        previous = merge_bands(sigma_bands(coupling, n - 1, tol) + sigma_bands(coupling, n, tol))
        nested = _covered(components, previous, 4 * tol.value)
        if not nested:
            logger.warning(f"level {n} approximation not covered by level {n - 1}")

    measure = float(sum(c.hi.value - c.lo.value for c in components))
    return SpectrumApprox(level=n, bands=tuple(bands), components=tuple(components), nested=nested, measure=measure)


def contains(approx: SpectrumApprox, E: PrecisionReal, slack: float = 0.0) -> bool:
    return any(c.lo.value - slack <= E.value <= c.hi.value + slack for c in approx.components)


def total_measure(approx: SpectrumApprox) -> float:
    return approx.measure


def type1_residual(E: PrecisionReal, coupling: PrecisionReal, k: int, levels: int) -> Any:
    """max(|t_k(E)|, |t_j(E) - 2| for k+2 <= j <= k+levels)"""
    ctx = mp_context(E.prec_bits)
    t = raw_traces(ctx.mpf(E.value), ctx.mpf(coupling.value), k + levels, ctx)
    return max([abs(t[k - 1])] + [abs(t[j - 1] - 2) for j in range(k + 2, k + levels + 1)])


def type1_energies(coupling: PrecisionReal, k: int, tol: Optional[PrecisionReal] = None) -> List[PrecisionReal]:
    """
    Real roots of t_k, one per band of sigma_k, sorted.

    Roots are bisected to working precision; every root must satisfy |t_k| < tol and
    |t_j - 2| < tol for k+2 <= j <= k+type1_check_levels, else the precision is doubled.
    """
    cfg = section("spectrum")
    _check_level(coupling, k, int(cfg.get("max_type1_level", 20)))
    bits = coupling.prec_bits
    tol = tol or default_tol(bits)
    levels = int(cfg.get("type1_check_levels", 8))
    max_bits = int(cfg.get("max_bits", 4096))
    brackets = _root_brackets(coupling, k, tol)

    while True:
        ctx = mp_context(bits)
        lam = ctx.mpf(coupling.value)
        fn = lambda e: _trace_at(e, lam, k, ctx)
        floor = ctx.ldexp(1, -ctx.prec)

        with ThreadPoolExecutor(max_workers=workers()) as executor:
            roots = list(executor.map(lambda br: _bisect(fn, ctx.mpf(br[0]), ctx.mpf(br[1]), ctx, floor), brackets))
        energies = [PrecisionReal(root, bits) for root in roots]
        worst = max(type1_residual(E, coupling, k, levels) for E in energies)
        if worst < tol.value:
            return energies
        if 2 * bits > max_bits:
            raise PrecisionExhaustedError(k, f"type-I residual {ctx.nstr(worst, 5)} at {bits} bits")
        logger.info(f"type-I roots of t_{k}: residual {ctx.nstr(worst, 5)} at {bits} bits, doubling")
        bits *= 2
        coupling = with_precision(coupling, bits)


def bands_payload(level: int, bands: List[Band]) -> Dict[str, Any]:
    return {"level": level, "bands": [b.to_dict() for b in bands]}

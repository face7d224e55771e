"""
Dynamics
The trace map f(x, y) = (x^2(y-2)+2, x^2 y^2 (y-2)+2), its inverse branches, the strip
S = {|x| <= 1, y <= x^2 - 2}, orbit itineraries, energy classification, and the
nested-interval hunt for type-II/III energies and couplings of the Gamma set.

Depth counts applications of f: one unit of depth is two trace levels.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

from .errors import (
    ConfigError,
    ItineraryInfeasibleError,
    OutsideBranchDomainError,
    PrecisionExhaustedError,
    WindowMissError,
    ZeroCouplingError,
)
from .numerics import PrecisionReal, as_precision, common_bits, mp_context
from .settings import section, workers
from .spectrum import _bisect, default_tol, sigma_bands
from .tracemap import first_divergence, raw_traces, trace_seq

logger = logging.getLogger(__name__)


class EnergyClass(str, Enum):
    TYPE_I = "TypeI"
    TYPE_II = "TypeII"
    TYPE_III = "TypeIII"
    UNDETERMINED = "Undetermined"


@dataclass(frozen=True)
class Point2:
    x: PrecisionReal
    y: PrecisionReal

    @classmethod
    def of(cls, x: Any, y: Any, bits: int = 256) -> "Point2":
        return cls(as_precision(x, bits), as_precision(y, bits))

    @property
    def prec_bits(self) -> int:
        return common_bits(self.x, self.y)


@dataclass
class OrbitRecord:
    """
    Forward orbit of `start` under f. `in_S[j]` tests point j; `itinerary[j]` is defined
    for j < escape_index only.
    """

    start: Point2
    points: List[Point2] = field(default_factory=list)
    in_S: List[bool] = field(default_factory=list)
    itinerary: List[int] = field(default_factory=list)
    escape_index: Optional[int] = None

    def escape_rates(self) -> List[Any]:
        """a_j = x_j^2 - y_j - 2 along the in-S part"""
        last = self.escape_index if self.escape_index is not None else len(self.points)
        return [p.x.value ** 2 - p.y.value - 2 for p in self.points[:last]]

    def escape_bound_holds(self) -> bool:
        """a_j >= 3^j a_0 on every in-S step"""
        rates = self.escape_rates()
        if not rates:
            return True
        a0 = rates[0]
        slack = self.start.x.ctx.ldexp(1, -(self.start.prec_bits // 2))
        return all(a >= (3 ** j) * a0 * (1 - slack) for j, a in enumerate(rates))


@dataclass(frozen=True)
class EnergyClassification:
    energy_class: EnergyClass
    witness_k: int
    depth_verified: int
    diagnostics: Tuple[str, ...] = ()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "class": self.energy_class.value,
            "witness_k": self.witness_k,
            "depth_verified": self.depth_verified,
            "diagnostics": list(self.diagnostics),
        }


@dataclass(frozen=True)
class HuntResult:
    """
    Outcome of a nested-interval hunt. For energy hunts `value` is E; for Gamma hunts
    `value` is y and `energy` is E = +lambda.
    """

    kind: str
    target: str
    value: PrecisionReal
    energy: PrecisionReal
    coupling: PrecisionReal
    witness_k: int
    itinerary: Tuple[int, ...]
    depth_verified: int
    prec_bits: int
    intervals: Tuple[Tuple[PrecisionReal, PrecisionReal], ...]
    reverified: bool

    def to_dict(self) -> Dict[str, Any]:
        payload = {
            "lambda": self.coupling.to_decimal(),
            "E": self.energy.to_decimal(),
            "prec_bits": self.prec_bits,
            "witness_k": self.witness_k,
            "itinerary": list(self.itinerary),
            "depth_verified": self.depth_verified,
            "target": self.target,
            "reverified": self.reverified,
            "intervals": [[lo.to_decimal(), hi.to_decimal()] for lo, hi in self.intervals],
        }
        if self.kind == "coupling":
            payload["y"] = self.value.to_decimal()
        return payload


# Raw mpmath helpers: the hunt evaluates thousands of orbits


def _f(x: Any, y: Any) -> Tuple[Any, Any]:
    x2 = x * x
    base = x2 * (y - 2)
    return base + 2, base * y * y + 2


def _in_strip(x: Any, y: Any) -> bool:
    return -1 <= x <= 1 and y <= x * x - 2


def symbol_of(x: Any) -> int:
    if x == 0:
        logger.warning("itinerary tie at x = 0, using symbol 0")
    return 1 if x > 0 else 0


def f_map(p: Point2) -> Point2:
    bits = p.prec_bits
    ctx = mp_context(bits)
    x, y = _f(ctx.mpf(p.x.value), ctx.mpf(p.y.value))
    return Point2(PrecisionReal(x, bits), PrecisionReal(y, bits))


def f_inverse_relations(p: Point2) -> Tuple[Any, Any]:
    """
    Relative residuals of y1 - 2 = x^2 y^2 (y-2) and
    y1 - x1^2 + 2 = (y - x^2 + 2)(y-2)^2 x^2 for (x1, y1) = f(x, y).
    """
    ctx = mp_context(p.prec_bits)
    x, y = ctx.mpf(p.x.value), ctx.mpf(p.y.value)
    x1, y1 = _f(x, y)
    first = x * x * y * y * (y - 2)
    second = (y - x * x + 2) * (y - 2) ** 2 * x * x
    r1 = abs(y1 - 2 - first) / max(1, abs(first), abs(y1))
    r2 = abs(y1 - x1 * x1 + 2 - second) / max(1, abs(second), abs(y1), x1 * x1)
    return r1, r2


def inverse_branch(p: Point2, eps: int, eta: int) -> Point2:
    """
    F_{eps,eta}(x, y) = (eps sqrt((2-x)/(2 - eta sqrt((2-y)/(2-x)))), eta sqrt((2-y)/(2-x))).

    F_0 = F_{-,-}, F_1 = F_{+,-}, F_2 = F_{-,+}, F_3 = F_{+,+}.
    """
    if eps not in (1, -1) or eta not in (1, -1):
        raise ConfigError("branch signs must be +1 or -1")
    bits = p.prec_bits
    ctx = mp_context(bits)
    x, y = ctx.mpf(p.x.value), ctx.mpf(p.y.value)
    lower = x < 2 and y < 2
    if eta < 0:
        inside = lower
    else:
        inside = (lower or (x > 2 and y > 2)) and y - 4 * x + 6 > 0
    if not inside:
        raise OutsideBranchDomainError()
    y_hat = eta * ctx.sqrt((2 - y) / (2 - x))
    x_hat = eps * ctx.sqrt((2 - x) / (2 - y_hat))
    return Point2(PrecisionReal(x_hat, bits), PrecisionReal(y_hat, bits))


def branch(p: Point2, index: int) -> Point2:
    """F_0..F_3 by index"""
    signs = {0: (-1, -1), 1: (1, -1), 2: (-1, 1), 3: (1, 1)}
    if index not in signs:
        raise ConfigError(f"unknown inverse branch F_{index}")
    return inverse_branch(p, *signs[index])


def _orbit_values(x: Any, y: Any, steps: int) -> List[Tuple[Any, Any]]:
    points = [(x, y)]
    for _ in range(steps):
        x, y = _f(x, y)
        points.append((x, y))
    return points


def orbit_in_S(p: Point2, max_iter: int) -> OrbitRecord:
    """Iterate f until the orbit leaves S or max_iter steps are done"""
    if max_iter < 1:
        raise ConfigError("max_iter must be at least 1")
    bits = p.prec_bits
    ctx = mp_context(bits)
    x, y = ctx.mpf(p.x.value), ctx.mpf(p.y.value)

    values = [(x, y)]
    escape = None if _in_strip(x, y) else 0
    while escape is None and len(values) <= max_iter:
        x, y = _f(x, y)
        values.append((x, y))
        if not _in_strip(x, y):
            escape = len(values) - 1

    shadow_ctx = mp_context(max(32, bits // 2))
    shadow = _orbit_values(shadow_ctx.mpf(p.x.value), shadow_ctx.mpf(p.y.value), len(values) - 1)
    bad = first_divergence([v for pt in values for v in pt], [v for pt in shadow for v in pt], bits, ctx)
    if bad is not None:
        raise PrecisionExhaustedError((bad - 1) // 2)

    record = OrbitRecord(start=p, escape_index=escape)
    for j, (xj, yj) in enumerate(values):
        record.points.append(Point2(PrecisionReal(xj, bits), PrecisionReal(yj, bits)))
        inside = escape is None or j < escape
        record.in_S.append(inside)
        if inside:
            record.itinerary.append(symbol_of(xj))

    if escape is None and len(values) > 2:
        logger.debug(f"orbit stayed in S for {max_iter} steps, x -> {ctx.nstr(values[-1][0], 5)}, "
                     f"y -> {ctx.nstr(values[-1][1], 5)}")
    return record


def orbit_rows(record: OrbitRecord) -> List[Dict[str, Any]]:
    rows = []
    for j, point in enumerate(record.points):
        rows.append({
            "j": j,
            "x": point.x.to_decimal(),
            "y": point.y.to_decimal(),
            "in_S": record.in_S[j],
            "symbol": record.itinerary[j] if j < len(record.itinerary) else "",
        })
    return rows


def pad_itinerary(itinerary: Sequence[int], length: int) -> List[int]:
    """Truncate, or repeat the last symbol up to `length`"""
    symbols = list(itinerary) or [0]
    if any(s not in (0, 1) for s in symbols):
        raise ConfigError("itinerary symbols must be 0 or 1")
    symbols = symbols[:length]
    return symbols + [symbols[-1]] * (length - len(symbols))


@dataclass
class _Outcome:
    param: Any
    bits: int
    intervals: List[Tuple[Any, Any]]
    reverified: bool


class ItineraryHunter:
    """
    Nested-interval search for a parameter whose seeded orbit stays in S with a
    prescribed itinerary.

    Round j samples branching+1 nodes of the current interval, aims x_j at the symbol's
    target value, and shrinks the interval to the part whose first j+1 points stay in the
    right half of S. Precision doubles whenever the shadow run disagrees.
    """

    def __init__(
        self,
        seed: Callable[[Any, Any], Tuple[Any, Any]],
        start_interval: Callable[[Any], Tuple[Any, Any]],
        itinerary: Sequence[int],
        depth: int,
        label: str = "hunt",
    ):
        if depth < 1:
            raise ConfigError("depth must be at least 1")
        cfg = section("dynamics")
        self.seed = seed
        self.start_interval = start_interval
        self.depth = depth
        self.symbols = pad_itinerary(itinerary, depth + 1)
        self.label = label
        self.branching = int(cfg.get("branching", 8))
        self.start_bits = int(cfg.get("start_bits", 256))
        self.max_bits = int(cfg.get("max_bits", 8192))
        self.targets = [float(v) for v in cfg.get("symbol_targets", [-0.5, 0.5])]

    def orbit(self, param: Any, steps: int, bits: int) -> List[Tuple[Any, Any]]:
        ctx = mp_context(bits)
        x, y = self.seed(ctx.mpf(param), ctx)
        return _orbit_values(x, y, steps)

    def predicate(self, points: List[Tuple[Any, Any]], j: int) -> bool:
        for i in range(j + 1):
            x, y = points[i]
            if not _in_strip(x, y) or x == 0 or (1 if x > 0 else 0) != self.symbols[i]:
                return False
        return True

    def run(self) -> _Outcome:
        bits = self.start_bits
        while True:
            try:
                return self._run_at(bits)
            except PrecisionExhaustedError as exc:
                if 2 * bits > self.max_bits:
                    raise
                logger.info(f"{self.label}: precision exhausted at index {exc.index}, retrying at {2 * bits} bits")
                bits *= 2

    def _run_at(self, bits: int) -> _Outcome:
        ctx = mp_context(bits)
        lo, hi = self.start_interval(ctx)
        intervals = []
        point = None
        for j in range(self.depth + 1):
            point, lo, hi = self._round(j, lo, hi, bits)
            intervals.append((lo, hi))
            self._shadow_check(point, j, bits)
            logger.debug(f"{self.label} round {j}: {ctx.nstr(point, 20)} in width {ctx.nstr(hi - lo, 3)}")
        logger.info(f"{self.label}: depth {self.depth} reached at {bits} bits")
        return _Outcome(point, bits, intervals, self._reverify(point, bits))

    def _x(self, param: Any, j: int, bits: int) -> Any:
        return self.orbit(param, j, bits)[j][0]

    def _round(self, j: int, lo: Any, hi: Any, bits: int) -> Tuple[Any, Any, Any]:
        ctx = mp_context(bits)
        target = ctx.mpf(self.targets[self.symbols[j]])
        nodes = [lo + (hi - lo) * i / self.branching for i in range(self.branching + 1)]
        with ThreadPoolExecutor(max_workers=workers()) as executor:
            orbits = list(executor.map(lambda p: self.orbit(p, j, bits), nodes))
        xs = [o[j][0] for o in orbits]
        ok = [self.predicate(o, j) for o in orbits]

        point = None
        for i in range(self.branching):
            if (xs[i] < target) != (xs[i + 1] < target):
                point = self._aim(nodes[i], nodes[i + 1], j, target, bits)
                break
        if point is None or not self.predicate(self.orbit(point, j, bits), j):
            candidates = [(abs(xs[i] - target), i) for i in range(len(nodes)) if ok[i]]
            if not candidates:
                raise ItineraryInfeasibleError(j)
            point = nodes[min(candidates)[1]]

        left = [i for i in range(len(nodes)) if nodes[i] < point][::-1]
        right = [i for i in range(len(nodes)) if nodes[i] > point]
        new_lo = self._boundary(point, nodes, ok, left, j, bits, lo)
        new_hi = self._boundary(point, nodes, ok, right, j, bits, hi)
        return point, new_lo, new_hi

    def _aim(self, a: Any, b: Any, j: int, target: Any, bits: int) -> Any:
        """Bisect x_j = target to within 2^-20"""
        ctx = mp_context(bits)
        close = ctx.ldexp(1, -20)
        fa = self._x(a, j, bits) - target
        mid = (a + b) / 2
        for _ in range(bits - 16):
            mid = (a + b) / 2
            fm = self._x(mid, j, bits) - target
            if abs(fm) < close:
                break
            if (fa < 0) == (fm < 0):
                a, fa = mid, fm
            else:
                b = mid
        return mid

    def _boundary(self, point: Any, nodes: List[Any], ok: List[bool], order: List[int],
                  j: int, bits: int, fallback: Any) -> Any:
        """Edge of the depth-j cylinder between `point` and the first failing node"""
        outside = next((nodes[i] for i in order if not ok[i]), None)
        if outside is None:
            return fallback
        inside = point
        for step in range(bits - 16):
            x, y = self.orbit(inside, j, bits)[j]
            if abs(x) < 0.5 and x * x * abs(y - 2) < 0.5:
                return inside
            if abs(x) >= 0.5 and step >= 30:
                return inside
            mid = (inside + outside) / 2
            if self.predicate(self.orbit(mid, j, bits), j):
                inside = mid
            else:
                outside = mid
        raise PrecisionExhaustedError(j, "cylinder boundary not resolved")

    def _shadow_check(self, point: Any, j: int, bits: int):
        ctx = mp_context(bits)
        main = self.orbit(point, j + 1, bits)
        shadow = self.orbit(point, j + 1, max(32, bits // 2))
        bad = first_divergence([v for pt in main for v in pt], [v for pt in shadow for v in pt], bits, ctx)
        if bad is not None:
            raise PrecisionExhaustedError((bad - 1) // 2)

    def _reverify(self, point: Any, bits: int) -> bool:
        return self.predicate(self.orbit(point, self.depth, 2 * bits), self.depth)


def _witness_ks(target: EnergyClass) -> List[int]:
    limit = int(section("dynamics").get("max_witness", 9))
    if target is EnergyClass.TYPE_III:
        return list(range(1, limit + 1, 2))
    if target is EnergyClass.TYPE_II:
        return list(range(2, limit + 1, 2))
    raise ConfigError(f"hunt target must be TypeII or TypeIII, got {target}")


def _unit_interval(coupling: PrecisionReal, k: int, band, window: Tuple[Any, Any]) -> Optional[Tuple[Any, Any]]:
    """t_k^-1([-1, 1]) inside `band`, clipped to the window"""
    bits = coupling.prec_bits
    ctx = mp_context(bits)
    lam = ctx.mpf(coupling.value)
    width = ctx.ldexp(1, -(bits // 2))
    ends = []
    for level in (-1, 1):
        fn = lambda e, v=level: raw_traces(e, lam, max(k, 2), ctx)[k - 1] - v
        ends.append(_bisect(fn, ctx.mpf(band.lo.value), ctx.mpf(band.hi.value), ctx, width))
    lo, hi = max(min(ends), window[0]), min(max(ends), window[1])
    return (lo, hi) if lo < hi else None


def hunt_energy(
    coupling: PrecisionReal,
    window: Tuple[Any, Any],
    target: Union[EnergyClass, str],
    itinerary_prefix: Sequence[int],
    depth: int,
) -> HuntResult:
    """
    Energy in the window whose phi_k orbit (k odd for TypeIII, even for TypeII) stays in S
    for `depth` steps with the given itinerary.
    """
    if coupling.is_zero():
        raise ZeroCouplingError()
    target = EnergyClass(target)
    bits = coupling.prec_bits
    ctx = mp_context(bits)
    w_lo, w_hi = sorted(ctx.mpf(as_precision(w, bits).value) for w in window)

    touched = False
    last_error: Optional[ItineraryInfeasibleError] = None
    for k in _witness_ks(target):
        for band in sigma_bands(coupling, k):
            if band.hi.value < w_lo or band.lo.value > w_hi:
                continue
            span = _unit_interval(coupling, k, band, (w_lo, w_hi))
            if span is None:
                continue
            touched = True
            lam = coupling.value

            def seed(E, c, k=k):
                t = raw_traces(E, c.mpf(lam), k + 1, c)
                return t[k - 1], t[k]

            hunter = ItineraryHunter(
                seed, lambda c, s=span: (c.mpf(s[0]), c.mpf(s[1])), itinerary_prefix, depth,
                label=f"{target.value} hunt k={k}",
            )
            try:
                outcome = hunter.run()
            except ItineraryInfeasibleError as exc:
                logger.info(f"k={k} band [{ctx.nstr(band.lo.value, 10)}, {ctx.nstr(band.hi.value, 10)}]: {exc}")
                last_error = exc
                continue
            energy = PrecisionReal(outcome.param, outcome.bits)
            logger.info(f"hunted {target.value} energy {ctx.nstr(outcome.param, 15)} (k={k}, {outcome.bits} bits)")
            return HuntResult(
                kind="energy",
                target=target.value,
                value=energy,
                energy=energy,
                coupling=coupling,
                witness_k=k,
                itinerary=tuple(hunter.symbols),
                depth_verified=depth,
                prec_bits=outcome.bits,
                intervals=tuple((PrecisionReal(a, outcome.bits), PrecisionReal(b, outcome.bits))
                                for a, b in outcome.intervals),
                reverified=outcome.reverified,
            )
    if not touched:
        raise WindowMissError()
    raise last_error


def find_typed_energy(
    coupling: PrecisionReal,
    window: Tuple[Any, Any],
    target: Union[EnergyClass, str],
    itinerary_prefix: Sequence[int],
    depth: int,
) -> PrecisionReal:
    return hunt_energy(coupling, window, target, itinerary_prefix, depth).energy


def hunt_gamma(itinerary_prefix: Sequence[int], depth: int) -> HuntResult:
    """
    y in [5/4, 7/4] whose point f(-2, y) = (4y - 6, 4y^2(y-2) + 2) stays in S with the given
    itinerary; the coupling is sqrt(2 - y)/2 and E = +-lambda has t_1 = -2.
    """
    if len(itinerary_prefix) > depth:
        raise ConfigError("itinerary longer than depth")

    def seed(y, ctx):
        return _f(ctx.mpf(-2), y)

    hunter = ItineraryHunter(
        seed, lambda c: (c.mpf(5) / 4, c.mpf(7) / 4), itinerary_prefix, depth, label="gamma hunt",
    )
    outcome = hunter.run()
    ctx = mp_context(outcome.bits)
    y = outcome.param
    lam = ctx.sqrt(2 - y) / 2
    coupling = PrecisionReal(lam, outcome.bits)
    return HuntResult(
        kind="coupling",
        target=EnergyClass.TYPE_III.value,
        value=PrecisionReal(y, outcome.bits),
        energy=coupling,
        coupling=coupling,
        witness_k=3,
        itinerary=tuple(hunter.symbols),
        depth_verified=depth,
        prec_bits=outcome.bits,
        intervals=tuple((PrecisionReal(a, outcome.bits), PrecisionReal(b, outcome.bits))
                        for a, b in outcome.intervals),
        reverified=outcome.reverified,
    )


def gamma_coupling_sample(itinerary_prefix: Sequence[int], depth: int) -> Tuple[PrecisionReal, PrecisionReal]:
    result = hunt_gamma(itinerary_prefix, depth)
    return result.coupling, result.value


def _run_in_S(seq, k: int, depth: int) -> int:
    """Consecutive j >= 0 with phi_(k+2j) in S"""
    run = 0
    for j in range(depth + 1):
        n = k + 2 * j
        if n + 1 > seq.N or not _in_strip(seq.trace(n), seq.trace(n + 1)):
            break
        run += 1
    return run


def classify_energy(
    E: PrecisionReal,
    coupling: PrecisionReal,
    depth: int,
    tol: Optional[PrecisionReal] = None,
) -> EnergyClassification:
    """
    TypeI when some t_k vanishes; otherwise the longest in-S run of phi_k over
    k <= classify_scan decides the parity. Undetermined is a value, not an error.
    """
    if depth < 2:
        raise ConfigError("depth must be at least 2")
    cfg = section("dynamics")
    scan = int(cfg.get("classify_scan", 8))
    min_steps = int(cfg.get("min_steps", 2))
    confident_steps = int(cfg.get("confident_steps", 4))
    bits = common_bits(E, coupling)
    tol = tol or default_tol(bits)

    seq = trace_seq(E, coupling, scan + 2 * depth + 1, on_exhaustion="truncate")
    diagnostics = []
    for n in range(1, seq.N):
        if abs(seq.trace(n)) > 2 and abs(seq.trace(n + 1)) > 2:
            diagnostics.append("outside spectrum approximation")
            break
    if seq.reliable_until < scan + 2 * depth + 1:
        diagnostics.append(f"traces reliable to index {seq.reliable_until}")

    for k in range(1, min(depth, seq.N - 2) + 1):
        if abs(seq.trace(k)) < tol.value and abs(seq.trace(k + 2) - 2) < tol.value:
            return EnergyClassification(EnergyClass.TYPE_I, k, depth, tuple(diagnostics))

    best_k, best_run = 0, 0
    for k in range(1, scan + 1):
        run = _run_in_S(seq, k, depth)
        if run > best_run:
            best_k, best_run = k, run
    verified = best_run - 1
    if best_run and verified >= min(depth, min_steps):
        if verified < min(depth, confident_steps):
            diagnostics.append(f"low confidence: in S for {verified} steps")
        verdict = EnergyClass.TYPE_II if best_k % 2 == 0 else EnergyClass.TYPE_III
        return EnergyClassification(verdict, best_k, verified, tuple(diagnostics))
    return EnergyClassification(EnergyClass.UNDETERMINED, best_k, max(verified, 0), tuple(diagnostics))

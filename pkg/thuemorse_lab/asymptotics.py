"""
Asymptotics
Growth rate gamma(E), sign bookkeeping, matrix limit laws, stable directions, solution
profiles and norm envelopes at type-II and type-III energies.
"""

import math
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .dynamics import EnergyClass
from .errors import ConfigError, DirectionUnresolvedError, NotAsymptoticError, StructureLawError
from .numerics import PrecisionReal, ScaledMat2, common_bits, mp_context
from .sequence import tm_letter
from .settings import section
from .tracemap import TraceSequence, coupling_angle, eventual_sign, trace_seq
from .transfer import exact_dyadic_pairs, mp_basis

logger = logging.getLogger(__name__)

LN2 = math.log(2.0)
SQRT2 = math.sqrt(2.0)

TypeTag = Union[EnergyClass, str]


def _tag(type_tag: TypeTag) -> EnergyClass:
    tag = EnergyClass(type_tag)
    if tag not in (EnergyClass.TYPE_II, EnergyClass.TYPE_III):
        raise ConfigError(f"expected TypeII or TypeIII, got {tag.value}")
    return tag


@dataclass(frozen=True)
class GammaEstimate:
    gamma: PrecisionReal
    residuals: Tuple[Tuple[int, float], ...]
    type_tag: EnergyClass
    gaps: Tuple[Tuple[int, float], ...] = ()
    refined: Dict[str, List[Tuple[int, float]]] = field(default_factory=dict)

    @property
    def value(self) -> float:
        return float(self.gamma)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "gamma": self.gamma.to_decimal(),
            "type": self.type_tag.value,
            "gamma_residuals": [[n, g] for n, g in self.residuals],
            "gaps": [[n, g] for n, g in self.gaps],
            "refined": {k: [[n, v] for n, v in rows] for k, rows in sorted(self.refined.items())},
        }


@dataclass(frozen=True)
class SignBook:
    """eta = eventual sign(mu_n), eta_hat = eventual sign(nu_n), delta_n = xi_1 ... xi_n"""

    eta: int
    eta_constant: bool
    eta_hat: int
    eta_hat_constant: bool
    xi: Tuple[int, ...]
    delta: Tuple[int, ...]


@dataclass(frozen=True)
class DirectionPair:
    s: np.ndarray
    s_hat: np.ndarray
    angle_s: float
    angle_s_hat: float
    s_exact: Tuple[Any, Any]
    s_hat_exact: Tuple[Any, Any]
    gaps: Tuple[float, ...] = ()
    resolution: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "angle_s": self.angle_s,
            "angle_s_hat": self.angle_s_hat,
            "gaps": list(self.gaps),
            "resolution": self.resolution,
        }


@dataclass
class SolutionProfile:
    E: PrecisionReal
    coupling: PrecisionReal
    initial_angle: float
    samples: List[Tuple[int, float]]
    fitted_alpha: float
    fitted_decay_rate: float
    vectors: Dict[int, Tuple[Any, Any]] = field(default_factory=dict, repr=False)

    def log_norm_at(self, n: int) -> float:
        a, b = self.vectors[n]
        return _vec_log_norm(a, b)


@dataclass
class StructureReport:
    type_tag: EnergyClass
    signs: SignBook
    gamma: float
    residuals: Dict[str, List[Tuple[int, float]]] = field(default_factory=dict)
    constants: Dict[str, List[Tuple[int, float]]] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "type": self.type_tag.value,
            "gamma": self.gamma,
            "eta": self.signs.eta,
            "eta_hat": self.signs.eta_hat,
            "structure_residuals": {k: [[n, r] for n, r in rows] for k, rows in sorted(self.residuals.items())},
            "constants": {k: [[n, c] for n, c in rows] for k, rows in sorted(self.constants.items())},
        }


@dataclass
class EnvelopeReport:
    type_tag: str
    C: float
    alpha: float
    block_violations: List[int]
    envelope_violations: List[int]
    c1: float
    c2: float
    oscillation: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "type": self.type_tag,
            "envelope_C": self.C,
            "alpha": self.alpha,
            "block_violations": self.block_violations,
            "envelope_violations": self.envelope_violations,
            "c1": self.c1,
            "c2": self.c2,
            "oscillation": self.oscillation,
        }


def _vec_log_norm(a: Any, b: Any) -> float:
    ctx = mp_context(64)
    return float(ctx.log(ctx.sqrt(ctx.mpf(a) ** 2 + ctx.mpf(b) ** 2)))


def asymptotic_levels(seq: TraceSequence, type_tag: TypeTag) -> List[int]:
    """
    First maximal run of levels n with a large negative trace and a small companion:
    t_(2n-1) < -2, |t_2n| < 1 (TypeII) or t_2n < -2, |t_(2n+1)| < 1 (TypeIII).
    """
    tag = _tag(type_tag)
    big_idx = (lambda n: 2 * n - 1) if tag is EnergyClass.TYPE_II else (lambda n: 2 * n)
    levels: List[int] = []
    n = 1
    while big_idx(n) + 1 <= seq.N:
        big, small = seq.trace(big_idx(n)), seq.trace(big_idx(n) + 1)
        if big < -2 and abs(small) < 1:
            levels.append(n)
        elif levels:
            break
        n += 1
    return levels


def estimate_gamma(seq: TraceSequence, type_tag: TypeTag) -> GammaEstimate:
    """
    gamma_n = log|big trace at level n| / 2^n, extrapolated as gamma_N + ln 2 / 2^N.

    The large trace is t_(2n-1) for TypeII and t_2n for TypeIII; both behave like e^(2^n gamma)/2.
    """
    tag = _tag(type_tag)
    levels = asymptotic_levels(seq, tag)
    if len(levels) < 3:
        raise NotAsymptoticError(f"only {len(levels)} asymptotic levels")
    ctx = seq.ctx
    big_idx = (lambda n: 2 * n - 1) if tag is EnergyClass.TYPE_II else (lambda n: 2 * n)

    raw = {n: ctx.log(abs(seq.trace(big_idx(n)))) / 2 ** n for n in levels}
    gaps = [(n, float(2 ** (n + 1) * (raw[n + 1] - raw[n]))) for n in levels[:-1]]
    tolerance = float(section("asymptotics").get("gap_tolerance", 0.5))
    if abs(gaps[-1][1] - LN2) > tolerance:
        raise NotAsymptoticError(f"gap {gaps[-1][1]:.4f} at level {gaps[-1][0]}")

    last = levels[-1]
    gamma = raw[last] + ctx.log(2) / 2 ** last
    if gamma <= 0:
        raise NotAsymptoticError("non-positive growth rate")
    residuals = tuple((n, float(raw[n])) for n in levels)
    refined = _refined_products(seq, tag, gamma, levels)
    logger.info(f"gamma = {ctx.nstr(gamma, 12)} from levels {levels[0]}..{last}")
    return GammaEstimate(PrecisionReal(gamma, seq.prec_bits), residuals, tag, tuple(gaps), refined)


def _refined_products(seq: TraceSequence, tag: EnergyClass, gamma: Any, levels: List[int]) -> Dict[str, List[Tuple[int, float]]]:
    ctx = seq.ctx
    refined: Dict[str, List[Tuple[int, float]]] = {"large": [], "small": [], "mu": [], "nu": [], "omega": []}
    for n in levels:
        scale = ctx.exp(2 ** n * gamma)
        if tag is EnergyClass.TYPE_II:
            refined["large"].append((n, float(abs(seq.trace(2 * n - 1)) / scale)))
            refined["small"].append((n, float(abs(seq.trace(2 * n)) * scale)))
            if n <= len(seq.mu):
                refined["mu"].append((n, float(abs(seq.mu[n - 1]) / scale)))
        else:
            refined["large"].append((n, float(abs(seq.trace(2 * n)) / scale)))
            refined["small"].append((n, float(abs(seq.trace(2 * n + 1)) * scale)))
            if n <= len(seq.mu):
                refined["mu"].append((n, float(abs(seq.mu[n - 1]) / ctx.exp(2 ** (n - 1) * gamma))))
        if n <= len(seq.nu):
            refined["nu"].append((n, float(abs(seq.nu[n - 1]) / scale)))
            refined["omega"].append((n, float(abs(seq.omega[n - 1]) / scale)))
    return refined


def expected_refined(type_tag: TypeTag, theta: float) -> Dict[str, float]:
    """Limits of the refined products"""
    tag = _tag(type_tag)
    sec, tan = 1.0 / math.cos(theta), abs(math.tan(theta))
    if tag is EnergyClass.TYPE_II:
        return {"large": 0.5, "small": 2.0, "mu": 0.5, "nu": sec / SQRT2, "omega": tan / SQRT2}
    return {"large": 0.5, "small": 2.0, "mu": 1.0 / SQRT2, "nu": sec / 2.0, "omega": tan / 2.0}


def sign_bookkeeping(seq: TraceSequence, type_tag: TypeTag) -> SignBook:
    """
    xi_n = -sign(t_2n) (TypeII) or -sign(t_(2n-1)) (TypeIII); delta_n = xi_1 ... xi_n.
    Eventual signs are read inside the asymptotic range.
    """
    tag = _tag(type_tag)
    levels = asymptotic_levels(seq, tag) or [1]
    top = levels[-1]
    mu = list(seq.mu[:top]) or list(seq.mu)
    nu = list(seq.nu[:top]) or list(seq.nu)
    eta, eta_const = eventual_sign(mu)
    eta_hat, eta_hat_const = eventual_sign(nu)

    xi = []
    for n in range(1, top + 2):
        idx = 2 * n if tag is EnergyClass.TYPE_II else 2 * n - 1
        if idx > seq.N:
            break
        xi.append(-1 if seq.trace(idx) > 0 else 1)
    delta = []
    acc = 1
    for x in xi:
        acc *= x
        delta.append(acc)
    return SignBook(eta, eta_const, eta_hat, eta_hat_const, tuple(xi), tuple(delta))


def _inner(A: Any, B: Any) -> Any:
    return sum(A[i, j] * B[i, j] for i in range(2) for j in range(2))


def _limit_matrices(ctx, tag: EnergyClass, signs: SignBook, theta: Optional[Any]) -> Dict[str, Any]:
    basis = mp_basis(ctx)
    I, U, V, W = basis["I"], basis["U"], basis["V"], basis["W"]
    if tag is EnergyClass.TYPE_II:
        eta = signs.eta
        return {"odd": (I - eta * U) / 2, "even_A": V + eta * W, "even_B": V - eta * W}
    sec, tan = 1 / ctx.cos(theta), ctx.tan(theta)
    e = signs.eta_hat
    C = I - e * sec * V - e * tan * W
    C_other = I + e * sec * V + e * tan * W
    return {"even": C / 2, "odd_A": U * C, "odd_B": U * C_other}


def _decays(rows: List[Tuple[int, float]], floor: float, factor: float) -> bool:
    usable = [r for _, r in rows if r > floor]
    if len(usable) < 3:
        return True
    a, b, c = usable[-3:]
    return a >= factor * b and b >= factor * c


def structure_limits(
    E: PrecisionReal,
    coupling: PrecisionReal,
    type_tag: TypeTag,
    depth: int,
    min_decay: float = 5.0,
) -> StructureReport:
    """
    Frobenius residuals of the matrix limit laws for n = 1..depth.

    TypeII: A_(2n+1)/t_(2n+1) -> (I - eta U)/2, t_2n A_2n -> delta_n c (V + eta W),
    t_2n B_2n -> delta_n c_hat (V - eta W), and |B_2n^2 A_2n| e^(-2^n gamma) -> sqrt(1 + c^2).
    TypeIII: A_2n/t_2n -> C_eta_hat/2 and t_(2n-1) A_(2n-1) -> delta_hat_n c U C_eta_hat with |c| = sqrt(2)/2.
    """
    tag = _tag(type_tag)
    if not 2 <= depth <= 19:
        raise ConfigError("structure depth must be within 2..19")
    top = 2 * depth + 1
    seq = trace_seq(E, coupling, top + 1, on_exhaustion="truncate")
    if seq.N < top:
        raise StructureLawError(f"traces reliable only to index {seq.N}")
    pairs = exact_dyadic_pairs(E, coupling, top)
    bits = pairs[0].prec_bits
    ctx = mp_context(bits)
    fro = lambda M: ctx.mnorm(M, 'f')

    signs = sign_bookkeeping(seq, tag)
    gamma = estimate_gamma(seq, tag).gamma.value
    theta = coupling_angle(E, coupling).theta.value if tag is EnergyClass.TYPE_III else None
    limits = _limit_matrices(ctx, tag, signs, theta)
    report = StructureReport(tag, signs, float(gamma))

    def put(table, name, n, value):
        table.setdefault(name, []).append((n, float(value)))

    # law -> (limit key, [(n, delta_n, scaled matrix, constant at level n)])
    scaled_laws: Dict[str, Tuple[str, List[Tuple[int, int, Any, Any]]]] = {}

    def collect(law, constant, key, n, delta, X):
        L = limits[key]
        c = delta * _inner(X, L) / (4 if tag is EnergyClass.TYPE_II else _inner(L, L))
        put(report.constants, constant, n, c)
        scaled_laws.setdefault(law, (key, []))[1].append((n, delta, X, c))
        return c

    for n in range(1, depth + 1):
        delta = signs.delta[n - 1] if n <= len(signs.delta) else 1
        if tag is EnergyClass.TYPE_II:
            A_odd = pairs[2 * n + 1].A
            put(report.residuals, "odd", n, fro(A_odd / seq.trace(2 * n + 1) - limits["odd"]))
            t = seq.trace(2 * n)
            c = collect("even_A", "c", "even_A", n, delta, t * pairs[2 * n].A)
            collect("even_B", "c_hat", "even_B", n, delta, t * pairs[2 * n].B)
            B, A = pairs[2 * n].B, pairs[2 * n].A
            ratio = ScaledMat2.from_mp(_entries(B * B * A), ctx).log_norm() - float(2 ** n * gamma)
            put(report.constants, "b2a_ratio", n, math.exp(ratio))
            put(report.constants, "b2a_target", n, ctx.sqrt(1 + c * c))
        else:
            A_even = pairs[2 * n].A
            put(report.residuals, "even", n, fro(A_even / seq.trace(2 * n) - limits["even"]))
            t = seq.trace(2 * n - 1)
            collect("odd_A", "c", "odd_A", n, delta, t * pairs[2 * n - 1].A)
            collect("odd_B", "c_hat", "odd_B", n, delta, t * pairs[2 * n - 1].B)

    # one constant per law, taken at the deepest level; delta_n carries the sign at every level
    for law, (key, rows) in scaled_laws.items():
        c = rows[-1][3]
        for n, delta, X, _ in rows:
            put(report.residuals, law, n, fro(X - delta * c * limits[key]))

    floor = float(ctx.ldexp(1, -(bits // 2)))
    for name, rows in report.residuals.items():
        if not _decays(rows, floor, min_decay):
            raise StructureLawError(f"{name} residuals {[f'{r:.2e}' for _, r in rows]}")
    if tag is EnergyClass.TYPE_III:
        c_last = abs(report.constants["c"][-1][1])
        if abs(c_last - SQRT2 / 2) > 0.05 * SQRT2 / 2:
            raise StructureLawError(f"odd-level scalar {c_last:.6f}")
    return report


def _entries(M: Any) -> List[Any]:
    return [M[0, 0], M[0, 1], M[1, 0], M[1, 1]]


def line_angle(v: Tuple[Any, Any], ctx) -> Any:
    """theta with v parallel to (cos theta, -sin theta), reduced to (-pi/2, pi/2]"""
    theta = ctx.atan2(-v[1], v[0])
    if theta > ctx.pi / 2:
        theta -= ctx.pi
    elif theta <= -ctx.pi / 2:
        theta += ctx.pi
    return theta


def _min_direction(M: Any, ctx) -> Tuple[Any, Any]:
    _, S, V = ctx.svd_r(M)
    idx = 0 if S[0] <= S[1] else 1
    theta = line_angle((V[idx, 0], V[idx, 1]), ctx)
    return ctx.cos(theta), -ctx.sin(theta)


def _sin_between(a: Tuple[Any, Any], b: Tuple[Any, Any]) -> float:
    return float(abs(a[0] * b[1] - a[1] * b[0]))


def direction_levels(type_tag: TypeTag, depth: int) -> List[int]:
    """A_2n (TypeII) or A_(2n-1) (TypeIII) for n = 1..depth"""
    tag = _tag(type_tag)
    return [2 * n if tag is EnergyClass.TYPE_II else 2 * n - 1 for n in range(1, depth + 1)]


def stable_direction(E: PrecisionReal, coupling: PrecisionReal, type_tag: TypeTag, depth: int) -> DirectionPair:
    """
    Limit of the smallest-singular right vectors of the parity subsequence of A (s) and B (s_hat).

    The convergence is doubly exponential, so the last gap squared bounds the error once the
    gaps contract.
    """
    if depth < 2:
        raise ConfigError("direction depth must be at least 2")
    levels = direction_levels(type_tag, depth)
    pairs = exact_dyadic_pairs(E, coupling, levels[-1])
    ctx = mp_context(pairs[0].prec_bits)
    tol = float(section("asymptotics").get("resolve_tol", 1e-7))

    def converge(which: str) -> Tuple[Tuple[Any, Any], List[float], float]:
        dirs = [_min_direction(getattr(pairs[l], which), ctx) for l in levels]
        gaps = [_sin_between(dirs[i], dirs[i + 1]) for i in range(len(dirs) - 1)]
        resolution = gaps[-1]
        if len(gaps) >= 2 and gaps[-1] < gaps[-2]:
            resolution = min(gaps[-1], gaps[-1] ** 2)
        if resolution > tol:
            logger.warning(f"{which} direction gaps {gaps}")
            raise DirectionUnresolvedError()
        return dirs[-1], gaps, resolution

    s, gaps, res = converge("A")
    s_hat, gaps_hat, res_hat = converge("B")
    angle_s, angle_hat = line_angle(s, ctx), line_angle(s_hat, ctx)
    return DirectionPair(
        s=np.array([float(s[0]), float(s[1])]),
        s_hat=np.array([float(s_hat[0]), float(s_hat[1])]),
        angle_s=float(angle_s),
        angle_s_hat=float(angle_hat),
        s_exact=s,
        s_hat_exact=s_hat,
        gaps=tuple(gaps),
        resolution=max(res, res_hat),
    )


def expected_directions(E: PrecisionReal, coupling: PrecisionReal, type_tag: TypeTag, signs: SignBook) -> Tuple[float, float]:
    """Predicted angles of s and s_hat"""
    tag = _tag(type_tag)
    if tag is EnergyClass.TYPE_II:
        return -signs.eta * math.pi / 4, signs.eta * math.pi / 4
    theta = float(coupling_angle(E, coupling).theta)
    first, second = -theta / 2, (theta - math.pi) / 2
    return (first, second) if signs.eta_hat > 0 else (second, first)


def angle_distance(a: float, b: float) -> float:
    """Distance between two line directions (mod pi)"""
    d = (a - b) % math.pi
    return min(d, math.pi - d)


def direction_laws(
    E: PrecisionReal,
    coupling: PrecisionReal,
    type_tag: TypeTag,
    depth: int,
    directions: Optional[DirectionPair] = None,
) -> Dict[str, List[Tuple[int, float]]]:
    """
    TypeII: |A_2n s| -> 0, |A_(2n+1) s| -> |c_hat| with A_(2n+1) s parallel to s_hat.
    TypeIII: |A_2n s| -> sqrt(2)/2 with A_2n s parallel to s_hat.
    """
    tag = _tag(type_tag)
    directions = directions or stable_direction(E, coupling, tag, depth)
    pairs = exact_dyadic_pairs(E, coupling, 2 * depth + 1)
    ctx = mp_context(pairs[0].prec_bits)
    s = ctx.matrix([[directions.s_exact[0]], [directions.s_exact[1]]])
    s_hat = directions.s_hat_exact
    laws: Dict[str, List[Tuple[int, float]]] = {}

    def image(M):
        v = M * s
        norm = ctx.sqrt(v[0] ** 2 + v[1] ** 2)
        return norm, (v[0] / norm, v[1] / norm) if norm else (0, 0)

    for n in range(1, depth + 1):
        if tag is EnergyClass.TYPE_II:
            norm_even, _ = image(pairs[2 * n].A)
            norm_odd, unit = image(pairs[2 * n + 1].A)
            laws.setdefault("even_decay", []).append((n, float(norm_even)))
            laws.setdefault("const_limit", []).append((n, float(norm_odd)))
            laws.setdefault("const_parallel", []).append((n, _sin_between(unit, s_hat)))
        else:
            norm_even, unit = image(pairs[2 * n].A)
            laws.setdefault("addition", []).append((n, float(norm_even)))
            laws.setdefault("addition_parallel", []).append((n, _sin_between(unit, s_hat)))
    return laws


def _mp_initial(theta0: Union[float, PrecisionReal], ctx) -> Tuple[Any, Any, float]:
    theta = ctx.mpf(theta0.value if isinstance(theta0, PrecisionReal) else theta0)
    return ctx.cos(theta), -ctx.sin(theta), float(theta)


def solution_profile(
    E: PrecisionReal,
    coupling: PrecisionReal,
    theta0: Union[float, PrecisionReal],
    n_max: int,
    initial: Optional[Tuple[Any, Any]] = None,
) -> SolutionProfile:
    """
    psi_vec_n = (psi_(n+1), psi_n) = T_(0->n) v_theta0 for -n_max <= n <= n_max, run in E's precision.

    `initial` overrides v_theta0 with an exact vector, e.g. a stable direction.
    """
    if n_max < 1:
        raise ConfigError("n_max must be at least 1")
    bits = common_bits(E, coupling)
    ctx = mp_context(bits)
    e, lam = ctx.mpf(E.value), ctx.mpf(coupling.value)
    if initial is not None:
        psi1, psi0 = ctx.mpf(initial[0]), ctx.mpf(initial[1])
        angle = float(line_angle((psi1, psi0), ctx))
    else:
        psi1, psi0, angle = _mp_initial(theta0, ctx)

    psi = {0: psi0, 1: psi1}
    for n in range(1, n_max + 1):
        psi[n + 1] = (e - lam * tm_letter(n).weight) * psi[n] - psi[n - 1]
    for n in range(0, -n_max, -1):
        psi[n - 1] = (e - lam * tm_letter(n).weight) * psi[n] - psi[n + 1]

    vectors = {n: (psi[n + 1], psi[n]) for n in range(-n_max, n_max + 1)}
    samples = [(n, _vec_log_norm(*vectors[n])) for n in range(-n_max, n_max + 1)]
    positive = {n: v for n, v in samples if n >= 1}
    return SolutionProfile(
        E=E,
        coupling=coupling,
        initial_angle=angle,
        samples=samples,
        fitted_alpha=fit_alpha(positive),
        fitted_decay_rate=fit_decay_rate(positive),
        vectors=vectors,
    )


def fit_alpha(values: Dict[int, float]) -> float:
    """Slope of dyadic-block maxima of log|psi_n| against log n"""
    blocks: Dict[int, float] = {}
    for n, v in values.items():
        m = n.bit_length() - 1
        blocks[m] = max(blocks.get(m, -math.inf), v)
    ms = sorted(m for m in blocks if m >= 1)
    if len(ms) < 2:
        return 0.0
    slope, _ = np.polyfit([m * LN2 for m in ms], [blocks[m] for m in ms], 1)
    return float(slope)


def fit_decay_rate(values: Dict[int, float]) -> float:
    """
    Decay rate of the dipping dyadic subsequence: log|psi_(2^m)| against 2^floor(m/2)
    over the parity of m with the lower tail.
    """
    dyadic = {m: values[2 ** m] for m in range(2, 64) if 2 ** m in values}
    by_parity = {p: [m for m in sorted(dyadic) if m % 2 == p] for p in (0, 1)}
    if any(len(ms) < 2 for ms in by_parity.values()):
        return 0.0
    tail = {p: np.mean([dyadic[m] for m in ms[-2:]]) for p, ms in by_parity.items()}
    ms = by_parity[0] if tail[0] <= tail[1] else by_parity[1]
    slope, _ = np.polyfit([2 ** (m // 2) for m in ms], [dyadic[m] for m in ms], 1)
    return float(-slope)


def reflection_symmetry(profile: SolutionProfile, sign: int) -> float:
    """max_n |psi_vec_(-n) - sign U psi_vec_n| / |psi_vec_n|"""
    ctx = mp_context(profile.E.prec_bits)
    worst = ctx.mpf(0)
    n_max = max(n for n, _ in profile.samples)
    for n in range(1, n_max + 1):
        a, b = profile.vectors[n]
        c, d = profile.vectors[-n]
        scale = ctx.sqrt(a * a + b * b)
        worst = max(worst, ctx.sqrt((c - sign * b) ** 2 + (d - sign * a) ** 2) / scale)
    return float(worst)


def index_reflection_residual(
    E: PrecisionReal,
    coupling: PrecisionReal,
    initial: Tuple[Any, Any],
    n_max: int,
) -> float:
    """psi^l started from U psi^r_vec_0 satisfies psi^l_n = psi^r_(1-n)"""
    right = solution_profile(E, coupling, 0.0, n_max, initial=initial)
    left = solution_profile(E, coupling, 0.0, n_max, initial=(initial[1], initial[0]))
    ctx = mp_context(E.prec_bits)
    worst = ctx.mpf(0)
    for n in range(-n_max + 1, n_max + 1):
        lhs = left.vectors[n][1]
        rhs = right.vectors[1 - n][1]
        worst = max(worst, abs(lhs - rhs) / max(1, abs(rhs)))
    return float(worst)


def _block_index(k: int, tag: EnergyClass) -> int:
    """n with 2^(2n) <= k < 2^(2n+2) (TypeII) or 2^(2n-1) <= k < 2^(2n+1) (TypeIII)"""
    bits = k.bit_length() - 1
    return bits // 2 if tag is EnergyClass.TYPE_II else (bits + 1) // 2


def envelope_check(
    E: PrecisionReal,
    coupling: PrecisionReal,
    profile: Sequence[Tuple[int, float]],
    gamma: Optional[Union[GammaEstimate, float]] = None,
    type_tag: TypeTag = EnergyClass.TYPE_II,
) -> EnvelopeReport:
    """
    Smallest C >= 1 satisfying the dyadic-block bounds on log|T_k|, the resulting sqrt(k)
    envelope, fitted c1/c2 and the parity split of log|T_(2^m)| / 2^(m/2).
    """
    tag = EnergyClass(type_tag)
    values = dict(profile)
    if tag is EnergyClass.TYPE_I:
        top = max(values.values())
        lows = [k for k, v in values.items() if v < -1e-9]
        return EnvelopeReport(tag.value, math.exp(top), 0.0, lows, [], 0.0, 0.0)

    g = gamma.value if isinstance(gamma, GammaEstimate) else float(gamma)
    log_c = 0.0
    for k, L in values.items():
        n = _block_index(k, tag)
        if tag is EnergyClass.TYPE_II:
            need = max((2 ** n * g - L) / (n + 1), (L - 2 ** (n + 1) * g) / (n + 1))
        else:
            need = max((2 ** (n - 1) * g - L) / (n + 2), (L - 2 ** n * g) / (n + 2))
        log_c = max(log_c, need)
    slack = 1e-9
    block_violations = []
    for k, L in values.items():
        n = _block_index(k, tag)
        if tag is EnergyClass.TYPE_II:
            lo, hi = 2 ** n * g - (n + 1) * log_c, 2 ** (n + 1) * g + (n + 1) * log_c
        else:
            lo, hi = 2 ** (n - 1) * g - (n + 2) * log_c, 2 ** n * g + (n + 2) * log_c
        if not lo - slack <= L <= hi + slack:
            block_violations.append(k)

    if tag is EnergyClass.TYPE_II:
        alpha, low_coef, high_coef, start = log_c / LN2, g / 2, 2 * g, 4
    else:
        alpha, low_coef, high_coef, start = 3 * log_c / LN2, g / (2 * SQRT2), SQRT2 * g, 2
    envelope_violations = [
        k for k, L in values.items() if k >= start and not (
            -alpha * math.log(k) + low_coef * math.sqrt(k) - slack <= L
            <= alpha * math.log(k) + high_coef * math.sqrt(k) + slack)
    ]

    tail = [(k, L / (g * math.sqrt(k))) for k, L in values.items() if k >= 16]
    c1 = min(r for _, r in tail) if tail else 0.0
    c2 = max(r for _, r in tail) if tail else 0.0
    return EnvelopeReport(tag.value, math.exp(log_c), alpha, block_violations, envelope_violations,
                          c1, c2, oscillation(values, g, tag))


def oscillation(values: Dict[int, float], gamma: float, type_tag: TypeTag) -> Dict[str, Any]:
    """log|T_(2^m)| / 2^(m/2) split by the parity of m"""
    tag = _tag(type_tag)
    ratios = {m: values[2 ** m] / 2 ** (m / 2) for m in range(1, 64) if 2 ** m in values}
    even = [r for m, r in sorted(ratios.items()) if m % 2 == 0]
    odd = [r for m, r in sorted(ratios.items()) if m % 2 == 1]
    expected_odd = SQRT2 * gamma if tag is EnergyClass.TYPE_II else gamma / SQRT2
    return {
        "even": even,
        "odd": odd,
        "expected_even": gamma,
        "expected_odd": expected_odd,
    }


def fingerprint(seq: TraceSequence, profile: SolutionProfile, type_tag: TypeTag) -> Dict[str, Any]:
    """
    Small traces shrinking together with dyadic-block energies of the subordinate profile that
    do not die out (polynomially bounded, not square-summable).
    """
    tag = _tag(type_tag)
    levels = asymptotic_levels(seq, tag)
    small_idx = (lambda n: 2 * n) if tag is EnergyClass.TYPE_II else (lambda n: 2 * n + 1)
    small = [float(abs(seq.trace(small_idx(n)))) for n in levels if small_idx(n) <= seq.N]
    ctx = mp_context(profile.E.prec_bits)
    blocks: Dict[int, Any] = {}
    for n, (a, b) in profile.vectors.items():
        if n >= 1:
            m = n.bit_length() - 1
            blocks[m] = blocks.get(m, ctx.mpf(0)) + b * b
    energies = [float(blocks[m]) for m in sorted(blocks)]
    return {
        "small_traces": small,
        "small_traces_decreasing": all(x > y for x, y in zip(small, small[1:])),
        "fitted_alpha": profile.fitted_alpha,
        "block_energies": energies,
        "not_square_summable": bool(energies) and min(energies[-3:]) > 1e-6 * max(energies),
    }

"""
Thue-Morse Lab CLI
Command-line front end: every pipeline is a subcommand writing JSON or CSV reports.

Exit codes: 0 ok, 1 configuration, 2 band isolation, 3 hunt, 4 flagged result, 5 precision,
6 failed self-test.
"""

import sys
import math
import logging
import argparse
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .asymptotics import (
    direction_laws,
    envelope_check,
    estimate_gamma,
    fingerprint,
    solution_profile,
    stable_direction,
    structure_limits,
)
from .dynamics import EnergyClass, classify_energy, hunt_energy, hunt_gamma
from .errors import ConfigError, ThueMorseError
from .metrics import StageTimer
from .numerics import PrecisionReal, as_precision
from .settings import get_config, section, setup_logging, use_config
from .spectrum import bands_payload, floquet_eigenvalues, sigma_bands, spectrum_approx, type1_energies
from .subordinacy import local_dim_indicator
from .tracemap import invariant_residuals, trace_seq
from .transfer import (
    dyadic_identity_residuals,
    exact_dyadic_pairs,
    norm_profile,
    periodicity_check,
    reflection_check,
    transfer_product_exact,
)
from .utils import ReportWriter

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FLAGGED = 4
EXIT_SELFTEST_FAILED = 6


def parse_real(text: str, bits: int) -> PrecisionReal:
    """Decimal string with an optional precision tag: `1.57161398565@1024`"""
    if "@" in text:
        text, tag = text.rsplit("@", 1)
        try:
            bits = int(tag)
        except ValueError as e:
            raise ConfigError(f"bad precision tag {tag!r}") from e
    digits = sum(c.isdigit() for c in text)
    bits = max(bits, int(digits * 3.33) + 32)
    return PrecisionReal.parse(text, bits)


def parse_window(text: str) -> Tuple[str, str]:
    if ":" not in text:
        raise ConfigError(f"window must read lo:hi, got {text!r}")
    lo, hi = text.split(":", 1)
    return lo, hi


def parse_itinerary(text: str) -> List[int]:
    if text and set(text) - {"0", "1"}:
        raise ConfigError(f"itinerary must be a 0/1 string, got {text!r}")
    return [int(c) for c in text]


def banner(title: str):
    print(f"\n{'=' * 70}")
    print(title)
    print(f"{'=' * 70}")


class Command:
    """Shared state for one CLI invocation"""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        config = get_config()
        self.bits = int(args.precision or config.get("precision_bits", 256))
        self.output_format = args.format or config.get("output_format", "json")
        self.writer = ReportWriter(args.output_dir or config.get("output_dir", "results"))

    def real(self, text: str) -> PrecisionReal:
        return parse_real(text, self.bits)

    @property
    def coupling(self) -> PrecisionReal:
        return self.real(self.args.coupling)

    def emit(self, kind: str, payload: Dict[str, Any], rows: List[Dict[str, Any]]) -> str:
        payload = {"prec_bits": self.bits, **payload}
        path = self.writer.write(kind, payload, rows, self.output_format)
        print(f"Report: {path}")
        return path

    def energy_class(self, E: PrecisionReal, coupling: PrecisionReal, depth: int) -> EnergyClass:
        if getattr(self.args, "type", None):
            return EnergyClass(self.args.type)
        verdict = classify_energy(E, coupling, depth)
        print(f"Classified as {verdict.energy_class.value} (k={verdict.witness_k})")
        return verdict.energy_class


def cmd_bands(cmd: Command) -> int:
    coupling = cmd.coupling
    bands = sigma_bands(coupling, cmd.args.level)
    banner(f"sigma_{cmd.args.level} at lambda = {cmd.args.coupling}")
    print(f"{'band':>6} {'lo':>24} {'hi':>24} {'traces':>8}")
    for i, band in enumerate(bands):
        print(f"{i:>6} {float(band.lo):>24.15f} {float(band.hi):>24.15f} {band.trace_lo:>+3d}/{band.trace_hi:+d}")
    measure = sum(b.width for b in bands)
    print(f"\nLevel {cmd.args.level}: {len(bands)} bands, total measure {measure:.12f}")
    rows = [{"index": i, **b.to_dict()} for i, b in enumerate(bands)]
    cmd.emit("bands", bands_payload(cmd.args.level, bands), rows)
    return EXIT_OK


def cmd_approx(cmd: Command) -> int:
    approx = spectrum_approx(cmd.coupling, cmd.args.level)
    banner(f"sigma_{approx.level} U sigma_{approx.level + 1}")
    print(f"Bands: {len(approx.bands)}  Components: {len(approx.components)}")
    print(f"Measure: {approx.measure:.12f}  Nested: {approx.nested}")
    rows = [{"lo": c.lo.to_decimal(), "hi": c.hi.to_decimal(), "members": c.members} for c in approx.components]
    payload = {"level": approx.level, "measure": approx.measure, "nested": approx.nested, "components": rows}
    cmd.emit("approx", payload, rows)
    return EXIT_OK if approx.nested else EXIT_FLAGGED


def cmd_type1(cmd: Command) -> int:
    energies = type1_energies(cmd.coupling, cmd.args.k)
    banner(f"Roots of t_{cmd.args.k}")
    for E in energies:
        print(f"  {float(E):.15f}")
    rows = [{"index": i, "E": E.to_decimal()} for i, E in enumerate(energies)]
    cmd.emit("type1", {"k": cmd.args.k, "energies": [E.to_decimal() for E in energies]}, rows)
    return EXIT_OK


def cmd_hunt(cmd: Command) -> int:
    args = cmd.args
    itinerary = parse_itinerary(args.itinerary)
    if args.type == "gamma-coupling":
        result = hunt_gamma(itinerary, args.depth)
    else:
        lo, hi = parse_window(args.window)
        result = hunt_energy(cmd.coupling, (cmd.real(lo), cmd.real(hi)), args.type, itinerary, args.depth)

    banner(f"{result.target} {result.kind} hunt")
    print(f"lambda = {result.coupling.ctx.nstr(result.coupling.value, 20)}")
    print(f"E      = {result.energy.ctx.nstr(result.energy.value, 20)}")
    print(f"Witness k = {result.witness_k}, depth {result.depth_verified}, {result.prec_bits} bits, "
          f"reverified: {result.reverified}")
    payload = result.to_dict()
    rows = [{"depth": j, "lo": lo, "hi": hi} for j, (lo, hi) in enumerate(payload["intervals"])]
    cmd.emit("hunt", payload, rows)
    return EXIT_OK


def cmd_classify(cmd: Command) -> int:
    E = cmd.real(cmd.args.energy)
    verdict = classify_energy(E, cmd.coupling, cmd.args.depth)
    banner("Energy classification")
    print(f"Class: {verdict.energy_class.value}  witness k = {verdict.witness_k}  depth {verdict.depth_verified}")
    for note in verdict.diagnostics:
        print(f"  - {note}")
    payload = {"E": E.to_decimal(), **verdict.to_dict()}
    cmd.emit("classify", payload, [{k: v for k, v in payload.items() if k != "diagnostics"}])
    return EXIT_FLAGGED if verdict.energy_class is EnergyClass.UNDETERMINED else EXIT_OK


def cmd_profile(cmd: Command) -> int:
    args = cmd.args
    E, coupling = cmd.real(args.energy), cmd.coupling
    if args.n is None:
        args.n = int(section("asymptotics").get("profile_length", 4096))
    if args.solution:
        angle = cmd.real(args.angle)
        profile = solution_profile(E, coupling, angle, args.n)
        rows = [{"n": n, "log_psi_norm": v} for n, v in profile.samples]
        payload = {
            "E": E.to_decimal(),
            "initial_angle": profile.initial_angle,
            "fitted_alpha": profile.fitted_alpha,
            "fitted_decay_rate": profile.fitted_decay_rate,
            "samples": [[n, v] for n, v in profile.samples],
        }
        if args.type in (EnergyClass.TYPE_II.value, EnergyClass.TYPE_III.value):
            seq = trace_seq(E, coupling, 2 * args.depth + 2, on_exhaustion="truncate")
            payload["fingerprint"] = fingerprint(seq, profile, args.type)
        banner("Solution profile")
        print(f"alpha ~ {profile.fitted_alpha:.4f}, dip decay rate ~ {profile.fitted_decay_rate:.4f}")
        cmd.emit("solution_profile", payload, rows)
        return EXIT_OK

    samples = norm_profile(E, coupling, args.n)
    rows = [{"n": n, "log_norm": v} for n, v in samples]
    banner("Transfer-matrix norm profile")
    print(f"max log||T_n|| = {max(v for _, v in samples):.6f} over n <= {args.n}")
    payload: Dict[str, Any] = {"E": E.to_decimal(), "samples": [[n, v] for n, v in samples]}
    if args.type:
        tag = EnergyClass(args.type)
        if tag is EnergyClass.TYPE_I:
            report = envelope_check(E, coupling, samples, type_tag=tag)
        else:
            seq = trace_seq(E, coupling, 2 * args.depth + 2, on_exhaustion="truncate")
            gamma = estimate_gamma(seq, tag)
            report = envelope_check(E, coupling, samples, gamma, tag)
            payload["gamma"] = gamma.to_dict()
        payload["envelope"] = report.to_dict()
        print(f"Envelope C = {report.C:.4f}, alpha = {report.alpha:.4f}, "
              f"violations: {len(report.envelope_violations)}")
        cmd.writer.write_json("profile_envelope", {"E": E.to_decimal(), **report.to_dict()})
    cmd.emit("profile", payload, rows)
    return EXIT_OK


def cmd_gamma(cmd: Command) -> int:
    E, coupling = cmd.real(cmd.args.energy), cmd.coupling
    tag = cmd.energy_class(E, coupling, cmd.args.depth)
    if tag not in (EnergyClass.TYPE_II, EnergyClass.TYPE_III):
        print(f"No growth rate for {tag.value}")
        return EXIT_FLAGGED
    seq = trace_seq(E, coupling, 2 * cmd.args.depth + 2, on_exhaustion="truncate")
    estimate = estimate_gamma(seq, tag)
    banner(f"gamma(E) for {tag.value}")
    print(f"gamma = {estimate.gamma.ctx.nstr(estimate.gamma.value, 15)}")
    print(f"{'n':>4} {'gamma_n':>20} {'gap':>14}")
    gaps = dict(estimate.gaps)
    for n, g in estimate.residuals:
        gap = f"{gaps[n]:.10f}" if n in gaps else ""
        print(f"{n:>4} {g:>20.12f} {gap:>14}")
    rows = [{"n": n, "gamma_n": g, "gap": gaps.get(n, "")} for n, g in estimate.residuals]
    cmd.emit("gamma", {"E": E.to_decimal(), **estimate.to_dict()}, rows)
    return EXIT_OK


def cmd_structure(cmd: Command) -> int:
    E, coupling = cmd.real(cmd.args.energy), cmd.coupling
    tag = cmd.energy_class(E, coupling, cmd.args.depth + 2)
    if tag not in (EnergyClass.TYPE_II, EnergyClass.TYPE_III):
        print(f"No structure laws for {tag.value}")
        return EXIT_FLAGGED
    report = structure_limits(E, coupling, tag, cmd.args.depth)
    directions = stable_direction(E, coupling, tag, cmd.args.direction_depth or cmd.args.depth)
    laws = direction_laws(E, coupling, tag, cmd.args.depth, directions)

    banner(f"Structure laws ({tag.value}), gamma = {report.gamma:.10f}")
    for name, values in sorted(report.residuals.items()):
        print(f"  {name:<12} " + "  ".join(f"{r:.2e}" for _, r in values))
    print(f"  stable angle {directions.angle_s:.12f}, unstable angle {directions.angle_s_hat:.12f}")
    rows = [{"law": name, "n": n, "residual": r}
            for name, values in sorted(report.residuals.items()) for n, r in values]
    payload = {
        "E": E.to_decimal(),
        **report.to_dict(),
        "directions": directions.to_dict(),
        "direction_laws": {k: [[n, v] for n, v in rows_] for k, rows_ in sorted(laws.items())},
    }
    cmd.emit("structure", payload, rows)
    return EXIT_OK


def cmd_locdim(cmd: Command) -> int:
    args = cmd.args
    E, coupling = cmd.real(args.energy), cmd.coupling
    beta = cmd.real(args.beta) if args.beta else None
    tag = None if beta is not None else cmd.energy_class(E, coupling, args.depth)
    if tag is EnergyClass.UNDETERMINED:
        print("No boundary angle for an undetermined energy")
        return EXIT_FLAGGED
    report = local_dim_indicator(E, coupling, args.eta, beta=beta, energy_class=tag)
    banner(f"Local-dimension indicator, eta = {args.eta}")
    print(f"beta = {report.beta:.12f}  slope = {report.slope:.4f}  trend: {report.trend}")
    if report.dropped:
        print(f"{len(report.dropped)} epsilons beyond the solution range")
    cmd.emit("locdim", {"E": E.to_decimal(), **report.to_dict()}, report.rows)
    return EXIT_OK


def _selftest_checks(rng: np.random.Generator) -> List[Tuple[str, Callable[[], bool]]]:
    bits = 256
    threshold = 2.0 ** -100
    samples = [(PrecisionReal.from_float(float(rng.uniform(-3, 3)), bits),
                PrecisionReal.from_float(float(rng.choice([0.5, 1.0, 2.0])), bits)) for _ in range(10)]
    one = as_precision("1", bits)

    def identities() -> bool:
        for E, lam in samples:
            seq = trace_seq(E, lam, 12, on_exhaustion="truncate")
            if any(r.value >= threshold for r in invariant_residuals(seq)):
                return False
            pairs = exact_dyadic_pairs(E, lam, min(10, seq.N))
            if any(v >= threshold for v in dyadic_identity_residuals(pairs, seq).values()):
                return False
        return True

    def oracle() -> bool:
        for E, lam in samples[:4]:
            pairs = exact_dyadic_pairs(E, lam, 8)
            for n in range(1, 9):
                direct = transfer_product_exact(E, lam, 0, 2 ** n)
                diff = pairs[n].A - direct
                scale = max(abs(direct[i, j]) for i in range(2) for j in range(2))
                if max(abs(diff[i, j]) for i in range(2) for j in range(2)) > 1e-9 * scale:
                    return False
        return True

    def reflection() -> bool:
        return all(reflection_check(E, lam, 64) < 1e-9 for E, lam in samples[:4])

    def bands() -> bool:
        edges = [float(x) for b in sigma_bands(one, 1) for x in (b.lo, b.hi)]
        expected = [-math.sqrt(5), -1.0, 1.0, math.sqrt(5)]
        counts = all(len(sigma_bands(one, n)) == 2 ** n for n in range(1, 7))
        return counts and all(abs(a - b) < 1e-10 for a, b in zip(edges, expected))

    def floquet() -> bool:
        plus = sorted(float(e) for b in sigma_bands(one, 4)
                      for e, t in ((b.lo, b.trace_lo), (b.hi, b.trace_hi)) if t == 2)
        return bool(np.allclose(plus, floquet_eigenvalues(1.0, 4, 0.0), atol=1e-9))

    def type_one() -> bool:
        root3 = PrecisionReal.parse("sqrt3", bits)
        return periodicity_check(root3, one, 1) < 1e-9

    def classification() -> bool:
        zero = classify_energy(as_precision("0", bits), one, 4)
        root3 = classify_energy(PrecisionReal.parse("sqrt3", bits), one, 4)
        return (zero.energy_class is EnergyClass.UNDETERMINED
                and "outside spectrum approximation" in zero.diagnostics
                and root3.energy_class is EnergyClass.TYPE_I)

    return [
        ("trace and dyadic identities", identities),
        ("dyadic vs word products", oracle),
        ("reflection T_-n = U T_n U", reflection),
        ("sigma_n edges and counts", bands),
        ("sigma_n edges vs Floquet", floquet),
        ("type-I periodicity", type_one),
        ("energy classification", classification),
    ]


def cmd_selftest(cmd: Command) -> int:
    timer = StageTimer()
    rng = np.random.default_rng(cmd.args.seed)
    results = []
    for name, check in _selftest_checks(rng):
        try:
            with timer.time(name):
                ok = check()
        except ThueMorseError as e:
            logger.error(f"{name}: {e}")
            ok = False
        results.append({"check": name, "passed": ok})

    banner("Self-test")
    for row in results:
        stats = timer.get_statistics(row["check"])
        status = "PASS" if row["passed"] else "FAIL"
        print(f"  {row['check']:<32} {status:<6} {stats['mean']:>10.1f} ms")
    print(f"\nTotal: {timer.total_ms():.0f} ms")
    cmd.emit("selftest", {"checks": results}, results)
    return EXIT_OK if all(r["passed"] for r in results) else EXIT_SELFTEST_FAILED


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="Alternative YAML configuration")
    common.add_argument("--workers", type=int, default=None, help="Worker threads")
    common.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")
    common.add_argument("--log-file", default=None, help="Also log to this file")
    common.add_argument("--format", choices=["json", "csv"], default=None, help="Output format")
    common.add_argument("--output-dir", default=None, help="Directory for reports")
    common.add_argument("--precision", type=int, default=None, help="Working precision in bits")
    common.add_argument("--seed", type=int, default=0, help="Seed for sampled checks")

    parser = argparse.ArgumentParser(prog="thuemorse-lab", description="Thue-Morse Hamiltonian numerics")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, func, help_text: str, coupling: bool = True) -> argparse.ArgumentParser:
        p = sub.add_parser(name, parents=[common], help=help_text)
        if coupling:
            p.add_argument("--lambda", dest="coupling", default="1", help="Coupling (decimal string)")
        p.set_defaults(func=func)
        return p

    p = add("bands", cmd_bands, "Bands of sigma_n")
    p.add_argument("--level", type=int, required=True)

    p = add("approx", cmd_approx, "Spectrum approximation sigma_n U sigma_(n+1)")
    p.add_argument("--level", type=int, required=True)

    p = add("type1", cmd_type1, "Type-I energies (roots of t_k)")
    p.add_argument("--k", type=int, required=True)

    p = add("hunt", cmd_hunt, "Hunt a type-II/III energy or a Gamma coupling")
    p.add_argument("--window", default="1.55:1.60")
    p.add_argument("--type", choices=["TypeII", "TypeIII", "gamma-coupling"], default="TypeIII")
    p.add_argument("--itinerary", default="")
    p.add_argument("--depth", type=int, default=4)

    p = add("classify", cmd_classify, "Classify an energy")
    p.add_argument("--energy", required=True)
    p.add_argument("--depth", type=int, default=4)

    p = add("profile", cmd_profile, "Norm or solution profile")
    p.add_argument("--energy", required=True)
    p.add_argument("--n", type=int, default=None, help="Profile length (default: profile_length)")
    p.add_argument("--solution", action="store_true", help="Profile the solution with boundary angle --angle")
    p.add_argument("--angle", default="0")
    p.add_argument("--type", choices=[c.value for c in EnergyClass if c is not EnergyClass.UNDETERMINED],
                   default=None, help="Add the envelope sidecar for this class")
    p.add_argument("--depth", type=int, default=4)

    p = add("gamma", cmd_gamma, "Growth rate gamma(E)")
    p.add_argument("--energy", required=True)
    p.add_argument("--type", choices=["TypeII", "TypeIII"], default=None)
    p.add_argument("--depth", type=int, default=6)

    p = add("structure", cmd_structure, "Matrix limit laws and stable directions")
    p.add_argument("--energy", required=True)
    p.add_argument("--type", choices=["TypeII", "TypeIII"], default=None)
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--direction-depth", type=int, default=None,
                   help="Levels for the stable directions (default: --depth)")

    p = add("locdim", cmd_locdim, "Local-dimension trend indicator")
    p.add_argument("--energy", required=True)
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--beta", default=None, help="Boundary angle; defaults to the class angle")
    p.add_argument("--type", choices=[c.value for c in EnergyClass if c is not EnergyClass.UNDETERMINED],
                   default=None)
    p.add_argument("--depth", type=int, default=4)

    add("selftest", cmd_selftest, "Run the invariant checks", coupling=False)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point"""
    try:
        parser = build_parser()
        try:
            args = parser.parse_args(argv)
        except SystemExit as e:
            return 1 if e.code else 0
        use_config(args.config, workers=args.workers)
        setup_logging(args.log_level, args.log_file)
        return args.func(Command(args))
    except ThueMorseError as e:
        print(f"Error: {e}", file=sys.stderr)
        return e.exit_code
    except KeyboardInterrupt:
        print("\nInterrupted", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

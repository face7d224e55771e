"""
Errors
Exception hierarchy; each class carries the CLI exit code it maps to
"""


class ThueMorseError(Exception):
    """Base class for all library errors"""

    exit_code = 1


class ConfigError(ThueMorseError, ValueError):
    """Invalid configuration or command-line input"""

    exit_code = 1


class ZeroCouplingError(ConfigError):
    def __init__(self):
        super().__init__("zero coupling excluded")


class PrecisionExhaustedError(ThueMorseError, ArithmeticError):
    """All significant bits lost; `index` is the first unreliable position"""

    exit_code = 5

    def __init__(self, index: int, detail: str = ""):
        self.index = index
        message = f"precision exhausted at index {index}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)


class BandIsolationError(ThueMorseError):
    exit_code = 2

    def __init__(self, detail: str = ""):
        message = "band isolation failed"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)


class WindowMissError(ThueMorseError):
    exit_code = 3

    def __init__(self):
        super().__init__("window misses spectrum")


class ItineraryInfeasibleError(ThueMorseError):
    exit_code = 3

    def __init__(self, depth: int):
        self.depth = depth
        super().__init__(f"itinerary infeasible at depth {depth}")


class OutsideBranchDomainError(ThueMorseError, ValueError):
    def __init__(self):
        super().__init__("outside branch domain")


class ZeroEnergyError(ThueMorseError, ValueError):
    def __init__(self):
        super().__init__("zero energy not in spectrum")


class NotCandidateError(ThueMorseError, ValueError):
    def __init__(self):
        super().__init__("not a type-II/III candidate")


class NotAsymptoticError(ThueMorseError):
    def __init__(self, detail: str = ""):
        message = "not asymptotic regime"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)


class StructureLawError(ThueMorseError):
    def __init__(self, detail: str = ""):
        message = "structure law violated"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)


class DirectionUnresolvedError(ThueMorseError):
    def __init__(self):
        super().__init__("stable direction not resolved")


class RangeExceededError(ThueMorseError, ValueError):
    def __init__(self, message: str = "L beyond computed range"):
        super().__init__(message)

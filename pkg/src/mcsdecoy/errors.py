"""Exception hierarchy shared by every module of the package."""


class McsDecoyError(Exception):
    """Base class for domain errors (CLI exit code 1)."""


class DegenerateSourceError(McsDecoyError, ValueError):
    pass


class TruncationError(McsDecoyError):
    pass


class NoBracketError(McsDecoyError):
    pass


class DimensionTooSmallError(McsDecoyError):
    pass


class ZeroGainError(McsDecoyError):
    pass


class NoMultiphotonError(McsDecoyError):
    pass


class InvalidOrderingError(McsDecoyError):
    """Decoy/signal pair gives a non-positive bound denominator."""


class PremiseViolationError(McsDecoyError):
    """Ratio-monotonicity premise of the decoy bound fails."""


class SignViolationError(McsDecoyError):
    """Vacuum coefficient is positive, so an upper bound on S0 cannot be substituted."""


class UndefinedBoundError(McsDecoyError):
    pass


class VacuumFreeSourceError(McsDecoyError):
    pass


class NeverSecureError(McsDecoyError):
    pass


class EmptyFeasibleSetError(McsDecoyError):
    pass

"""Exception hierarchy. Every error raised on purpose by lobefit derives from
:class:`LobefitError`, which is itself a :class:`ValueError`."""


class LobefitError(ValueError):
    pass


class TieSpecError(LobefitError):
    pass


class UnitError(LobefitError):
    pass


class DegenerateEngagementError(LobefitError):
    """Both characteristic-equation coefficients vanish (no cutting engagement)."""


class BranchRejected(LobefitError):
    """Eigenvalue with zero real part: no finite limiting depth."""


class EmptyCurveError(LobefitError):
    pass


class SpeedRangeError(LobefitError):
    def __init__(self, speeds):
        self.speeds = list(speeds)
        shown = ", ".join(f"{s:g}" for s in self.speeds[:10])
        more = "" if len(self.speeds) <= 10 else f" (+{len(self.speeds) - 10} more)"
        super().__init__(f"speeds outside the curve range or uncovered: {shown}{more}")


class ResolutionError(LobefitError):
    pass


class BracketError(LobefitError):
    pass


class UnfittableError(LobefitError):
    pass


class NumericalError(LobefitError):
    pass


class RecordsError(LobefitError):
    pass


class ConfigError(LobefitError):
    pass

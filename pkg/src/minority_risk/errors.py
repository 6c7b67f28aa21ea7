"""Exception types raised by the library."""


class MinorityRiskError(Exception):
    """Base class for all library errors."""


class NonFiniteIntegrand(MinorityRiskError, ValueError):
    pass


class DegenerateActivation(MinorityRiskError, ValueError):
    """The activation has (numerically) no nonlinear component."""


class NearInterpolationThreshold(MinorityRiskError, ValueError):
    """A ridgeless formula was evaluated too close to gamma = 1 where it diverges."""


# linear-model name for the same condition
AtInterpolationThreshold = NearInterpolationThreshold


class NoConvergence(MinorityRiskError, RuntimeError):
    pass


class SingularSystem(MinorityRiskError, ValueError):
    pass


class EmptyMinority(MinorityRiskError, ValueError):
    pass


class DegenerateSubsample(MinorityRiskError, ValueError):
    pass


class NotSeparable(MinorityRiskError, RuntimeError):
    pass


class ConfigParseError(MinorityRiskError, ValueError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class ConfigValidationError(MinorityRiskError, ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid config:\n  " + "\n  ".join(self.violations))

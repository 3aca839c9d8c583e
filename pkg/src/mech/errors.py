"""Exception hierarchy.

Three families map onto CLI exit codes: malformed input (1), violated
preconditions (2) and numeric failures (3).
"""


class MechError(Exception):
    exit_code = 2


class ParseError(MechError):
    exit_code = 1


class PreconditionError(MechError):
    exit_code = 2


class NumericFailure(MechError):
    exit_code = 3


# symcore
class EvalError(NumericFailure):
    pass


class UnboundSymbol(EvalError):
    def __init__(self, name):
        super().__init__(f"unbound symbol {name!r}")
        self.name = name


class DomainError(EvalError):
    pass


class NonAffineEquation(PreconditionError):
    pass


class PivotUndecidable(NumericFailure):
    pass


# geometry / tangentgeo
class ChartMismatch(PreconditionError):
    pass


class DegreeError(PreconditionError):
    pass


class NotOnIdentity(PreconditionError):
    pass


class NotABundleChart(PreconditionError):
    pass


class NotASODE(PreconditionError):
    pass


# lagrangian / noether
class SingularLagrangian(PreconditionError):
    pass


class NotPointTransformation(PreconditionError):
    pass


class NotAConstant(PreconditionError):
    pass


class CannotIntegrate(PreconditionError):
    pass


class VerificationFailure(NumericFailure):
    """A consequence that the theory guarantees did not hold numerically."""


# constraints
class RankNotConstant(PreconditionError):
    pass


class ReductionFailure(PreconditionError):
    pass


class NotClosed(PreconditionError):
    pass


# dynamics / control
class IntegrationBlowup(NumericFailure):
    pass


class ChartSingularity(NumericFailure):
    pass


class NotAProjectionSplit(PreconditionError):
    pass


class DependentGenerators(PreconditionError):
    pass

"""Exception types raised across the package.

Each class carries a short ``code`` used by the command-line front end as a
machine-parsable reason on error exits.
"""


class SncilwError(Exception):
    code = "Error"


class PoleProximity(SncilwError, ValueError):
    code = "PoleProximity"


class CollisionError(SncilwError):
    code = "Collision"


class StripExit(SncilwError):
    code = "StripExit"


class StepSizeUnderflow(SncilwError):
    code = "StepSizeUnderflow"


class InconsistentConstraints(SncilwError):
    code = "InconsistentConstraints"


class NotAnEigenpair(SncilwError, ValueError):
    code = "NotAnEigenpair"


class NotHermitian(SncilwError, ValueError):
    code = "NotHermitian"


class UnbalancedState(SncilwError):
    code = "UnbalancedState"


class GridTooCoarse(SncilwError):
    code = "GridTooCoarse"


class MissingTimeDerivative(SncilwError):
    code = "MissingTimeDerivative"


class ScenarioError(SncilwError, ValueError):
    code = "ScenarioError"

"""
Exceptions raised by xgfem. Every one of them is logged through ``xg_debug.logger`` before it is raised.
"""


class XgError(Exception):
    """Base class of all xgfem errors."""


class MeshError(XgError):
    """Invalid mesh topology, geometry or boundary tagging."""


class QuadratureError(XgError, ValueError):
    """Requested exactness degree is not supported."""


class AssemblyError(XgError):
    """Forms cannot be assembled with the given data or penalties."""


class ConditionViolation(XgError):
    """A theorem or elimination inclusion condition does not hold."""

    def __init__(self, condition: str, residual: float | None = None):
        self.condition = condition
        self.residual = residual
        message = 'Condition violated: ' + condition
        if residual is not None:
            message += ' (residual ' + format(residual, '.3e') + ')'
        super().__init__(message)


class EliminationError(XgError):
    """Static elimination is undefined or not equivalent for this configuration."""


class SolverError(XgError):
    """Factorization failed or the residual is above tolerance."""


class ConfigError(XgError):
    """Experiment configuration is malformed or inconsistent."""

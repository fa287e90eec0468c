"""Exception hierarchy shared by every module."""


class GroupShapleyError(Exception):
    """Base class for library errors."""


class CapacityError(GroupShapleyError):
    """The requested partition is too large for the chosen method."""


class DomainError(GroupShapleyError, ValueError):
    """An argument lies outside the domain of an operation."""


class IncompleteTableError(GroupShapleyError):
    """A completeness-requiring operation received a table with missing entries."""

    def __init__(self, missing, message=None):
        self.missing = tuple(missing)
        if message is None:
            keys = ", ".join("{" + ",".join(map(str, _bits(m))) + "}" for m in self.missing)
            message = f"utility table is missing {len(self.missing)} coalition(s): {keys}"
        super().__init__(message)


class SingularMatrixError(GroupShapleyError, ArithmeticError):
    """Pivot fell below the singularity threshold."""


class ContractViolation(GroupShapleyError):
    """A value function broke its contract (e.g. g(empty) != 0)."""


class UnsupportedPatternError(GroupShapleyError):
    """A constraint builder was given a missing-entry pattern it does not handle."""


class ConfigError(GroupShapleyError, ValueError):
    """Invalid scenario, partition or simulation configuration."""


def _bits(mask):
    out, i = [], 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out

"""Exception hierarchy shared by every tendonkit module.

Each class carries a short machine-readable ``code`` and the CLI exit status
it maps to, so the command line can report ``ERROR <code>: <message>``
without a lookup table.
"""


class TendonkitError(Exception):
    code = "error"
    exit_code = 2


class ParseError(TendonkitError):
    code = "parse"
    exit_code = 1

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" (line {line}, column {column})"
        super().__init__(f"{message}{where}")


class ValidationError(TendonkitError):
    """An invariant of a model, route, scenario or problem does not hold."""

    code = "validation"
    exit_code = 1

    def __init__(self, field, invariant, detail=""):
        self.field = field
        self.invariant = invariant
        msg = f"{field}: violates '{invariant}'"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class SchemaError(TendonkitError):
    code = "schema"
    exit_code = 1


class DimensionMismatch(TendonkitError, ValueError):
    code = "dimension"


class JointLimitViolation(TendonkitError):
    code = "joint_limit"


class UnknownLink(TendonkitError, KeyError):
    code = "unknown_link"

    def __str__(self):
        return Exception.__str__(self)


class DegenerateSpan(TendonkitError):
    code = "degenerate_span"


class SingularInertia(TendonkitError):
    code = "singular_inertia"


class SingularConfiguration(TendonkitError):
    code = "singular_configuration"


class NumericalBlowup(TendonkitError):
    code = "blowup"

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace

"""Exception hierarchy.

The CLI maps these onto exit codes: ConfigError -> 2, NumericsError -> 3,
OSError -> 4.
"""


class GPWideError(Exception):
    pass


class ConfigError(GPWideError):
    pass


class NumericsError(GPWideError):
    def __init__(self, message, iterate=None):
        super().__init__(message)
        self.iterate = iterate


class ExprError(ConfigError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message, position):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class UndeclaredVariableError(ExprError):
    def __init__(self, name, allowed):
        allowed_txt = ", ".join(sorted(allowed)) or "none"
        super().__init__(f"variable {name!r} is not allowed here (allowed: {allowed_txt})")
        self.name = name


class ExprEvalError(NumericsError):
    pass


class AdmissibilityError(GPWideError, ValueError):
    """A field violates the pinned initial slice or the Dirichlet trace."""

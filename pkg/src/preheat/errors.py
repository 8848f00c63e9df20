"""Exception types raised across the toolkit."""


class PreheatError(Exception):
    pass


class ParameterError(PreheatError, ValueError):
    """A parameter set or config violates its invariants."""


class DegenerateParametersError(ParameterError):
    pass


class ConfigurationError(PreheatError, ValueError):
    pass


class DomainError(PreheatError, ValueError):
    """An argument lies outside the domain where a formula is defined."""


class CommandRangeError(DomainError):
    pass


class OverpotentialOverflowError(PreheatError, ArithmeticError):
    pass


class SolverError(PreheatError, RuntimeError):
    def __init__(self, message: str, residual_norm: float = float("nan")):
        super().__init__(f"{message} (residual norm {residual_norm:.3e})")
        self.residual_norm = residual_norm


class TrainingDivergenceError(PreheatError, RuntimeError):
    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ParameterCorruptionError(PreheatError, RuntimeError):
    pass

"""Typed errors raised across the package."""


class RuleheadError(Exception):
    """Base class. CLI maps subclasses to exit codes."""

    exit_code = 2


class SchemaError(RuleheadError):
    pass


class RuleError(RuleheadError):
    pass


class RuleSyntaxError(RuleError):
    def __init__(self, message, line, column):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class RuleNameError(RuleSyntaxError):
    """Unknown concept or value name in a rule."""


class UnsatisfiableRule(RuleheadError):
    """The rule set admits no joint state."""


class CnfExplosion(RuleheadError):
    pass


class EnumerationBudgetExceeded(RuleheadError):
    pass


class Infeasible(RuleheadError):
    pass


class DimensionMismatch(RuleheadError):
    pass


class NumericalError(RuleheadError):
    exit_code = 3

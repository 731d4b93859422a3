"""Exception types shared across the package."""

from __future__ import annotations


class MonoflowError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatch(MonoflowError, ValueError):
    """Operands have incompatible dimensions."""


class SingularMatrixError(MonoflowError):
    """Matrix inversion refused: determinant or conditioning below threshold."""


class EvalRangeError(MonoflowError):
    """Evaluation outside the admissible range (nonpositive time, underflow)."""


class EvalError(MonoflowError):
    """Evaluation failure, annotated with the path to the offending node."""

    def __init__(self, message, path=()):
        self.path = tuple(path)
        super().__init__(message)

    def __str__(self):
        base = super().__str__()
        if self.path:
            return f"{base} [at {'/'.join(self.path)}]"
        return base


class RuleError(MonoflowError):
    """A certificate rule rejected the expression tree.

    Carries the rule name, the failed side condition, the offending numeric
    values (margins, determinants, exponents) and the node path, so that a
    rejection always reports *how far* the condition is from holding.
    """

    def __init__(self, rule, condition, values=None, path=()):
        self.rule = rule
        self.condition = condition
        self.values = dict(values or {})
        self.path = tuple(path)
        super().__init__(condition)

    def with_path(self, *prefix):
        return RuleError(self.rule, self.condition, self.values,
                         tuple(prefix) + self.path)

    def __str__(self):
        loc = "/".join(self.path) if self.path else "<root>"
        vals = ", ".join(f"{k}={v!r}" for k, v in self.values.items())
        msg = f"rule '{self.rule}' rejected node at {loc}: {self.condition}"
        if vals:
            msg += f" ({vals})"
        return msg


class ParseError(MonoflowError):
    """Source text rejected by the DSL parser."""

    def __init__(self, message, line, col, expected=(), found=None):
        self.line = line
        self.col = col
        self.expected = tuple(expected)
        self.found = found
        super().__init__(message)

    def __str__(self):
        msg = f"{super().__str__()} at line {self.line}, column {self.col}"
        if self.expected:
            msg += f" (expected {' | '.join(self.expected)}"
            if self.found is not None:
                msg += f", found {self.found!r}"
            msg += ")"
        return msg


class LowerError(MonoflowError):
    """Program lowering failure (undefined name, dimension mismatch)."""

    def __init__(self, message, path=()):
        self.path = tuple(path)
        super().__init__(message)

    def __str__(self):
        base = super().__str__()
        if self.path:
            return f"{base} [at {'/'.join(self.path)}]"
        return base


class SubharmonicWeightError(MonoflowError):
    """Weight failed the sampled subharmonicity check."""

    def __init__(self, message, worst_point=None, worst_value=None):
        self.worst_point = worst_point
        self.worst_value = worst_value
        super().__init__(message)


class TailMassWarning(UserWarning):
    """Quadrature box may be too small: boundary integrand not negligible."""

"""Exception and warning types shared across the package.

Input problems derive from :class:`InputError` (CLI exit code 2); numerical
failures derive from :class:`NumericalError` (CLI exit code 3).
"""

from __future__ import annotations


class RssiMotionError(Exception):
    """Base class for all package errors."""


class InputError(RssiMotionError, ValueError):
    """Bad input data or configuration."""


class NumericalError(RssiMotionError, ArithmeticError):
    """A computation could not be carried out reliably."""


class MalformedRow(InputError):
    def __init__(self, row: int, reason: str):
        self.row = row
        self.reason = reason
        super().__init__(f"line {row}: {reason}")


class NonMonotonicTimestamp(InputError):
    def __init__(self, row: int, previous: int, current: int):
        self.row = row
        super().__init__(
            f"line {row}: timestamp {current} ms does not follow {previous} ms"
        )


class NonMonotonicSequence(InputError):
    def __init__(self, row: int, previous: int, current: int):
        self.row = row
        super().__init__(f"line {row}: seq {current} is below previous seq {previous}")


class EmptyInput(InputError):
    pass


class InvalidWindow(InputError):
    pass


class NoOverlap(InputError):
    pass


class DegenerateChannel(InputError):
    def __init__(self, channel: str):
        self.channel = channel
        super().__init__(f"channel {channel!r} is constant (max == min)")


class UnknownChannel(InputError, KeyError):
    def __str__(self) -> str:  # KeyError repr-quotes its message otherwise
        return Exception.__str__(self)


class SeriesTooShort(InputError):
    pass


class EmptyLevels(InputError):
    pass


class TooFewPoints(InputError):
    pass


class InvalidConfig(InputError):
    pass


class NonPositiveDistance(InputError):
    pass


class ThresholdBelowSensitivity(InputError):
    pass


class NonPositiveVariance(InputError):
    pass


class SingularSystem(NumericalError):
    pass


class DegenerateChannelWarning(UserWarning):
    pass


class IllConditionedWarning(UserWarning):
    pass


class ZeroCurvatureWarning(UserWarning):
    pass


class TruncatedTraceWarning(UserWarning):
    pass

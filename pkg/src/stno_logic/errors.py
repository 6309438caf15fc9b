"""Exception hierarchy shared by all modules."""


class StnoError(Exception):
    """Base class for every error raised by this package."""


class IndeterminateAmplitudeError(StnoError, ValueError):
    pass


class ZeroArgumentError(StnoError, ValueError):
    pass


class UnresolvedReferenceError(StnoError):
    def __init__(self, node, value):
        self.node = node
        self.value = value
        super().__init__(f"input from node {node} is unsettled (v={value:.3g})")


class FrequencyCollisionError(StnoError, ValueError):
    pass


class StepSizeError(StnoError, ValueError):
    pass


class BlowUpError(StnoError):
    pass


class WindowTooShortError(StnoError, ValueError):
    pass


class IndeterminateReadoutError(StnoError):
    def __init__(self, message, node=None, integral=None):
        self.node = node
        self.integral = integral
        super().__init__(message)


class UnpairableEventsError(StnoError, ValueError):
    pass


class ParseError(StnoError, ValueError):
    def __init__(self, message, position, expected=()):
        self.position = position
        self.expected = tuple(expected)
        detail = f" (expected {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{message} at position {position}{detail}")


class UnboundVariableError(StnoError, KeyError):
    def __init__(self, name):
        self.name = name
        super().__init__(name)

    def __str__(self):
        return f"unbound variable {self.name!r}"


class UnsettledOutputError(StnoError):
    pass


class LayoutOverflowError(StnoError, ValueError):
    pass


class InstabilityError(StnoError):
    pass


class ConfigError(StnoError, ValueError):
    pass

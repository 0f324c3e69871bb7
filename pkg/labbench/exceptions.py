"""
Errors raised by labbench. SCPI faults are not here: they travel as
ScpiError values through the instrument error queues.
"""


class LabbenchError(Exception):
    """Base class of every labbench failure."""


class ConfigError(LabbenchError, ValueError):
    """Bench configuration is malformed or violates an invariant."""


class InvalidOperatingPointError(LabbenchError, ValueError):
    """Supply voltage is not positive or an input is not finite."""


class InstrumentNotFoundError(LabbenchError, LookupError):
    """No instrument matches the selector."""
    code = 404


class AmbiguousModelError(LabbenchError, LookupError):
    """Several instruments share the model; select by serial instead."""
    code = 409


class BridgeConnectionError(LabbenchError, ConnectionError):
    """The bridge could not be reached or closed the connection."""


class BridgeTimeoutError(LabbenchError, TimeoutError):
    """No response arrived within the session timeout."""


class BridgeUsageError(LabbenchError):
    """A verb was used on a session bound to the wrong instrument kind."""


class OracleError(LabbenchError):
    """A measurement failed while sampling."""
    def __init__(self, x, cause=None):
        self.x = x
        self.cause = cause
        super().__init__(f'oracle failed at x={x!r}: {cause}')


class VbiasMismatchError(LabbenchError, ValueError):
    """Run and reference do not cover the same V_bias values."""
    def __init__(self, values):
        self.values = list(values)
        super().__init__(f'vbias values not shared by run and reference: {self.values}')


class CsvFormatError(LabbenchError, ValueError):
    """A run file row could not be parsed."""
    def __init__(self, line, message):
        self.line = line
        super().__init__(f'line {line}: {message}')

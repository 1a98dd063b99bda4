"""Exception hierarchy shared by every module."""


class RequeryError(Exception):
    """Base class for toolkit errors."""

    kind = "error"


class InputError(RequeryError, ValueError):
    """Arguments violate an operation's preconditions."""

    kind = "input"


class CapabilityError(RequeryError):
    """Evidence cannot support the requested distribution or selection.

    Raised, for instance, when direct-prediction evidence (an end-to-end
    detector with no fixed candidate set) is asked for dropout statistics or
    combined replacement.
    """

    kind = "capability"


class ParseError(RequeryError):
    """A benchmark file line could not be decoded."""

    kind = "parse"

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(RequeryError):
    """A decoded record breaks a data-model invariant."""

    kind = "validation"

    def __init__(self, message, instance_id=None):
        if instance_id is not None:
            message = f"instance {instance_id!r}: {message}"
        super().__init__(message)
        self.instance_id = instance_id

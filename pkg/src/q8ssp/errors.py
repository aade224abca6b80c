"""Exception hierarchy shared by every module and mapped onto CLI exit codes."""


class Q8Error(Exception):
    """Base class. ``exit_code`` is what the CLI returns when this escapes."""

    exit_code = 3


class FormatError(Q8Error):
    """A container file does not have the expected tensor shape or dtype."""


class IntegrityError(Q8Error):
    """Data violates a record invariant (one-hot rows, masks, labels)."""

    exit_code = 1

    def __init__(self, message, record=None, position=None):
        super().__init__(message)
        self.record = record
        self.position = position


class SpecError(Q8Error):
    """A split specification is malformed: out-of-range or overlapping indices."""

    exit_code = 2


class LeakageError(Q8Error):
    """Splits share sequences and the caller did not pass an override."""

    exit_code = 1

    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


class ConfigError(Q8Error):
    exit_code = 2


class AlignmentError(Q8Error):
    """Predictions and gold records cannot be matched up by id or length."""

    exit_code = 1


class TrainingDiverged(Q8Error):
    """Loss became non-finite; ``history`` holds every completed epoch."""

    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


class EmptyMaskError(Q8Error, ValueError):
    """A mean over masked positions was requested but no position is real."""

    exit_code = 1

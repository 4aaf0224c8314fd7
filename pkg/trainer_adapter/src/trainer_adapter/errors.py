class LayoutError(ValueError):
    """The split layout is missing, incomplete, or malformed."""


class TrainerError(RuntimeError):
    """The trainer backend failed after a valid layout was loaded.

    Carries the tail of the trainer log so a caller can surface what the
    backend was doing when it died.
    """

    def __init__(self, message: str, log_tail: list[str] | None = None):
        super().__init__(message)
        self.log_tail = list(log_tail or [])

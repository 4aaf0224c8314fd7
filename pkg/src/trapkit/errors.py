"""Exception types shared across the toolkit."""


class InputError(ValueError):
    """Rejected input: invalid values, malformed files, broken invariants."""


class RemoteError(RuntimeError):
    """Remote API failure that was not recoverable by retrying."""


class AuthError(RemoteError):
    """Authentication or authorization rejected by the remote API."""

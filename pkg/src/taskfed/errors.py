"""Error type shared by all modules.

Every failure mode carries a stable machine-readable ``code`` (e.g.
``"dim-mismatch"``, ``"empty-aggregate"``) so callers and tests can match on
the condition instead of the message text.
"""


class TaskfedError(Exception):
    """Exception with a stable error code."""

    def __init__(self, code: str, message: str = ""):
        self.code = code
        super().__init__(f"{code}: {message}" if message else code)

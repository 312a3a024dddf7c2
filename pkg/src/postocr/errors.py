"""Exception hierarchy shared by all modules.

``DataError`` subclasses signal bad inputs or files (CLI exit code 2);
``DivergenceError`` and ``LMError`` subclasses are runtime failures (exit 3).
"""


class PostOCRError(Exception):
    pass


class DataError(PostOCRError, ValueError):
    pass


class EmptyReferenceError(DataError):
    pass


class EmptyInputError(DataError):
    pass


class UnsupportedCharacterError(DataError):
    pass


class MissingGlyphError(DataError):
    pass


class InsufficientDataError(DataError):
    pass


class EmptyRootError(DataError):
    pass


class MissingGarbageDataError(DataError):
    pass


class ShapeMismatchError(DataError):
    pass


class MissingCharacterError(DataError):
    def __init__(self, missing):
        self.missing = sorted(missing)
        super().__init__(f"missing characters: {''.join(self.missing)!r}")


class DegenerateTableError(DataError):
    pass


class MalformedLineError(DataError):
    def __init__(self, path, lineno, detail):
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {detail}")


class InvalidMatrixError(DataError):
    pass


class DimensionMismatchError(DataError):
    pass


class LengthExceededError(DataError):
    pass


class FingerprintMismatchError(DataError):
    pass


class FormatError(DataError):
    """Unreadable or corrupt file (bad magic, truncated payload, bad JSON)."""


class DivergenceError(PostOCRError, RuntimeError):
    pass


class LMError(PostOCRError, RuntimeError):
    pass


class LMTimeoutError(LMError):
    pass


class LMHTTPError(LMError):
    def __init__(self, status, body):
        self.status = status
        self.body = body[:200]
        super().__init__(f"HTTP {status}: {self.body}")


class LMSchemaError(LMError):
    pass


class LMAuthError(LMError):
    pass


class AllRequestsFailedError(LMError):
    pass

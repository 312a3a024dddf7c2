"""Character inventory and text normalization."""

import re
import string

DIGITS = string.digits
LOWER = string.ascii_lowercase
UPPER = string.ascii_uppercase

# class_id order: digits, lowercase, uppercase; GARBAGE takes id 62
ALPHANUMERICS = DIGITS + LOWER + UPPER
CHAR_TO_ID = {c: i for i, c in enumerate(ALPHANUMERICS)}

_UNSUPPORTED = re.compile(r"[^0-9A-Za-z\s]")
_WS = re.compile(r"\s+")


def normalize(text: str) -> str:
    """Drop characters outside 0-9, a-z, A-Z and space; collapse whitespace.

    >>> normalize("Hello, World!")
    'Hello World'
    """
    text = _UNSUPPORTED.sub("", text)
    # \s matches unicode spaces too; only ASCII alphanumerics survive above
    return _WS.sub(" ", text).strip()

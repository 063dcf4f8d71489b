"""Canonical JSON bytes for hashing and signing.

Output follows the JSON Canonicalization Scheme for the value subset used
here: objects, arrays, strings, integers and booleans. Floats are refused
outright instead of being run through the ECMAScript number formatter, so
every payload hashes the same way in any implementation.
"""

from __future__ import annotations

import json
from json.encoder import encode_basestring
from typing import Any

# Integers beyond this lose precision in IEEE-754 consumers.
MAX_SAFE_INTEGER = 2**53 - 1


class CanonicalizationError(ValueError):
    pass


def _encode(value: Any, out: list[str], path: Any) -> None:
    # path is a zero-arg callable so error locations cost nothing on the happy path
    if value is True:
        out.append("true")
    elif value is False:
        out.append("false")
    elif isinstance(value, str):
        out.append(encode_basestring(value))
    elif isinstance(value, int):
        if abs(value) > MAX_SAFE_INTEGER:
            raise CanonicalizationError(f"{path()}: integer {value} outside the safe range")
        out.append(str(int(value)))
    elif isinstance(value, dict):
        out.append("{")
        for i, key in enumerate(sorted(value, key=_check_key(path))):
            if i:
                out.append(",")
            out.append(encode_basestring(key))
            out.append(":")
            _encode(value[key], out, lambda key=key: f"{path()}.{key}")
        out.append("}")
    elif isinstance(value, (list, tuple)):
        out.append("[")
        for i, item in enumerate(value):
            if i:
                out.append(",")
            _encode(item, out, lambda i=i: f"{path()}[{i}]")
        out.append("]")
    elif isinstance(value, float):
        raise CanonicalizationError(f"{path()}: floating-point values are not allowed")
    else:
        raise CanonicalizationError(f"{path()}: unsupported type {type(value).__name__}")


def _check_key(path):
    def key(k: Any) -> bytes:
        if not isinstance(k, str):
            raise CanonicalizationError(f"{path()}: object keys must be strings, got {k!r}")
        return k.encode("utf-16-be")

    return key


# Code-point order equals UTF-16 order unless a key holds U+E000 or above
# (astral characters become surrogates, which sort below that range).
_UTF16_SAFE_MAX = "\ue000"
_fast = json.JSONEncoder(ensure_ascii=False, separators=(",", ":"), sort_keys=True,
                         allow_nan=False, check_circular=False)


def _plain(value: Any) -> bool:
    """True if ``value`` is valid for canonical output and the stdlib encoder
    with sort_keys yields the same bytes. False sends it to the slow path,
    which either produces the right order or raises a precise error."""
    if isinstance(value, str) or value is True or value is False:
        return True
    if isinstance(value, int):
        return abs(value) <= MAX_SAFE_INTEGER
    if isinstance(value, dict):
        for k, v in value.items():
            if not isinstance(k, str) or (k and max(k) >= _UTF16_SAFE_MAX) or not _plain(v):
                return False
        return True
    if isinstance(value, (list, tuple)):
        return all(_plain(v) for v in value)
    return False


def canonical_bytes(value: Any) -> bytes:
    """Serialize ``value`` to canonical UTF-8 JSON.

    Keys are sorted by UTF-16 code units at every level and no whitespace
    is emitted. Raises CanonicalizationError on floats, None, non-string
    keys or any other unsupported type.
    """
    if _plain(value):
        text = _fast.encode(value)
    else:
        out: list[str] = []
        _encode(value, out, lambda: "$")
        text = "".join(out)
    try:
        return text.encode("utf-8")
    except UnicodeEncodeError as exc:
        raise CanonicalizationError(f"string is not valid Unicode: {exc.reason}") from None

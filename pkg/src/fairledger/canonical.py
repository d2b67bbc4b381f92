"""Canonical serialization and content hashing shared by every module."""

import hashlib
import json
from typing import Any

ZERO_HASH = "0" * 64


def canonical_bytes(obj: Any) -> bytes:
    # sorted keys, minimal separators, UTF-8
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def content_hash(obj: Any) -> str:
    return sha256_hex(canonical_bytes(obj))

"""Algorithm-tagged content digests.

A digest is written as ``algo:mode:hex`` where mode is ``full`` or
``partial-<prefix_len>``, e.g. ``sha256:partial-65536:3f0a...``.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass
from typing import Optional

from .errors import ConfigurationError, DigestFormatError

HEX_LENGTHS = {"sha256": 64, "md5": 32, "sha1": 40}
CANONICAL_ALGO = "sha256"
_HEX_CHARS = frozenset("0123456789abcdef")


class Category(str, enum.Enum):
    UNKNOWN = "unknown"
    BENIGN = "benign"
    INCRIMINATING = "incriminating"

    @property
    def severity(self) -> int:
        return _SEVERITY[self]


_SEVERITY = {Category.UNKNOWN: 0, Category.BENIGN: 1, Category.INCRIMINATING: 2}


def check_algo(algo: str) -> str:
    if algo not in HEX_LENGTHS:
        raise ConfigurationError(f"unsupported hash algorithm {algo!r}")
    return algo


def new_hasher(algo: str):
    return hashlib.new(check_algo(algo))


@dataclass(frozen=True)
class ArtifactDigest:
    algo: str
    hex: str
    prefix_len: Optional[int] = None

    def __post_init__(self):
        expected = HEX_LENGTHS.get(self.algo)
        if expected is None:
            raise DigestFormatError(f"unknown algorithm {self.algo!r}")
        if len(self.hex) != expected or not _HEX_CHARS.issuperset(self.hex):
            raise DigestFormatError(
                f"{self.algo} digest must be {expected} lowercase hex chars, got {self.hex!r}"
            )
        if self.prefix_len is not None and (
            type(self.prefix_len) is not int or self.prefix_len <= 0
        ):
            raise DigestFormatError(f"partial digest needs prefix_len > 0, got {self.prefix_len!r}")

    @property
    def is_partial(self) -> bool:
        return self.prefix_len is not None

    @property
    def mode(self) -> str:
        return "full" if self.prefix_len is None else f"partial-{self.prefix_len}"

    def __str__(self) -> str:
        return f"{self.algo}:{self.mode}:{self.hex}"

    @classmethod
    def parse(cls, text: str) -> "ArtifactDigest":
        parts = text.split(":")
        if len(parts) != 3:
            raise DigestFormatError(f"digest must look like algo:mode:hex, got {text!r}")
        algo, mode, hexpart = parts
        if mode == "full":
            return cls(algo, hexpart)
        if mode.startswith("partial-"):
            raw = mode[len("partial-"):]
            if not raw.isdigit() or raw.startswith("0"):
                raise DigestFormatError(f"bad partial prefix length in {text!r}")
            return cls(algo, hexpart, int(raw))
        raise DigestFormatError(f"unknown digest mode {mode!r}")


def canonical_digest(data: bytes, algo: str = CANONICAL_ALGO,
                     prefix_len: Optional[int] = None) -> ArtifactDigest:
    """Hash ``data`` into an :class:`ArtifactDigest`.

    With ``prefix_len`` set, only the first ``min(len(data), prefix_len)``
    bytes are hashed and the result is a partial digest. A partial digest
    never compares equal to a full one, even when the hex matches.
    """
    if prefix_len is not None and prefix_len <= 0:
        raise ConfigurationError("prefix_len must be > 0")
    h = new_hasher(algo)
    h.update(data if prefix_len is None else memoryview(data)[:prefix_len])
    return ArtifactDigest(algo, h.hexdigest(), prefix_len)

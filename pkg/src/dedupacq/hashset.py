"""Named benign/incriminating hash sets and their text file format.

::

    dedupacq-hashset v1 <algo> <category> <name>
    <lowercase hex digest>
    ...

One digest per LF-terminated line. Lines starting with ``#`` are comments.
Exported files are sorted and duplicate-free.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import FrozenSet, Iterable, Union

from .digest import HEX_LENGTHS, ArtifactDigest, Category
from .errors import HashSetFormatError

MAGIC = "dedupacq-hashset"
VERSION = "v1"
_HEX = frozenset("0123456789abcdef")


@dataclass(frozen=True)
class HashSet:
    name: str
    category: Category
    algo: str
    digests: FrozenSet[str] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "category", Category(self.category))
        object.__setattr__(self, "digests", frozenset(self.digests))

    def artifact_digests(self):
        return [ArtifactDigest(self.algo, h) for h in sorted(self.digests)]


def format_hashset(hs: HashSet) -> bytes:
    lines = [f"{MAGIC} {VERSION} {hs.algo} {hs.category.value} {hs.name}"]
    lines.extend(sorted(hs.digests))
    return ("\n".join(lines) + "\n").encode("utf-8")


def parse_hashset(data: Union[bytes, str]) -> HashSet:
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise HashSetFormatError(1, f"not UTF-8: {exc}") from None
    lines = data.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise HashSetFormatError(1, "missing header")
    header = lines[0].split(" ", 4)
    if len(header) != 5 or header[0] != MAGIC:
        raise HashSetFormatError(1, f"bad header {lines[0]!r}")
    _, version, algo, category, name = header
    if version != VERSION:
        raise HashSetFormatError(1, f"unsupported hash-set version {version!r}")
    if algo not in HEX_LENGTHS:
        raise HashSetFormatError(1, f"unsupported algorithm {algo!r}")
    if category not in (Category.BENIGN.value, Category.INCRIMINATING.value):
        raise HashSetFormatError(1, f"category must be benign or incriminating, got {category!r}")
    if not name.strip():
        raise HashSetFormatError(1, "empty hash-set name")

    width = HEX_LENGTHS[algo]
    digests = set()
    for lineno, line in enumerate(lines[1:], start=2):
        if line.startswith("#"):
            continue
        if len(line) != width or not _HEX.issuperset(line):
            raise HashSetFormatError(lineno, f"expected {width} lowercase hex chars, got {line!r}")
        digests.add(line)
    return HashSet(name, Category(category), algo, frozenset(digests))


def build_hashset(name: str, category, digests: Iterable[ArtifactDigest]) -> HashSet:
    digests = list(digests)
    algos = {d.algo for d in digests}
    if len(algos) > 1 or any(d.is_partial for d in digests):
        raise ValueError("a hash set holds full digests of a single algorithm")
    algo = algos.pop() if algos else "sha256"
    return HashSet(name, Category(category), algo, frozenset(d.hex for d in digests))

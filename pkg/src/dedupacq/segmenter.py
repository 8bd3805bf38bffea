"""Split a source into artifacts and hash them in one streaming pass.

Raw images are tiled into fixed-size blocks; directory trees yield one
artifact per regular file, ordered by relative path. The whole-source
digest is accumulated over the same bytes as they stream past.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, List, Optional, Sequence, Tuple

from .digest import CANONICAL_ALGO, ArtifactDigest, canonical_digest, check_algo, new_hasher
from .errors import ConfigurationError
from .manifest import DIRECTORY_TREE, RAW_IMAGE, ArtifactEntry

DEFAULT_BLOCK_SIZE = 4096
DEFAULT_RISK_PREFIX = 65536
MIN_BLOCK_SIZE = 512
MAX_BLOCK_SIZE = 16 * 2**20


@dataclass(frozen=True)
class SourceSpec:
    path: Path
    kind: str = RAW_IMAGE
    block_size: int = DEFAULT_BLOCK_SIZE
    risk_prefix_len: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "path", Path(self.path))
        if self.kind not in (RAW_IMAGE, DIRECTORY_TREE):
            raise ConfigurationError(f"unknown source kind {self.kind!r}")
        bs = self.block_size
        if not (MIN_BLOCK_SIZE <= bs <= MAX_BLOCK_SIZE) or bs & (bs - 1):
            raise ConfigurationError(
                f"block_size must be a power of two in [{MIN_BLOCK_SIZE}, {MAX_BLOCK_SIZE}], got {bs}")
        if self.risk_prefix_len is not None and self.risk_prefix_len < MIN_BLOCK_SIZE:
            raise ConfigurationError(f"risk_prefix_len must be >= {MIN_BLOCK_SIZE}")

    @property
    def mode(self) -> str:
        return "full" if self.risk_prefix_len is None else "risk"


def list_tree(root: Path) -> Tuple[List[Tuple[str, Path]], List[str]]:
    """Regular files under ``root`` as ``(relative "/"-path, path)``, sorted.

    Returns ``(non_empty, empty_relpaths)``. Symlinks and special files are
    skipped.
    """
    found = []
    for dirpath, dirnames, filenames in os.walk(root, followlinks=False):
        dirnames.sort()
        for name in filenames:
            p = Path(dirpath, name)
            if p.is_symlink() or not p.is_file():
                continue
            found.append((p.relative_to(root).as_posix(), p))
    found.sort(key=lambda item: item[0])
    files = [(rel, p) for rel, p in found if p.stat().st_size > 0]
    empty = [rel for rel, p in found if p.stat().st_size == 0]
    return files, empty


class SegmentStream:
    """Iterate ``(ArtifactEntry, payload)`` pairs for a source.

    ``full_digest`` and ``bytes_read`` become valid once iteration finishes.
    The source is only ever opened read-only.
    """

    def __init__(self, source: SourceSpec, algo: str = CANONICAL_ALGO):
        self.source = source
        self.algo = check_algo(algo)
        self.full_digest: Optional[ArtifactDigest] = None
        self.bytes_read = 0
        self.paths: Optional[List[str]] = None
        self.empty_files: List[str] = []
        if source.kind == RAW_IMAGE:
            if not source.path.is_file():
                raise OSError(f"cannot read raw image {source.path}: not a regular file")
        elif not source.path.is_dir():
            raise OSError(f"cannot read directory tree {source.path}: not a directory")

    def __iter__(self) -> Iterator[Tuple[ArtifactEntry, bytes]]:
        whole = new_hasher(self.algo)
        prefix = self.source.risk_prefix_len
        offset = 0
        for payload in self._payloads():
            whole.update(payload)
            entry = ArtifactEntry(offset, len(payload), canonical_digest(payload, self.algo, prefix))
            offset += len(payload)
            self.bytes_read = offset
            yield entry, payload
        self.full_digest = ArtifactDigest(self.algo, whole.hexdigest())

    def _payloads(self) -> Iterator[bytes]:
        if self.source.kind == RAW_IMAGE:
            bs = self.source.block_size
            with open(self.source.path, "rb") as f:
                while True:
                    block = f.read(bs)
                    if not block:
                        return
                    # short reads mid-file (pipes, network mounts) still fill a full block
                    while len(block) < bs:
                        more = f.read(bs - len(block))
                        if not more:
                            break
                        block += more
                    yield block
        else:
            files, self.empty_files = list_tree(self.source.path)
            self.paths = [rel for rel, _ in files]
            for rel, p in files:
                with open(p, "rb") as f:
                    data = f.read()
                if not data:
                    raise OSError(f"{p}: file became empty during acquisition")
                yield data


def segment(source: SourceSpec, algo: str = CANONICAL_ALGO):
    """Segment ``source`` eagerly.

    Returns ``(list of (entry, payload), source_full_digest)``. Use
    :class:`SegmentStream` directly to avoid holding every payload.
    """
    stream = SegmentStream(source, algo)
    items = list(stream)
    return items, stream.full_digest


def read_entry_payload(source: SourceSpec, entry: ArtifactEntry,
                       paths: Optional[Sequence[str]] = None, index: Optional[int] = None) -> bytes:
    """Re-read one artifact's bytes from the source (used for upload retries)."""
    if source.kind == RAW_IMAGE:
        with open(source.path, "rb") as f:
            f.seek(entry.offset)
            data = f.read(entry.length)
    else:
        data = (source.path / paths[index]).read_bytes()
    if len(data) != entry.length:
        raise OSError(f"{source.path}: source changed since segmentation")
    return data


def detect_duplicates_local(digests: Iterable[ArtifactDigest]) -> List[bool]:
    """First-occurrence flags: ``True`` unless an earlier digest is equal."""
    seen = set()
    flags = []
    for d in digests:
        flags.append(d not in seen)
        seen.add(d)
    return flags

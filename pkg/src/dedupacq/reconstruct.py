"""Rebuild a bit-exact source from a manifest and an artifact source.

The artifact source is a local :class:`~dedupacq.repository.Repository`,
an :class:`~dedupacq.store.ArtifactStore` or a
:class:`~dedupacq.service.client.ServiceClient`; anything with
``get(digest)`` and ``missing(digests)`` will do.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path, PurePosixPath
from typing import Callable, Dict, List, Mapping, Optional, Union

from .digest import ArtifactDigest, canonical_digest, new_hasher
from .errors import DedupAcqError, ManifestError, MissingArtifactsError, NotFoundError, TargetExistsError
from .manifest import DIRECTORY_TREE, AcquisitionManifest

DEFAULT_WORKERS = 8
_READ_CHUNK = 4 * 2**20


class BrokenChainError(DedupAcqError):
    def __init__(self, missing: str, message: str = ""):
        super().__init__(message or f"snapshot chain is broken: manifest {missing} not found")
        self.missing = missing


@dataclass(frozen=True)
class SuspectEntry:
    index: int
    offset: int
    length: int
    digest: ArtifactDigest
    reason: str


@dataclass(frozen=True)
class VerificationResult:
    verified: bool
    expected: ArtifactDigest
    actual: ArtifactDigest
    suspects: List[SuspectEntry] = field(default_factory=list)

    @property
    def first_mismatch(self) -> Optional[SuspectEntry]:
        return self.suspects[0] if self.suspects else None

    def describe(self) -> str:
        if self.verified:
            return f"verified: {self.actual}"
        lines = [f"MISMATCH: expected {self.expected}, reconstructed {self.actual}"]
        for s in self.suspects:
            lines.append(f"  entry {s.index} [{s.offset}, {s.offset + s.length}) {s.digest}: {s.reason}")
        return "\n".join(lines)


def _safe_relpath(rel: str) -> PurePosixPath:
    p = PurePosixPath(rel)
    if p.is_absolute() or ".." in p.parts or not p.parts:
        raise ManifestError("field", f"unsafe path in manifest: {rel!r}")
    return p


def _fetch_all(manifest: AcquisitionManifest, source, workers: int, write: Callable[[int, bytes], None]):
    """Fetch each distinct digest once and hand it to ``write`` for every entry using it."""
    users: Dict[ArtifactDigest, List[int]] = {}
    for i, e in enumerate(manifest.entries):
        users.setdefault(e.digest, []).append(i)
    digests = list(users)
    window = max(1, workers) * 4
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        for start in range(0, len(digests), window):
            chunk = digests[start:start + window]
            for d, payload in zip(chunk, pool.map(source.get, chunk)):
                for i in users[d]:
                    write(i, payload)


def reconstruct(manifest: AcquisitionManifest, source, target, *, workers: int = DEFAULT_WORKERS) -> VerificationResult:
    """Write the source described by ``manifest`` to ``target`` and verify it.

    Raises :class:`TargetExistsError` if ``target`` exists and
    :class:`MissingArtifactsError` (before touching the filesystem) if any
    artifact cannot be resolved.
    """
    target = Path(target)
    if target.exists() or target.is_symlink():
        raise TargetExistsError(f"refusing to overwrite existing {target}")
    absent = source.missing(e.digest for e in manifest.entries)
    if absent:
        raise MissingArtifactsError(absent)
    short: Dict[int, str] = {}

    def fit(i: int, payload: bytes) -> bytes:
        want = manifest.entries[i].length
        if len(payload) != want:
            short[i] = f"stored payload is {len(payload)} bytes, entry needs {want}"
            payload = payload[:want].ljust(want, b"\0")
        return payload

    if manifest.source_kind == DIRECTORY_TREE:
        rels = [_safe_relpath(p) for p in manifest.paths]
        empties = [_safe_relpath(p) for p in manifest.empty_files]
        target.mkdir(parents=True)
        for rel in empties:
            (target / rel).parent.mkdir(parents=True, exist_ok=True)
            (target / rel).touch(exist_ok=False)

        def write(i, payload):
            dest = target / rels[i]
            dest.parent.mkdir(parents=True, exist_ok=True)
            with open(dest, "xb") as f:
                f.write(fit(i, payload))

        _fetch_all(manifest, source, workers, write)
        reader = lambda i: (target / rels[i]).read_bytes()  # noqa: E731
        whole = new_hasher(manifest.hash_algo)
        for i in range(len(manifest.entries)):
            whole.update(reader(i))
    else:
        fd = os.open(target, os.O_WRONLY | os.O_CREAT | os.O_EXCL, 0o644)
        try:
            os.ftruncate(fd, manifest.total_size)
            _fetch_all(manifest, source, workers,
                       lambda i, payload: os.pwrite(fd, fit(i, payload), manifest.entries[i].offset))
            os.fsync(fd)
        finally:
            os.close(fd)

        def reader(i):
            e = manifest.entries[i]
            with open(target, "rb") as f:
                f.seek(e.offset)
                return f.read(e.length)

        whole = new_hasher(manifest.hash_algo)
        with open(target, "rb") as f:
            for chunk in iter(lambda: f.read(_READ_CHUNK), b""):
                whole.update(chunk)

    actual = ArtifactDigest(manifest.hash_algo, whole.hexdigest())
    if actual == manifest.source_full_digest:
        return VerificationResult(True, manifest.source_full_digest, actual)
    return VerificationResult(False, manifest.source_full_digest, actual,
                              _localize(manifest, reader, short))


def _localize(manifest: AcquisitionManifest, reader, short: Dict[int, str]) -> List[SuspectEntry]:
    """Blame individual entries for a whole-image mismatch.

    Entries whose written bytes do not re-hash to their digest are blamed
    first. In risk mode, an entry whose payload was suppressed as a
    partial-digest duplicate cannot be checked byte-for-byte, so those are
    reported as well.
    """
    suspects = []
    for i, e in enumerate(manifest.entries):
        reason = short.get(i)
        if reason is None and canonical_digest(reader(i), e.digest.algo, e.digest.prefix_len) != e.digest:
            reason = "written bytes do not match entry digest"
        if reason is None and e.digest.is_partial and not e.transferred:
            reason = "suppressed as a partial-digest duplicate; payload taken from another artifact"
        if reason:
            suspects.append(SuspectEntry(i, e.offset, e.length, e.digest, reason))
    return suspects


ManifestSource = Union[Mapping[str, AcquisitionManifest], Callable[[str], AcquisitionManifest]]


def resolve_chain(manifests: ManifestSource, snapshot_id: str) -> List[AcquisitionManifest]:
    """Follow ``snapshot_of`` links from ``snapshot_id`` back to the root.

    Returns the chain newest-first.
    """
    fetch = manifests.__getitem__ if isinstance(manifests, Mapping) else manifests
    chain, seen = [], set()
    current = snapshot_id
    while current is not None:
        if current in seen:
            raise BrokenChainError(current, f"snapshot chain has a cycle at {current}")
        seen.add(current)
        try:
            m = fetch(current)
        except (KeyError, NotFoundError):
            raise BrokenChainError(current) from None
        chain.append(m)
        current = m.snapshot_of
    return chain


def reconstruct_snapshot(manifests: ManifestSource, snapshot_id: str, source, target, *,
                         workers: int = DEFAULT_WORKERS) -> VerificationResult:
    """Reconstruct one point-in-time snapshot after validating its chain.

    Every manifest in a chain is complete on its own (unchanged artifacts
    are referenced, not omitted), so only the chosen snapshot is read.
    """
    chain = resolve_chain(manifests, snapshot_id)
    return reconstruct(chain[0], source, target, workers=workers)

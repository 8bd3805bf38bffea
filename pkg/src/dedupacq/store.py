"""Content-addressable artifact store.

Layout under the store root::

    objects/<algo>/<hex[0:2]>/<hex[2:4]>/<hex>           payload, raw bytes
    aliases/<algo>-p<prefix>/<hex[0:2]>/<hex[2:4]>/<hex> full digest text
    staging/                                             in-flight writes

Payloads are written to ``staging`` and published with ``os.link``, which
fails if the name already exists. Exactly one of several racing writers
creates the object; the rest see ``already_present``. A crash before the
link leaves only a staging file, never a half-written object.

Partial (risk-mode) digests are stored as aliases pointing at the full
digest of the payload first uploaded under them; the payload itself is
always keyed by its full digest.
"""

from __future__ import annotations

import enum
import os
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional

from .digest import ArtifactDigest, canonical_digest
from .errors import IntegrityError, NotFoundError


class PutResult(str, enum.Enum):
    CREATED = "created"
    ALREADY_PRESENT = "already_present"


@dataclass(frozen=True)
class StoreStats:
    artifact_count: int = 0
    stored_bytes: int = 0
    logical_bytes: int = 0

    @property
    def dedup_savings(self) -> float:
        if self.logical_bytes == 0:
            return 0.0
        return 1 - self.stored_bytes / self.logical_bytes

    def as_dict(self) -> dict:
        return {"artifact_count": self.artifact_count, "stored_bytes": self.stored_bytes,
                "logical_bytes": self.logical_bytes, "dedup_savings": self.dedup_savings}


class ArtifactStore:
    def __init__(self, root):
        self.root = Path(root)
        for sub in ("objects", "aliases", "staging"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)

    def _object_path(self, digest: ArtifactDigest) -> Path:
        h = digest.hex
        return self.root / "objects" / digest.algo / h[:2] / h[2:4] / h

    def _alias_path(self, digest: ArtifactDigest) -> Path:
        h = digest.hex
        return self.root / "aliases" / f"{digest.algo}-p{digest.prefix_len}" / h[:2] / h[2:4] / h

    def _publish(self, data: bytes, final: Path, mode: int = 0o444) -> bool:
        """Atomically create ``final`` with ``data``; False if it already existed."""
        if final.exists():
            return False
        final.parent.mkdir(parents=True, exist_ok=True)
        tmp = self.root / "staging" / uuid.uuid4().hex
        try:
            with open(tmp, "wb") as f:
                f.write(data)
                f.flush()
                os.fsync(f.fileno())
            os.chmod(tmp, mode)
            try:
                os.link(tmp, final)
            except FileExistsError:
                return False
            return True
        finally:
            tmp.unlink(missing_ok=True)

    def resolve(self, digest: ArtifactDigest) -> Optional[ArtifactDigest]:
        """Full digest whose payload serves ``digest``, or None if absent."""
        if not digest.is_partial:
            return digest if self._object_path(digest).exists() else None
        try:
            target = ArtifactDigest.parse(self._alias_path(digest).read_text("ascii"))
        except FileNotFoundError:
            return None
        return target if self._object_path(target).exists() else None

    def contains(self, digest: ArtifactDigest) -> bool:
        return self.resolve(digest) is not None

    def missing(self, digests: Iterable[ArtifactDigest]) -> List[ArtifactDigest]:
        return [d for d in dict.fromkeys(digests) if not self.contains(d)]

    def put(self, digest: ArtifactDigest, payload: bytes) -> PutResult:
        """Store ``payload`` under ``digest`` after re-hashing it.

        A partial digest is verified against the payload prefix; the payload
        is stored under its full digest and the partial digest becomes an
        alias for it (first writer wins).
        """
        check = canonical_digest(payload, digest.algo, digest.prefix_len)
        if check != digest:
            raise IntegrityError(digest, f"payload hashes to {check}")
        if not digest.is_partial:
            created = self._publish(payload, self._object_path(digest))
            return PutResult.CREATED if created else PutResult.ALREADY_PRESENT
        if self.resolve(digest) is not None:
            return PutResult.ALREADY_PRESENT
        full = canonical_digest(payload, digest.algo)
        self._publish(payload, self._object_path(full))
        created = self._publish(str(full).encode("ascii"), self._alias_path(digest))
        return PutResult.CREATED if created else PutResult.ALREADY_PRESENT

    def get(self, digest: ArtifactDigest) -> bytes:
        """Return the payload for ``digest``, verified by re-hashing."""
        full = digest
        if digest.is_partial:
            full = self.resolve(digest)
            if full is None:
                raise NotFoundError(f"artifact {digest} not in store")
        try:
            data = self._object_path(full).read_bytes()
        except FileNotFoundError:
            raise NotFoundError(f"artifact {digest} not in store") from None
        if canonical_digest(data, full.algo) != full:
            raise IntegrityError(full, "stored payload is corrupt")
        if digest.is_partial and canonical_digest(data, digest.algo, digest.prefix_len) != digest:
            raise IntegrityError(digest, "aliased payload does not match partial digest")
        return data

    def iter_objects(self):
        base = self.root / "objects"
        for algo_dir in sorted(base.iterdir()):
            for dirpath, _, files in os.walk(algo_dir):
                for name in files:
                    yield ArtifactDigest(algo_dir.name, name), Path(dirpath, name)

    def stats(self, logical_bytes: int = 0) -> StoreStats:
        count = size = 0
        for _, path in self.iter_objects():
            count += 1
            size += path.stat().st_size
        return StoreStats(count, size, logical_bytes)

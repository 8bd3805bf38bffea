"""Central state behind the manifest service: artifacts, index and manifests.

Offline acquisitions use the same class on a local directory, so a
workstation without network access builds exactly the structure a server
would hold::

    <root>/store/                 ArtifactStore
    <root>/index/                 DedupIndex
    <root>/manifests/<id>.dam.json
    <root>/manifests/catalog.jsonl  one line per accepted manifest, in order
"""

from __future__ import annotations

import json
import logging
import os
import threading
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

from .digest import ArtifactDigest, Category
from .errors import ManifestError, MissingArtifactsError, NotFoundError
from .index import CheckResult, DedupIndex, check_uniform
from .manifest import AcquisitionManifest, parse_manifest, serialize_manifest
from .store import ArtifactStore, PutResult, StoreStats

log = logging.getLogger(__name__)


class Repository:
    max_batch = 1024

    def __init__(self, root, *, store_root=None, index_root=None, sync: bool = True):
        self.root = Path(root)
        self.store = ArtifactStore(store_root or self.root / "store")
        self.index = DedupIndex(index_root or self.root / "index", sync=sync)
        self.manifest_dir = self.root / "manifests"
        self.manifest_dir.mkdir(parents=True, exist_ok=True)
        self._catalog_path = self.manifest_dir / "catalog.jsonl"
        self._lock = threading.Lock()
        self._catalog: List[dict] = []
        if self._catalog_path.exists():
            for line in self._catalog_path.read_text("utf-8").splitlines():
                if line.strip():
                    self._catalog.append(json.loads(line))
        self._ids = {c["id"] for c in self._catalog}

    def close(self):
        self.index.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- artifacts -------------------------------------------------------

    def check(self, digests: Sequence[ArtifactDigest]) -> List[CheckResult]:
        """Index answers, with ``stored`` taken from the artifact store.

        A digest is present if the index knows it or its payload is stored
        (an upload may precede the manifest that references it).
        """
        check_uniform(digests)
        out = []
        for d, res in zip(digests, self.index.check_batch(digests)):
            stored = self.store.contains(d)
            out.append(CheckResult(res.present or stored, res.category, stored))
        return out

    def put(self, digest: ArtifactDigest, payload: bytes) -> PutResult:
        return self.store.put(digest, payload)

    def get(self, digest: ArtifactDigest) -> bytes:
        return self.store.get(digest)

    def missing(self, digests) -> List[ArtifactDigest]:
        return self.store.missing(digests)

    # -- manifests -------------------------------------------------------

    def submit_manifest(self, manifest: Union[AcquisitionManifest, bytes]) -> str:
        """Validate, assign an id, persist and index a manifest.

        Every referenced digest must resolve in the store; otherwise
        :class:`MissingArtifactsError` lists the absent ones and nothing is
        recorded.
        """
        if isinstance(manifest, (bytes, bytearray)):
            manifest = parse_manifest(bytes(manifest))
        absent = self.store.missing(e.digest for e in manifest.entries)
        if absent:
            raise MissingArtifactsError(absent)
        with self._lock:
            if manifest.snapshot_of is not None and manifest.snapshot_of not in self._ids:
                raise ManifestError("field", f"snapshot_of refers to unknown manifest {manifest.snapshot_of}")
            mid = f"M{len(self._catalog) + 1:08d}"
            stored = manifest.with_id(mid)
            data = serialize_manifest(stored)
            tmp = self.manifest_dir / f".{mid}.tmp"
            with open(tmp, "wb") as f:
                f.write(data)
                f.flush()
                os.fsync(f.fileno())
            os.replace(tmp, self.manifest_dir / f"{mid}.dam.json")
            entry = {"id": mid, "case": stored.case_id, "mode": stored.mode,
                     "total_size": stored.total_size, "snapshot_of": stored.snapshot_of}
            with open(self._catalog_path, "a", encoding="utf-8") as f:
                f.write(json.dumps(entry) + "\n")
                f.flush()
                os.fsync(f.fileno())
            self._catalog.append(entry)
            self._ids.add(mid)
            self.index.record_batch((e.digest, mid) for e in stored.entries)
        if stored.is_risk:
            log.warning("manifest %s was acquired in RISK mode: deduplication used partial digests", mid)
        return mid

    def manifest_bytes(self, manifest_id: str) -> bytes:
        if manifest_id not in self._ids:
            raise NotFoundError(f"no manifest {manifest_id!r}")
        return (self.manifest_dir / f"{manifest_id}.dam.json").read_bytes()

    def get_manifest(self, manifest_id: str) -> AcquisitionManifest:
        return parse_manifest(self.manifest_bytes(manifest_id))

    def list_manifests(self, case: Optional[str] = None) -> List[str]:
        with self._lock:
            return [c["id"] for c in self._catalog if case is None or c["case"] == case]

    def catalog(self) -> List[dict]:
        with self._lock:
            return [dict(c) for c in self._catalog]

    # -- triage ------------------------------------------------------------

    def flag(self, digest: ArtifactDigest, category, note: str = "", hashset: Optional[str] = None):
        return self.index.flag(digest, category, note, hashset)

    def import_hashset(self, data: bytes):
        return self.index.import_hashset(data)

    def export_hashset(self, name: str) -> bytes:
        return self.index.export_hashset(name)

    def stats(self) -> StoreStats:
        with self._lock:
            logical = sum(c["total_size"] for c in self._catalog)
        return self.store.stats(logical)

    def categories(self) -> Dict[ArtifactDigest, Category]:
        return {r.digest: r.category for r in self.index.records() if r.category != Category.UNKNOWN}

"""Acquisition pipeline: segment, check, upload new artifacts, submit manifest.

``backend`` is anything with the repository surface (``check``, ``put``,
``submit_manifest``): a local :class:`~dedupacq.repository.Repository`
for offline work or a :class:`~dedupacq.service.client.ServiceClient`.
An optional client-side :class:`~dedupacq.index.DedupIndex` acts as the
local lookup database; digests it already knows as stored skip the server
check. The server re-validates every digest when the manifest arrives, so
a stale local index costs a retry, never a broken manifest.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from .digest import ArtifactDigest, Category
from .errors import MissingArtifactsError
from .index import DedupIndex
from .manifest import DIRECTORY_TREE, AcquisitionManifest, ArtifactEntry
from .segmenter import SegmentStream, SourceSpec, read_entry_payload

log = logging.getLogger(__name__)

RISK_WARNING = ("RISK MODE: artifacts were deduplicated on partial digests. A block that "
                "matches a stored artifact only in its hashed prefix is silently replaced; "
                "reconstruction verifies the whole image and will report such entries.")
MAX_BATCH_PAYLOAD = 64 * 2**20


@dataclass
class AcquisitionReport:
    manifest_id: str
    case_id: str
    mode: str
    total_artifacts: int
    unique_artifacts_uploaded: int
    bytes_read: int
    bytes_transferred: int
    triage_counts: Dict[str, int]
    triage_bytes: Dict[str, int]
    incriminating: List[dict] = field(default_factory=list)
    wire_bytes: int = 0
    elapsed_seconds: float = 0.0
    warnings: List[str] = field(default_factory=list)

    @property
    def dedup_ratio(self) -> float:
        if self.total_artifacts == 0:
            return 0.0
        return (self.total_artifacts - self.unique_artifacts_uploaded) / self.total_artifacts

    def to_dict(self) -> dict:
        return {
            "manifest_id": self.manifest_id, "case_id": self.case_id, "mode": self.mode,
            "total_artifacts": self.total_artifacts,
            "unique_artifacts_uploaded": self.unique_artifacts_uploaded,
            "dedup_ratio": self.dedup_ratio, "bytes_read": self.bytes_read,
            "bytes_transferred": self.bytes_transferred, "wire_bytes": self.wire_bytes,
            "triage_counts": self.triage_counts, "triage_bytes": self.triage_bytes,
            "incriminating": self.incriminating, "elapsed_seconds": self.elapsed_seconds,
            "warnings": self.warnings,
        }

    def to_text(self) -> str:
        lines = []
        for w in self.warnings:
            lines.append(f"!!! {w}")
        lines += [
            f"manifest       {self.manifest_id}  (case {self.case_id}, mode {self.mode})",
            f"artifacts      {self.total_artifacts} total, {self.unique_artifacts_uploaded} uploaded",
            f"dedup ratio    {self.dedup_ratio:.4f}",
            f"bytes read     {self.bytes_read}",
            f"transferred    {self.bytes_transferred} payload bytes, {self.wire_bytes} wire bytes",
            f"elapsed        {self.elapsed_seconds:.2f}s",
            "triage         " + ", ".join(f"{k} {self.triage_counts.get(k, 0)}"
                                          for k in ("incriminating", "unknown", "benign")),
        ]
        if self.incriminating:
            lines.append(f"INCRIMINATING MATCHES ({len(self.incriminating)}):")
            for item in self.incriminating:
                lines.append(f"  offset {item['offset']:>12}  length {item['length']:>8}  {item['digest']}")
        return "\n".join(lines) + "\n"


@dataclass
class AcquisitionResult:
    manifest: AcquisitionManifest
    report: AcquisitionReport


def _worse(a: Category, b: Category) -> Category:
    return a if a.severity >= b.severity else b


def acquire(source: SourceSpec, backend, *, case_id: str, device_meta: Optional[Dict[str, str]] = None,
            snapshot_of: Optional[str] = None, local_index: Optional[DedupIndex] = None,
            algo: str = "sha256", batch_size: Optional[int] = None, upload_workers: int = 4,
            max_retries: int = 3) -> AcquisitionResult:
    started = time.monotonic()
    wire_start = getattr(backend, "wire_bytes", 0)
    batch_size = batch_size or getattr(backend, "max_batch", 1024)
    stream = SegmentStream(source, algo)

    entries: List[ArtifactEntry] = []
    first_index: Dict[ArtifactDigest, int] = {}
    categories: Dict[ArtifactDigest, Category] = {}
    uploaded: set = set()
    pending: list = []
    pending_bytes = 0

    def flush():
        nonlocal pending_bytes
        if not pending:
            return
        digests = [e.digest for _, e, _ in pending]
        remote = digests
        if local_index is not None:
            remote = []
            for d, res in zip(digests, local_index.check_batch(digests)):
                categories[d] = res.category
                if not res.stored:
                    remote.append(d)
        need = set()
        for i in range(0, len(remote), batch_size):
            chunk = remote[i:i + batch_size]
            for d, res in zip(chunk, backend.check(chunk)):
                categories[d] = _worse(categories.get(d, Category.UNKNOWN), res.category)
                if not res.stored:
                    need.add(d)
        work = [(e.digest, payload) for _, e, payload in pending if e.digest in need]
        with ThreadPoolExecutor(max_workers=max(1, upload_workers)) as pool:
            list(pool.map(lambda item: backend.put(*item), work))
        uploaded.update(d for d, _ in work)
        pending.clear()
        pending_bytes = 0

    for entry, payload in stream:
        idx = len(entries)
        entries.append(entry)
        if entry.digest in first_index:
            continue
        first_index[entry.digest] = idx
        pending.append((idx, entry, payload))
        pending_bytes += len(payload)
        if len(pending) >= batch_size or pending_bytes >= MAX_BATCH_PAYLOAD:
            flush()
    flush()

    def build(mid=""):
        final = []
        for i, e in enumerate(entries):
            final.append(e._replace(category=categories.get(e.digest, Category.UNKNOWN),
                                    transferred=e.digest in uploaded and first_index[e.digest] == i))
        return AcquisitionManifest(
            manifest_id=mid, case_id=case_id, total_size=stream.bytes_read,
            source_full_digest=stream.full_digest, entries=final,
            block_size=source.block_size if source.kind != DIRECTORY_TREE else 0,
            hash_algo=algo, mode=source.mode, device_meta=dict(device_meta or {}),
            snapshot_of=snapshot_of, source_kind=source.kind,
            paths=stream.paths if source.kind == DIRECTORY_TREE else None,
            empty_files=stream.empty_files)

    manifest = build()
    for attempt in range(max_retries + 1):
        try:
            mid = backend.submit_manifest(manifest)
            break
        except MissingArtifactsError as exc:
            if attempt == max_retries:
                raise
            log.warning("server is missing %d artifact(s); re-uploading (attempt %d)",
                        len(exc.digests), attempt + 1)
            for d in exc.digests:
                i = first_index[d]
                backend.put(d, read_entry_payload(source, entries[i], stream.paths, i))
                uploaded.add(d)
            manifest = build()
    manifest = manifest.with_id(mid)

    if local_index is not None:
        local_index.record_batch((e.digest, mid) for e in manifest.entries)

    report = make_report(manifest, uploaded_count=len(uploaded), bytes_read=stream.bytes_read)
    report.wire_bytes = getattr(backend, "wire_bytes", 0) - wire_start
    report.elapsed_seconds = time.monotonic() - started
    if manifest.is_risk:
        log.warning(RISK_WARNING)
    return AcquisitionResult(manifest, report)


def make_report(manifest: AcquisitionManifest, *, uploaded_count: int, bytes_read: int) -> AcquisitionReport:
    counts = {c.value: 0 for c in Category}
    sizes = {c.value: 0 for c in Category}
    incriminating = []
    transferred = 0
    for e in manifest.entries:
        counts[e.category.value] += 1
        sizes[e.category.value] += e.length
        if e.transferred:
            transferred += e.length
        if e.category == Category.INCRIMINATING:
            incriminating.append({"offset": e.offset, "length": e.length, "digest": str(e.digest)})
    warnings = [RISK_WARNING] if manifest.is_risk else []
    if incriminating:
        warnings.append(f"{len(incriminating)} artifact(s) match known INCRIMINATING content")
    return AcquisitionReport(
        manifest_id=manifest.manifest_id, case_id=manifest.case_id, mode=manifest.mode,
        total_artifacts=len(manifest.entries), unique_artifacts_uploaded=uploaded_count,
        bytes_read=bytes_read, bytes_transferred=transferred, triage_counts=counts,
        triage_bytes=sizes, incriminating=incriminating, warnings=warnings)

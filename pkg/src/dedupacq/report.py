"""Triage view of a manifest: incriminating first, unknown summarized, benign counted."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List

from .digest import Category
from .manifest import AcquisitionManifest


@dataclass
class TriageReport:
    manifest_id: str
    counts: Dict[str, int]
    bytes: Dict[str, int]
    incriminating: List[dict] = field(default_factory=list)
    risk: bool = False

    def to_dict(self) -> dict:
        return {"manifest_id": self.manifest_id, "risk_mode": self.risk, "counts": self.counts,
                "bytes": self.bytes, "incriminating": self.incriminating}

    def to_text(self) -> str:
        out = [f"triage report for {self.manifest_id}"]
        if self.risk:
            out.append("!!! acquired in RISK mode (partial-digest deduplication)")
        out.append(f"INCRIMINATING: {self.counts['incriminating']} artifact(s), "
                   f"{self.bytes['incriminating']} bytes")
        for item in self.incriminating:
            out.append(f"  offset {item['offset']:>12}  length {item['length']:>8}  {item['digest']}")
        out.append(f"unknown: {self.counts['unknown']} artifact(s), {self.bytes['unknown']} bytes to review")
        out.append(f"benign: {self.counts['benign']} artifact(s) eliminated")
        return "\n".join(out) + "\n"


def triage_report(manifest: AcquisitionManifest, index=None) -> TriageReport:
    """Summarize ``manifest`` by category.

    With ``index`` (a local index, repository or service client), its current
    verdicts override the categories recorded at acquisition time, so
    flags applied later show up; unknown index answers fall back to the
    manifest's own category.
    """
    current: Dict = {}
    if index is not None and manifest.entries:
        digests = manifest.distinct_digests()
        check = getattr(index, "check_batch", None) or index.check
        for d, res in zip(digests, check(digests)):
            if res.category != Category.UNKNOWN:
                current[d] = res.category
    counts = {c.value: 0 for c in Category}
    sizes = {c.value: 0 for c in Category}
    flagged = []
    for e in manifest.entries:
        cat = current.get(e.digest, e.category)
        counts[cat.value] += 1
        sizes[cat.value] += e.length
        if cat == Category.INCRIMINATING:
            flagged.append({"offset": e.offset, "length": e.length, "digest": str(e.digest)})
    return TriageReport(manifest.manifest_id, counts, sizes, flagged, manifest.is_risk)

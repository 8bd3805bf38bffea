"""Persistent digest index: presence, category and reference counts.

Directory layout::

    <root>/snapshot.json   compacted state (records, hash sets, last seq)
    <root>/records.log     JSON lines, one per applied batch, each with a seq
    <root>/audit.log       append-only category-change audit trail

A batch is visible only after its log line has been written and synced, so
a crash mid-write leaves a torn trailing line that is discarded on reopen.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

from .digest import ArtifactDigest, Category
from .errors import MixedBatchError, NotFoundError
from .hashset import HashSet, format_hashset, parse_hashset

log = logging.getLogger(__name__)

DEFAULT_COMPACT_EVERY = 4096


@dataclass(frozen=True)
class IndexRecord:
    digest: ArtifactDigest
    category: Category = Category.UNKNOWN
    first_seen_manifest: Optional[str] = None
    refcount: int = 0


class CheckResult(NamedTuple):
    present: bool
    category: Category
    stored: bool


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


def check_uniform(digests: Sequence[ArtifactDigest]) -> None:
    if len({(d.algo, d.prefix_len) for d in digests}) > 1:
        raise MixedBatchError("all digests in a batch must share one algorithm and mode")


def merge_category(old: Category, incoming: Category) -> Category:
    """Category after importing ``incoming`` over ``old``; incriminating wins."""
    if old == Category.UNKNOWN:
        return incoming
    if old != incoming:
        return Category.INCRIMINATING
    return old


class DedupIndex:
    def __init__(self, root, *, sync: bool = True, compact_every: int = DEFAULT_COMPACT_EVERY):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.sync = sync
        self.compact_every = compact_every
        self._lock = threading.RLock()
        self._records: Dict[ArtifactDigest, IndexRecord] = {}
        self._sets: Dict[str, HashSet] = {}
        self._seq = 0
        self._log_lines = 0
        self._load()
        self._log = open(self.root / "records.log", "ab")
        self._audit = open(self.root / "audit.log", "ab")

    # -- persistence -----------------------------------------------------

    def _load(self):
        snap = self.root / "snapshot.json"
        if snap.exists():
            doc = json.loads(snap.read_text("utf-8"))
            self._seq = doc["seq"]
            for d, cat, first, ref in doc["records"]:
                digest = ArtifactDigest.parse(d)
                self._records[digest] = IndexRecord(digest, Category(cat), first, ref)
            for s in doc["hashsets"]:
                self._sets[s["name"]] = HashSet(s["name"], Category(s["category"]), s["algo"],
                                                frozenset(s["digests"]))
        path = self.root / "records.log"
        if not path.exists():
            return
        raw = path.read_bytes()
        good = 0
        for line in raw.splitlines(keepends=True):
            if not line.endswith(b"\n"):
                break
            try:
                op = json.loads(line)
            except json.JSONDecodeError:
                break
            good += len(line)
            self._log_lines += 1
            if op["seq"] > self._seq:
                self._apply(op)
                self._seq = op["seq"]
        if good != len(raw):
            log.warning("discarding torn tail of %s (%d bytes)", path, len(raw) - good)
            with open(path, "r+b") as f:
                f.truncate(good)

    def _commit(self, op: dict):
        """Write ``op`` durably, then apply it in memory."""
        op["seq"] = self._seq + 1
        line = (json.dumps(op, separators=(",", ":")) + "\n").encode("utf-8")
        self._log.write(line)
        self._log.flush()
        if self.sync:
            os.fsync(self._log.fileno())
        self._seq += 1
        self._log_lines += 1
        result = self._apply(op)
        if self._log_lines >= self.compact_every:
            self.compact()
        return result

    def _write_audit(self, lines: List[str]):
        if not lines:
            return
        self._audit.write(("".join(line + "\n" for line in lines)).encode("utf-8"))
        self._audit.flush()
        if self.sync:
            os.fsync(self._audit.fileno())

    def compact(self):
        with self._lock:
            doc = {
                "seq": self._seq,
                "records": [[str(r.digest), r.category.value, r.first_seen_manifest, r.refcount]
                            for r in self._records.values()],
                "hashsets": [{"name": s.name, "category": s.category.value, "algo": s.algo,
                              "digests": sorted(s.digests)} for s in self._sets.values()],
            }
            tmp = self.root / "snapshot.json.tmp"
            with open(tmp, "w", encoding="utf-8") as f:
                json.dump(doc, f, separators=(",", ":"))
                f.flush()
                os.fsync(f.fileno())
            os.replace(tmp, self.root / "snapshot.json")
            # lines with seq <= snapshot seq are skipped on replay, so a crash here is harmless
            self._log.truncate(0)
            self._log.seek(0)
            self._log_lines = 0

    def close(self):
        with self._lock:
            if not self._log.closed:
                self._log.close()
                self._audit.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- state transitions (shared by live calls and log replay) ---------

    def _apply(self, op: dict):
        kind = op["op"]
        if kind == "record":
            created = 0
            for d, mid in op["items"]:
                digest = ArtifactDigest.parse(d)
                rec = self._records.get(digest)
                if rec is None:
                    created += 1
                    rec = IndexRecord(digest, first_seen_manifest=mid, refcount=1)
                else:
                    rec = replace(rec, refcount=rec.refcount + 1,
                                  first_seen_manifest=rec.first_seen_manifest or mid)
                self._records[digest] = rec
            return created
        if kind == "flag":
            digest = ArtifactDigest.parse(op["digest"])
            new = Category(op["category"])
            rec = self._records.get(digest) or IndexRecord(digest)
            old = rec.category
            rec = self._records[digest] = replace(rec, category=new)
            if not digest.is_partial:
                for name, s in list(self._sets.items()):
                    if s.algo == digest.algo and s.category != new and digest.hex in s.digests:
                        self._sets[name] = replace(s, digests=s.digests - {digest.hex})
                name = op["hashset"] or new.value
                s = self._sets.get(name) or HashSet(name, new, digest.algo)
                self._sets[name] = replace(s, digests=s.digests | {digest.hex})
            return rec, [(digest, old, new)]
        if kind == "import":
            name, cat, algo = op["name"], Category(op["category"]), op["algo"]
            s = self._sets.get(name) or HashSet(name, cat, algo)
            self._sets[name] = replace(s, digests=s.digests | frozenset(op["digests"]))
            changes, conflicts = [], []
            for h in op["digests"]:
                digest = ArtifactDigest(algo, h)
                rec = self._records.get(digest) or IndexRecord(digest)
                new = merge_category(rec.category, cat)
                if rec.category not in (Category.UNKNOWN, cat):
                    conflicts.append(digest)
                if new != rec.category or digest not in self._records:
                    self._records[digest] = replace(rec, category=new)
                if new != rec.category:
                    changes.append((digest, rec.category, new))
            return self._sets[name], changes, conflicts
        raise ValueError(f"unknown index op {kind!r}")

    # -- public API ------------------------------------------------------

    def check_batch(self, digests: Sequence[ArtifactDigest]) -> List[CheckResult]:
        check_uniform(digests)
        with self._lock:
            out = []
            for d in digests:
                rec = self._records.get(d)
                if rec is None:
                    out.append(CheckResult(False, Category.UNKNOWN, False))
                else:
                    out.append(CheckResult(True, rec.category, rec.refcount > 0))
            return out

    def get(self, digest: ArtifactDigest) -> Optional[IndexRecord]:
        with self._lock:
            return self._records.get(digest)

    def __len__(self):
        return len(self._records)

    def records(self) -> List[IndexRecord]:
        with self._lock:
            return list(self._records.values())

    def record_batch(self, items: Iterable[Tuple[ArtifactDigest, str]]) -> int:
        """Add one reference per ``(digest, manifest_id)``; return how many digests were new."""
        items = [(str(d), mid) for d, mid in items]
        if not items:
            return 0
        with self._lock:
            return self._commit({"op": "record", "items": items})

    def flag(self, digest: ArtifactDigest, category, note: str = "",
             hashset: Optional[str] = None) -> IndexRecord:
        """Set ``digest``'s category and log the change to the audit trail.

        Full-mode digests are also added to the hash set ``hashset``
        (default: the set named after the category) and dropped from sets of
        the opposite category, so exported sets track the latest verdict.
        """
        category = Category(category)
        if category == Category.UNKNOWN:
            raise ValueError("cannot flag a digest back to unknown")
        with self._lock:
            target = self._sets.get(hashset or category.value)
            if not digest.is_partial and target is not None and (
                    target.algo != digest.algo or target.category != category):
                raise ValueError(f"hash set {target.name!r} holds {target.algo} "
                                 f"{target.category.value} digests")
            ts = _now()
            rec, changes = self._commit({"op": "flag", "digest": str(digest),
                                         "category": category.value, "note": note,
                                         "hashset": hashset, "ts": ts})
            self._write_audit([self._audit_line(ts, d, o, n, note) for d, o, n in changes])
            return rec

    def import_hashset(self, source: Union[HashSet, bytes, str, os.PathLike]) -> HashSet:
        """Merge a hash set into the index. Re-importing the same set is a no-op.

        ``source`` is a :class:`HashSet`, the raw file contents as bytes, or
        a path to a hash-set file.
        """
        if isinstance(source, HashSet):
            hs = source
        elif isinstance(source, bytes):
            hs = parse_hashset(source)
        else:
            hs = parse_hashset(Path(source).read_bytes())
        with self._lock:
            existing = self._sets.get(hs.name)
            if existing is not None and (existing.algo != hs.algo or existing.category != hs.category):
                raise ValueError(f"hash set {hs.name!r} already exists as "
                                 f"{existing.algo}/{existing.category.value}")
            if existing is not None and hs.digests <= existing.digests and all(
                    self._unchanged_by_import(ArtifactDigest(hs.algo, h), hs.category)
                    for h in hs.digests):
                return existing
            ts = _now()
            merged, changes, conflicts = self._commit({
                "op": "import", "name": hs.name, "category": hs.category.value,
                "algo": hs.algo, "digests": sorted(hs.digests), "ts": ts})
            for d in conflicts:
                log.warning("%s is in both benign and incriminating sets; treating as incriminating", d)
            note = f"hashset import {hs.name}"
            self._write_audit([self._audit_line(ts, d, o, n, note) for d, o, n in changes])
            return merged

    def _unchanged_by_import(self, digest, category) -> bool:
        rec = self._records.get(digest)
        return rec is not None and merge_category(rec.category, category) == rec.category

    def hashset(self, name: str) -> HashSet:
        with self._lock:
            try:
                return self._sets[name]
            except KeyError:
                raise NotFoundError(f"no hash set named {name!r}") from None

    def hashset_names(self) -> List[str]:
        with self._lock:
            return sorted(self._sets)

    def export_hashset(self, name: str, path=None) -> bytes:
        data = format_hashset(self.hashset(name))
        if path is not None:
            Path(path).write_bytes(data)
        return data

    @staticmethod
    def _audit_line(ts, digest, old, new, note) -> str:
        return "\t".join([ts, str(digest), old.value, new.value, json.dumps(note, ensure_ascii=False)])

    def audit_lines(self) -> List[str]:
        with self._lock:
            self._audit.flush()
            text = (self.root / "audit.log").read_text("utf-8")
        return text.splitlines()

"""Acquisition manifests and the ``.dam.json`` on-disk format.

The format is UTF-8 JSON with keys in this fixed order::

    format_version, manifest_id, case_id, snapshot_of, source_kind, mode,
    hash_algo, block_size, total_size, source_full_digest, device_meta,
    paths, empty_files, entries

Each entry is the array ``[offset, length, "algo:mode:hex", category,
transferred]`` on its own line. ``paths`` is ``null`` for raw images; for
directory trees it lists the relative path of each entry, in entry order.
``empty_files`` lists zero-length files of a directory tree (they have no
artifact). Serialization is byte-deterministic for a given manifest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, NamedTuple, Optional, Tuple

from .digest import ArtifactDigest, Category, HEX_LENGTHS
from .errors import DigestFormatError, ManifestError

FORMAT_VERSION = 1
MANIFEST_SUFFIX = ".dam.json"
RAW_IMAGE = "raw_image"
DIRECTORY_TREE = "directory_tree"

_KEYS = (
    "format_version", "manifest_id", "case_id", "snapshot_of", "source_kind",
    "mode", "hash_algo", "block_size", "total_size", "source_full_digest",
    "device_meta", "paths", "empty_files", "entries",
)


class ArtifactEntry(NamedTuple):
    offset: int
    length: int
    digest: ArtifactDigest
    category: Category = Category.UNKNOWN
    transferred: bool = False

    @property
    def end(self) -> int:
        return self.offset + self.length


def check_tiling(entries: Iterable[ArtifactEntry], total_size: int) -> None:
    """Raise :class:`ManifestError` unless ``entries`` tile ``[0, total_size)``."""
    expected = 0
    for i, e in enumerate(entries):
        if type(e.offset) is not int or type(e.length) is not int:
            raise ManifestError("field", f"entry {i}: offset/length must be integers")
        if e.length <= 0:
            raise ManifestError("field", f"entry {i}: length must be > 0, got {e.length}")
        if e.offset > expected:
            raise ManifestError("gap", f"entry {i} starts at {e.offset}, expected {expected}")
        if e.offset < expected:
            raise ManifestError("overlap", f"entry {i} starts at {e.offset}, before end of previous entry {expected}")
        expected = e.end
    if expected < total_size:
        raise ManifestError("gap", f"entries end at {expected}, total_size is {total_size}")
    if expected > total_size:
        raise ManifestError("overlap", f"entries end at {expected}, beyond total_size {total_size}")


@dataclass(frozen=True)
class AcquisitionManifest:
    manifest_id: str
    case_id: str
    total_size: int
    source_full_digest: ArtifactDigest
    entries: Tuple[ArtifactEntry, ...] = ()
    block_size: int = 4096
    hash_algo: str = "sha256"
    mode: str = "full"
    device_meta: Dict[str, str] = field(default_factory=dict)
    snapshot_of: Optional[str] = None
    source_kind: str = RAW_IMAGE
    paths: Optional[Tuple[str, ...]] = None
    empty_files: Tuple[str, ...] = ()
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        for name in ("entries", "paths", "empty_files"):
            value = getattr(self, name)
            if value is None and name == "paths":
                continue
            if not isinstance(value, (list, tuple)):
                raise ManifestError("field", f"{name} must be a list")
            object.__setattr__(self, name, tuple(value))
        self._validate()

    def _validate(self):
        if type(self.format_version) is not int or not 1 <= self.format_version <= FORMAT_VERSION:
            raise ManifestError("version", f"unsupported format_version {self.format_version!r}")
        for name in ("manifest_id", "case_id"):
            if not isinstance(getattr(self, name), str):
                raise ManifestError("field", f"{name} must be text")
        if self.snapshot_of is not None and not isinstance(self.snapshot_of, str):
            raise ManifestError("field", "snapshot_of must be text or null")
        if self.hash_algo not in HEX_LENGTHS:
            raise ManifestError("digest", f"unknown hash_algo {self.hash_algo!r}")
        if self.mode not in ("full", "risk"):
            raise ManifestError("mode", f"mode must be 'full' or 'risk', got {self.mode!r}")
        for name in ("block_size", "total_size"):
            v = getattr(self, name)
            if type(v) is not int or v < 0:
                raise ManifestError("field", f"{name} must be a non-negative integer")
        if not isinstance(self.device_meta, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in self.device_meta.items()
        ):
            raise ManifestError("field", "device_meta must map text to text")
        sfd = self.source_full_digest
        if not isinstance(sfd, ArtifactDigest) or sfd.is_partial or sfd.algo != self.hash_algo:
            raise ManifestError("digest", "source_full_digest must be a full-mode digest in hash_algo")
        for i, e in enumerate(self.entries):
            if not isinstance(e.digest, ArtifactDigest) or e.digest.algo != self.hash_algo:
                raise ManifestError("digest", f"entry {i}: digest algorithm differs from hash_algo")
            if e.digest.is_partial and self.mode != "risk":
                raise ManifestError("mode", f"entry {i}: partial digest in a full-mode manifest")
            if not isinstance(e.category, Category):
                raise ManifestError("field", f"entry {i}: bad category {e.category!r}")
            if type(e.transferred) is not bool:
                raise ManifestError("field", f"entry {i}: transferred must be boolean")
        check_tiling(self.entries, self.total_size)
        if self.source_kind == RAW_IMAGE:
            if self.paths is not None or self.empty_files:
                raise ManifestError("field", "raw_image manifests carry no paths")
        elif self.source_kind == DIRECTORY_TREE:
            if self.paths is None or len(self.paths) != len(self.entries):
                raise ManifestError("field", "directory_tree manifests need one path per entry")
            names = list(self.paths) + list(self.empty_files)
            if not all(isinstance(p, str) and p for p in names) or len(set(names)) != len(names):
                raise ManifestError("field", "paths must be distinct non-empty text")
        else:
            raise ManifestError("field", f"unknown source_kind {self.source_kind!r}")

    @property
    def is_risk(self) -> bool:
        return self.mode == "risk"

    def with_id(self, manifest_id: str, snapshot_of: Optional[str] = ...) -> "AcquisitionManifest":
        if snapshot_of is ...:
            snapshot_of = self.snapshot_of
        return replace(self, manifest_id=manifest_id, snapshot_of=snapshot_of)

    def distinct_digests(self) -> List[ArtifactDigest]:
        return list(dict.fromkeys(e.digest for e in self.entries))


def _dump(value) -> str:
    return json.dumps(value, ensure_ascii=False)


def serialize_manifest(m: AcquisitionManifest) -> bytes:
    values = {
        "format_version": str(m.format_version),
        "manifest_id": _dump(m.manifest_id),
        "case_id": _dump(m.case_id),
        "snapshot_of": _dump(m.snapshot_of),
        "source_kind": _dump(m.source_kind),
        "mode": _dump(m.mode),
        "hash_algo": _dump(m.hash_algo),
        "block_size": str(m.block_size),
        "total_size": str(m.total_size),
        "source_full_digest": _dump(str(m.source_full_digest)),
        "device_meta": json.dumps(m.device_meta, ensure_ascii=False, sort_keys=True),
    }
    lines = ["{"]
    for key in _KEYS[:11]:
        lines.append(f'  "{key}": {values[key]},')
    lines.append('  "paths": ' + _dump_list([_dump(p) for p in m.paths]
                                             if m.paths is not None else None) + ",")
    lines.append('  "empty_files": ' + _dump_list([_dump(p) for p in m.empty_files]) + ",")
    lines.append('  "entries": ' + _dump_list([
        f'[{e.offset}, {e.length}, "{e.digest}", "{e.category.value}", {"true" if e.transferred else "false"}]'
        for e in m.entries
    ]))
    lines.append("}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def _dump_list(items: Optional[List[str]]) -> str:
    if items is None:
        return "null"
    if not items:
        return "[]"
    return "[\n    " + ",\n    ".join(items) + "\n  ]"


def parse_manifest(data: bytes) -> AcquisitionManifest:
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ManifestError("syntax", str(exc)) from None
    if not isinstance(doc, dict):
        raise ManifestError("syntax", "manifest must be a JSON object")
    version = doc.get("format_version")
    if type(version) is not int:
        raise ManifestError("version", f"format_version missing or not an integer: {version!r}")
    if version > FORMAT_VERSION or version < 1:
        raise ManifestError("version", f"unsupported format_version {version}")
    missing = [k for k in _KEYS if k not in doc]
    extra = [k for k in doc if k not in _KEYS]
    if missing or extra:
        raise ManifestError("field", f"missing keys {missing}, unexpected keys {extra}")

    try:
        sfd = ArtifactDigest.parse(doc["source_full_digest"])
    except (DigestFormatError, AttributeError) as exc:
        raise ManifestError("digest", f"source_full_digest: {exc}") from None

    raw_entries = doc["entries"]
    if not isinstance(raw_entries, list):
        raise ManifestError("field", "entries must be a list")
    entries = []
    cache: Dict[str, ArtifactDigest] = {}
    for i, raw in enumerate(raw_entries):
        if not isinstance(raw, list) or len(raw) != 5:
            raise ManifestError("field", f"entry {i}: expected a 5-element array")
        offset, length, dtext, cat, transferred = raw
        if not isinstance(dtext, str):
            raise ManifestError("digest", f"entry {i}: digest must be a string")
        digest = cache.get(dtext)
        if digest is None:
            try:
                digest = cache[dtext] = ArtifactDigest.parse(dtext)
            except DigestFormatError as exc:
                raise ManifestError("digest", f"entry {i}: {exc}") from None
        try:
            category = Category(cat)
        except ValueError:
            raise ManifestError("field", f"entry {i}: unknown category {cat!r}") from None
        entries.append(ArtifactEntry(offset, length, digest, category, transferred))

    return AcquisitionManifest(
        format_version=version,
        manifest_id=doc["manifest_id"],
        case_id=doc["case_id"],
        snapshot_of=doc["snapshot_of"],
        source_kind=doc["source_kind"],
        mode=doc["mode"],
        hash_algo=doc["hash_algo"],
        block_size=doc["block_size"],
        total_size=doc["total_size"],
        source_full_digest=sfd,
        device_meta=doc["device_meta"],
        paths=doc["paths"],
        empty_files=doc["empty_files"],
        entries=entries,
    )


def read_manifest(path) -> AcquisitionManifest:
    with open(path, "rb") as f:
        return parse_manifest(f.read())


def write_manifest(m: AcquisitionManifest, path) -> None:
    with open(path, "wb") as f:
        f.write(serialize_manifest(m))

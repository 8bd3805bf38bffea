"""Deduplicated evidence acquisition, storage and bit-exact reconstruction."""

from .digest import ArtifactDigest, Category, canonical_digest
from .errors import (DedupAcqError, IntegrityError, ManifestError, MissingArtifactsError,
                     NotFoundError)
from .manifest import AcquisitionManifest, ArtifactEntry, parse_manifest, serialize_manifest

__version__ = "0.1.0"

__all__ = [
    "AcquisitionManifest", "ArtifactDigest", "ArtifactEntry", "Category", "DedupAcqError",
    "IntegrityError", "ManifestError", "MissingArtifactsError", "NotFoundError",
    "canonical_digest", "parse_manifest", "serialize_manifest",
]

"""Push an offline repository's acquisitions to a manifest service."""

from __future__ import annotations

from typing import Dict, Optional

from .repository import Repository


def push_repository(local: Repository, remote, *, id_map: Optional[Dict[str, str]] = None) -> Dict[str, str]:
    """Upload every local manifest (in acquisition order) with the artifacts the remote lacks.

    Returns the mapping from local to server manifest ids. ``snapshot_of``
    links are rewritten through that mapping. Manifests whose local id is
    already in ``id_map`` are skipped, so an interrupted push can resume.
    """
    id_map = dict(id_map or {})
    for local_id in local.list_manifests():
        if local_id in id_map:
            continue
        m = local.get_manifest(local_id)
        for d in remote.missing(e.digest for e in m.entries):
            remote.put(d, local.get(d))
        parent = id_map.get(m.snapshot_of) if m.snapshot_of else None
        id_map[local_id] = remote.submit_manifest(m.with_id("", snapshot_of=parent))
    return id_map

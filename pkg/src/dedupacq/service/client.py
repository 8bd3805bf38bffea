"""Client for the manifest service.

:class:`ServiceClient` exposes the same artifact/manifest surface as
:class:`~dedupacq.repository.Repository`, so acquisition and reconstruction
code works against either. It counts every byte it puts on and takes off
the wire (request/status lines, headers and bodies).
"""

from __future__ import annotations

import json
import threading
from typing import List, Optional, Sequence, Union

import httpx

from ..digest import ArtifactDigest, Category
from ..errors import (HashSetFormatError, IntegrityError, ManifestError, MissingArtifactsError,
                      MixedBatchError, NotFoundError, ProtocolError)
from ..index import CheckResult, IndexRecord
from ..manifest import AcquisitionManifest, parse_manifest, serialize_manifest
from ..store import PutResult, StoreStats


def _header_bytes(headers: httpx.Headers) -> int:
    return sum(len(k) + len(v) + 4 for k, v in headers.raw)


class ServiceClient:
    def __init__(self, base_url: Optional[str] = None, token: Optional[str] = None, *,
                 http: Optional[httpx.Client] = None, timeout: float = 120.0):
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        if http is None:
            http = httpx.Client(base_url=base_url, timeout=timeout)
        http.headers.update(headers)
        self.http = http
        self._lock = threading.Lock()
        self.bytes_sent = 0
        self.bytes_received = 0
        self._info = None

    def close(self):
        self.http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    @property
    def wire_bytes(self) -> int:
        return self.bytes_sent + self.bytes_received

    def reset_counters(self):
        with self._lock:
            self.bytes_sent = self.bytes_received = 0

    def _request(self, method: str, path: str, *, content: bytes = b"", params=None) -> httpx.Response:
        resp = self.http.request(method, path, content=content, params=params)
        req = resp.request
        sent = len(f"{method} {req.url.raw_path.decode()} HTTP/1.1\r\n") + _header_bytes(req.headers) + 2
        sent += len(content)
        received = len(f"HTTP/1.1 {resp.status_code} {resp.reason_phrase}\r\n") + _header_bytes(resp.headers) + 2
        received += len(resp.content)
        with self._lock:
            self.bytes_sent += sent
            self.bytes_received += received
        return resp

    @staticmethod
    def _fail(resp: httpx.Response):
        try:
            doc = resp.json()
        except ValueError:
            doc = {"error": "unknown", "detail": resp.text[:200]}
        code, detail = doc.get("error"), doc.get("detail", "")
        if resp.status_code == 404:
            raise NotFoundError(detail)
        if code == "missing_artifacts":
            raise MissingArtifactsError([ArtifactDigest.parse(d) for d in doc["missing"]])
        if code == "integrity":
            raise IntegrityError(doc.get("digest", "?"), detail)
        if code == "invalid_manifest":
            raise ManifestError(doc.get("reason", "syntax"), detail)
        if code == "malformed_hashset":
            raise HashSetFormatError(doc.get("line", 0), detail)
        if code == "mixed_batch":
            raise MixedBatchError(detail)
        raise ProtocolError(resp.status_code, f"{code}: {detail}")

    def _json(self, method, path, body=None, params=None, ok=(200,)):
        content = b"" if body is None else json.dumps(body, separators=(",", ":")).encode()
        resp = self._request(method, path, content=content, params=params)
        if resp.status_code not in ok:
            self._fail(resp)
        return resp.json()

    # -- service surface -------------------------------------------------

    def info(self) -> dict:
        if self._info is None:
            self._info = self._json("GET", "/v1/info")
        return self._info

    @property
    def max_batch(self) -> int:
        return self.info()["max_batch"]

    def check(self, digests: Sequence[ArtifactDigest]) -> List[CheckResult]:
        out = []
        step = self.max_batch
        for i in range(0, len(digests), step):
            doc = self._json("POST", "/v1/digests/check",
                             {"digests": [str(d) for d in digests[i:i + step]]})
            out.extend(CheckResult(r["present"], Category(r["category"]), r["stored"])
                       for r in doc["results"])
        return out

    def check_raw(self, digest_texts: list) -> httpx.Response:
        """Send a check request without client-side validation or batching."""
        return self._request("POST", "/v1/digests/check",
                             content=json.dumps({"digests": digest_texts}).encode())

    def missing(self, digests) -> List[ArtifactDigest]:
        distinct = list(dict.fromkeys(digests))
        by_mode = {}
        for d in distinct:
            by_mode.setdefault((d.algo, d.prefix_len), []).append(d)
        absent = set()
        for group in by_mode.values():
            absent.update(d for d, r in zip(group, self.check(group)) if not r.stored)
        return [d for d in distinct if d in absent]

    def put(self, digest: ArtifactDigest, payload: bytes) -> PutResult:
        resp = self._request("PUT", f"/v1/artifacts/{digest}", content=payload)
        if resp.status_code not in (200, 201):
            self._fail(resp)
        return PutResult(resp.json()["result"])

    def get(self, digest: ArtifactDigest) -> bytes:
        resp = self._request("GET", f"/v1/artifacts/{digest}")
        if resp.status_code != 200:
            self._fail(resp)
        return resp.content

    def submit_manifest(self, manifest: Union[AcquisitionManifest, bytes]) -> str:
        data = manifest if isinstance(manifest, bytes) else serialize_manifest(manifest)
        resp = self._request("POST", "/v1/manifests", content=data)
        if resp.status_code != 201:
            self._fail(resp)
        return resp.json()["manifest_id"]

    def manifest_bytes(self, manifest_id: str) -> bytes:
        resp = self._request("GET", f"/v1/manifests/{manifest_id}")
        if resp.status_code != 200:
            self._fail(resp)
        return resp.content

    def get_manifest(self, manifest_id: str) -> AcquisitionManifest:
        return parse_manifest(self.manifest_bytes(manifest_id))

    def list_manifests(self, case: Optional[str] = None) -> List[str]:
        params = {"case": case} if case is not None else None
        return self._json("GET", "/v1/manifests", params=params)["manifest_ids"]

    def flag(self, digest: ArtifactDigest, category, note: str = "",
             hashset: Optional[str] = None) -> IndexRecord:
        doc = self._json("POST", "/v1/flags", {"digest": str(digest), "category": Category(category).value,
                                               "note": note, "hashset": hashset})
        return IndexRecord(ArtifactDigest.parse(doc["digest"]), Category(doc["category"]),
                           doc["first_seen_manifest"], doc["refcount"])

    def export_hashset(self, name: str) -> bytes:
        resp = self._request("GET", f"/v1/hashsets/{name}")
        if resp.status_code != 200:
            self._fail(resp)
        return resp.content

    def import_hashset(self, data: bytes) -> dict:
        resp = self._request("POST", "/v1/hashsets", content=data)
        if resp.status_code != 201:
            self._fail(resp)
        return resp.json()

    def hashset_names(self) -> List[str]:
        return self._json("GET", "/v1/hashsets")["hashsets"]

    def stats(self) -> StoreStats:
        doc = self._json("GET", "/v1/stats")
        return StoreStats(doc["artifact_count"], doc["stored_bytes"], doc["logical_bytes"])

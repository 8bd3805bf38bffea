"""HTTP/1.1 front end for a :class:`~dedupacq.repository.Repository`.

Metadata travels as JSON; artifact payloads and manifests as raw bytes.
Error bodies are JSON objects with an ``error`` code.
"""

from __future__ import annotations

import json
import logging
from contextlib import asynccontextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response
from fastapi.concurrency import run_in_threadpool

from ..digest import ArtifactDigest, Category
from ..errors import (ConfigurationError, DigestFormatError, HashSetFormatError, IntegrityError,
                      ManifestError, MissingArtifactsError, MixedBatchError, NotFoundError)
from ..manifest import FORMAT_VERSION
from ..repository import Repository
from ..segmenter import MIN_BLOCK_SIZE

log = logging.getLogger(__name__)

DEFAULT_PORT = 8750
DEFAULT_MAX_BATCH = 1024
DEFAULT_MAX_ARTIFACT_BYTES = 16 * 2**20


@dataclass
class ServiceConfig:
    data_root: Path
    host: str = "127.0.0.1"
    port: int = DEFAULT_PORT
    store_root: Optional[Path] = None
    index_root: Optional[Path] = None
    tokens: Tuple[str, ...] = ()
    max_batch: int = DEFAULT_MAX_BATCH
    max_artifact_bytes: int = DEFAULT_MAX_ARTIFACT_BYTES

    def __post_init__(self):
        self.data_root = Path(self.data_root)
        self.tokens = tuple(self.tokens)
        if self.max_batch < 1:
            raise ConfigurationError("max_batch must be >= 1")
        if self.max_artifact_bytes < MIN_BLOCK_SIZE:
            raise ConfigurationError(f"max_artifact_bytes must be at least {MIN_BLOCK_SIZE}")

    @classmethod
    def from_file(cls, path, **overrides) -> "ServiceConfig":
        doc = json.loads(Path(path).read_text("utf-8"))
        doc.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**doc)


def _error(status: int, code: str, detail: str = "", **extra) -> JSONResponse:
    return JSONResponse({"error": code, "detail": detail, **extra}, status_code=status)


def create_app(config: ServiceConfig, repo: Optional[Repository] = None) -> FastAPI:
    repo = repo or Repository(config.data_root, store_root=config.store_root,
                              index_root=config.index_root)

    @asynccontextmanager
    async def lifespan(app):
        yield
        repo.close()

    app = FastAPI(title="dedupacq manifest service", lifespan=lifespan)
    app.state.repo = repo
    app.state.config = config

    @app.middleware("http")
    async def _auth(request: Request, call_next):
        if config.tokens:
            header = request.headers.get("authorization", "")
            if not header.startswith("Bearer ") or header[7:] not in config.tokens:
                return _error(401, "unauthorized", "missing or unknown bearer token")
        return await call_next(request)

    @app.get("/v1/info")
    def info():
        return {"service": "dedupacq", "format_version": FORMAT_VERSION,
                "max_batch": config.max_batch, "max_artifact_bytes": config.max_artifact_bytes}

    @app.post("/v1/digests/check")
    async def check(request: Request):
        try:
            doc = json.loads(await request.body())
            raw = doc["digests"]
            if not isinstance(raw, list):
                raise TypeError
        except (ValueError, KeyError, TypeError):
            return _error(422, "bad_request", 'body must be {"digests": [...]}')
        if len(raw) > config.max_batch:
            return _error(413, "batch_too_large", f"at most {config.max_batch} digests per request",
                          max_batch=config.max_batch)
        digests = []
        for i, text in enumerate(raw):
            try:
                digests.append(ArtifactDigest.parse(text))
            except (DigestFormatError, AttributeError) as exc:
                return _error(422, "malformed_digest", str(exc), index=i)
        try:
            results = await run_in_threadpool(repo.check, digests)
        except MixedBatchError as exc:
            return _error(422, "mixed_batch", str(exc))
        return {"results": [{"present": r.present, "category": r.category.value, "stored": r.stored}
                            for r in results]}

    @app.put("/v1/artifacts/{digest}")
    async def put_artifact(digest: str, request: Request):
        try:
            d = ArtifactDigest.parse(digest)
        except DigestFormatError as exc:
            return _error(422, "malformed_digest", str(exc))
        payload = await request.body()
        if len(payload) > config.max_artifact_bytes:
            return _error(413, "artifact_too_large", f"limit is {config.max_artifact_bytes} bytes")
        try:
            result = await run_in_threadpool(repo.put, d, payload)
        except IntegrityError as exc:
            return _error(422, "integrity", str(exc))
        return JSONResponse({"result": result.value}, status_code=201 if result.value == "created" else 200)

    @app.get("/v1/artifacts/{digest}")
    async def get_artifact(digest: str):
        try:
            d = ArtifactDigest.parse(digest)
        except DigestFormatError as exc:
            return _error(422, "malformed_digest", str(exc))
        try:
            data = await run_in_threadpool(repo.get, d)
        except NotFoundError as exc:
            return _error(404, "not_found", str(exc))
        except IntegrityError as exc:
            log.error("corrupt artifact in store: %s", exc)
            return _error(500, "integrity", str(exc), digest=str(exc.digest))
        return Response(data, media_type="application/octet-stream")

    @app.post("/v1/manifests")
    async def post_manifest(request: Request):
        body = await request.body()
        try:
            mid = await run_in_threadpool(repo.submit_manifest, body)
        except ManifestError as exc:
            return _error(422, "invalid_manifest", str(exc), reason=exc.reason)
        except MissingArtifactsError as exc:
            return _error(409, "missing_artifacts", str(exc), missing=[str(d) for d in exc.digests])
        return JSONResponse({"manifest_id": mid}, status_code=201)

    @app.get("/v1/manifests")
    def list_manifests(case: Optional[str] = None):
        return {"manifest_ids": repo.list_manifests(case)}

    @app.get("/v1/manifests/{manifest_id}")
    def get_manifest(manifest_id: str):
        try:
            data = repo.manifest_bytes(manifest_id)
        except NotFoundError as exc:
            return _error(404, "not_found", str(exc))
        return Response(data, media_type="application/json")

    @app.post("/v1/flags")
    async def flag(request: Request):
        try:
            doc = json.loads(await request.body())
            digest = ArtifactDigest.parse(doc["digest"])
            category = Category(doc["category"])
            note = str(doc.get("note", ""))
            hashset = doc.get("hashset")
        except (ValueError, KeyError, TypeError, AttributeError) as exc:
            return _error(422, "bad_request", str(exc))
        try:
            rec = await run_in_threadpool(repo.flag, digest, category, note, hashset)
        except ValueError as exc:
            return _error(422, "bad_request", str(exc))
        return {"digest": str(rec.digest), "category": rec.category.value,
                "first_seen_manifest": rec.first_seen_manifest, "refcount": rec.refcount}

    @app.get("/v1/hashsets")
    def list_hashsets():
        return {"hashsets": repo.index.hashset_names()}

    @app.get("/v1/hashsets/{name}")
    def get_hashset(name: str):
        try:
            data = repo.export_hashset(name)
        except NotFoundError as exc:
            return _error(404, "not_found", str(exc))
        return Response(data, media_type="text/plain; charset=utf-8")

    @app.post("/v1/hashsets")
    async def post_hashset(request: Request):
        body = await request.body()
        try:
            hs = await run_in_threadpool(repo.import_hashset, body)
        except HashSetFormatError as exc:
            return _error(422, "malformed_hashset", str(exc), line=exc.line)
        except ValueError as exc:
            return _error(409, "hashset_conflict", str(exc))
        return JSONResponse({"name": hs.name, "size": len(hs.digests)}, status_code=201)

    @app.get("/v1/stats")
    async def stats():
        s = await run_in_threadpool(repo.stats)
        return s.as_dict()

    return app


def serve(config: ServiceConfig) -> None:
    import uvicorn

    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="info")

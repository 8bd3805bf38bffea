import os
import random
import threading
import time

import pytest

from conftest import inprocess_client, live_server
from dedupacq.digest import Category, canonical_digest
from dedupacq.errors import IntegrityError, ManifestError, MissingArtifactsError, NotFoundError, ProtocolError
from dedupacq.hashset import parse_hashset
from dedupacq.index import DedupIndex
from dedupacq.manifest import AcquisitionManifest, ArtifactEntry, serialize_manifest
from dedupacq.service.client import ServiceClient
from dedupacq.store import PutResult


def blocks(n, size=1024, seed=0):
    rng = random.Random(seed)
    return [rng.randbytes(size) for _ in range(n)]


def manifest_for(payloads, case="c1", transferred=True):
    entries, off = [], 0
    for p in payloads:
        entries.append(ArtifactEntry(off, len(p), canonical_digest(p), transferred=transferred))
        off += len(p)
    return AcquisitionManifest("client-chosen", case, off, canonical_digest(b"".join(payloads)), entries,
                               block_size=1024)


def test_info(service):
    info = service.info()
    assert info["max_batch"] == 1024 and info["max_artifact_bytes"] == 16 * 2**20


def test_check_empty(service):
    assert service.check([]) == []


def test_oversize_batch_413(tmp_path):
    with inprocess_client(tmp_path / "s", max_batch=4) as client:
        resp = client.check_raw([str(canonical_digest(bytes([i]))) for i in range(5)])
        assert resp.status_code == 413
        assert resp.json()["max_batch"] == 4
        # the client splits large batches itself
        assert len(client.check([canonical_digest(bytes([i])) for i in range(9)])) == 9


def test_malformed_digest_422_with_index(service):
    good = str(canonical_digest(b"a"))
    resp = service.check_raw([good, good, "sha256:full:xyz"])
    assert resp.status_code == 422
    assert resp.json() == {"error": "malformed_digest", "detail": resp.json()["detail"], "index": 2}


def test_put_get_roundtrip(service):
    b = os.urandom(3000)
    d = canonical_digest(b)
    assert service.put(d, b) == PutResult.CREATED
    assert service.put(d, b) == PutResult.ALREADY_PRESENT
    assert service.get(d) == b


def test_put_mismatch_then_not_found(service):
    d = canonical_digest(b"real")
    with pytest.raises(IntegrityError):
        service.put(d, b"fake")
    with pytest.raises(NotFoundError):
        service.get(d)


def test_artifact_size_limit(tmp_path):
    with inprocess_client(tmp_path / "s", max_artifact_bytes=1024) as client:
        b = os.urandom(2048)
        with pytest.raises(ProtocolError) as exc:
            client.put(canonical_digest(b), b)
        assert exc.value.status == 413


def test_cross_client_presence(tmp_path):
    with live_server(tmp_path / "s") as url:
        with ServiceClient(url) as a, ServiceClient(url) as b:
            p = os.urandom(512)
            a.put(canonical_digest(p), p)
            assert b.check([canonical_digest(p)])[0].present


def test_concurrent_put_two_clients(tmp_path):
    with live_server(tmp_path / "s") as url:
        p = os.urandom(1 << 16)
        d = canonical_digest(p)
        barrier = threading.Barrier(2)
        results = []

        def go():
            with ServiceClient(url) as c:
                barrier.wait()
                results.append(c.put(d, p))

        threads = [threading.Thread(target=go) for _ in range(2)]
        [t.start() for t in threads]
        [t.join() for t in threads]
        assert sorted(results) == [PutResult.ALREADY_PRESENT, PutResult.CREATED]
        with ServiceClient(url) as c:
            assert c.stats().artifact_count == 1


def test_manifest_lifecycle(service):
    payloads = blocks(4)
    for p in payloads:
        service.put(canonical_digest(p), p)
    m = manifest_for(payloads)
    mid = service.submit_manifest(m)
    assert mid != "client-chosen"
    data = service.manifest_bytes(mid)
    assert data == serialize_manifest(m.with_id(mid))
    assert service.manifest_bytes(mid) == data
    mid2 = service.submit_manifest(manifest_for(payloads[:2], case="c2"))
    mid3 = service.submit_manifest(manifest_for(payloads[2:], case="c1"))
    assert service.list_manifests() == [mid, mid2, mid3]
    assert service.list_manifests("c1") == [mid, mid3]
    with pytest.raises(NotFoundError):
        service.manifest_bytes("M99999999")


def test_manifest_missing_artifact_409(service):
    payloads = blocks(3)
    for p in payloads[:2]:
        service.put(canonical_digest(p), p)
    with pytest.raises(MissingArtifactsError) as exc:
        service.submit_manifest(manifest_for(payloads, transferred=False))
    assert exc.value.digests == [canonical_digest(payloads[2])]
    assert service.list_manifests() == []


def test_invalid_manifest_422(service):
    data = serialize_manifest(manifest_for(blocks(2))).replace(b"[1024, 1024", b"[1000, 1024")
    with pytest.raises(ManifestError) as exc:
        service.submit_manifest(data)
    assert exc.value.reason == "overlap"


def test_reacquisition_records_nothing_new(tmp_path):
    with inprocess_client(tmp_path / "s") as client:
        payloads = blocks(5)
        for p in payloads:
            client.put(canonical_digest(p), p)
        client.submit_manifest(manifest_for(payloads))
        repo = client.http.app.state.repo
        n = len(repo.index)
        client.submit_manifest(manifest_for(payloads, transferred=False))
        assert len(repo.index) == n
        assert repo.index.get(canonical_digest(payloads[0])).refcount == 2


def test_flag_then_download(service):
    d = canonical_digest(b"contraband")
    rec = service.flag(d, "incriminating", note="case 3")
    assert rec.category == Category.INCRIMINATING
    hs = parse_hashset(service.export_hashset("incriminating"))
    assert d.hex in hs.digests
    with pytest.raises(NotFoundError):
        service.export_hashset("no-such-set")


def test_empty_named_set_download(service):
    service.import_hashset(b"dedupacq-hashset v1 sha256 benign empty set\n")
    assert service.export_hashset("empty set") == b"dedupacq-hashset v1 sha256 benign empty set\n"


def test_flags_propagate_to_client_index(service, tmp_path):
    digests = [canonical_digest(os.urandom(32)) for _ in range(100)]
    for d in digests:
        service.flag(d, "incriminating")
    others = [canonical_digest(os.urandom(32)) for _ in range(20)]
    with DedupIndex(tmp_path / "client-idx") as local:
        local.import_hashset(service.export_hashset("incriminating"))
        query = digests + others
        client_view = [r.category for r in local.check_batch(query)]
    server_view = [r.category for r in service.check(query)]
    assert client_view == server_view
    assert client_view.count(Category.INCRIMINATING) == 100


def test_bearer_token(tmp_path):
    with inprocess_client(tmp_path / "s", tokens=("secret",)) as client:
        with pytest.raises(ProtocolError) as exc:
            client.info()
        assert exc.value.status == 401
    with inprocess_client(tmp_path / "s2", token="secret", tokens=("secret",)) as client:
        assert client.info()["service"] == "dedupacq"


def test_interleaved_clients_match_serial_replay(tmp_path):
    """Grow-only presence: each check answer must be explainable by upload timing."""
    pool = blocks(40, 256, seed=9)
    digests = [canonical_digest(p) for p in pool]
    events = []
    lock = threading.Lock()

    def client_run(seed, url):
        rng = random.Random(seed)
        with ServiceClient(url) as c:
            for _ in range(60):
                if rng.random() < 0.4:
                    i = rng.randrange(len(pool))
                    start = time.monotonic()
                    c.put(digests[i], pool[i])
                    with lock:
                        events.append(("put", i, start, time.monotonic()))
                else:
                    idx = rng.sample(range(len(pool)), 5)
                    start = time.monotonic()
                    res = c.check([digests[i] for i in idx])
                    with lock:
                        events.append(("check", [(i, r.present) for i, r in zip(idx, res)],
                                       start, time.monotonic()))

    with live_server(tmp_path / "s") as url:
        threads = [threading.Thread(target=client_run, args=(s, url)) for s in range(4)]
        [t.start() for t in threads]
        [t.join() for t in threads]
        with ServiceClient(url) as c:
            final = [r.present for r in c.check(digests)]

    puts = [(i, s, e) for kind, i, s, e in (ev for ev in events if ev[0] == "put")]
    for kind, answers, start, end in (ev for ev in events if ev[0] == "check"):
        for i, present in answers:
            if present:
                assert any(pi == i and ps <= end for pi, ps, _ in puts)
            else:
                assert not any(pi == i and pe <= start for pi, _, pe in puts)
    uploaded = {i for i, _, _ in puts}
    assert final == [i in uploaded for i in range(len(pool))]

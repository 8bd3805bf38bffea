import contextlib
import threading
import time

import pytest
import uvicorn
from fastapi.testclient import TestClient

from dedupacq.repository import Repository
from dedupacq.service.client import ServiceClient
from dedupacq.service.server import ServiceConfig, create_app


@contextlib.contextmanager
def live_server(data_root, **config):
    """Run the service on an ephemeral port in a background thread; yield its URL."""
    app = create_app(ServiceConfig(data_root, **config))
    server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=0, log_level="warning",
                                           lifespan="on"))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + 10
    while not server.started:
        if time.monotonic() > deadline or not thread.is_alive():
            raise RuntimeError("service did not start")
        time.sleep(0.01)
    port = server.servers[0].sockets[0].getsockname()[1]
    try:
        yield f"http://127.0.0.1:{port}"
    finally:
        server.should_exit = True
        thread.join(10)


@contextlib.contextmanager
def inprocess_client(data_root, token=None, **config):
    """ServiceClient talking to the ASGI app through Starlette's TestClient."""
    app = create_app(ServiceConfig(data_root, **config))
    with TestClient(app, base_url="http://testserver") as http:
        yield ServiceClient(token=token, http=http)


@pytest.fixture
def repo(tmp_path):
    with Repository(tmp_path / "repo", sync=False) as r:
        yield r


@pytest.fixture
def service(tmp_path):
    with inprocess_client(tmp_path / "server") as client:
        yield client


@pytest.fixture
def server_url(tmp_path):
    with live_server(tmp_path / "live") as url:
        yield url


# one (status, criterion, detail) tuple per acceptance criterion, printed after the run
ACCEPTANCE_RESULTS = []


@contextlib.contextmanager
def criterion(name):
    """Record PASS/FAIL for one acceptance criterion; ``detail`` may be filled in by the body."""
    detail = {}
    try:
        yield detail
    except BaseException as exc:
        ACCEPTANCE_RESULTS.append(("FAIL", name, detail.get("text") or f"{type(exc).__name__}: {exc}"))
        raise
    ACCEPTANCE_RESULTS.append(("PASS", name, detail.get("text", "")))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for status, name, text in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{status}  {name}" + (f"  ({text})" if text else ""))

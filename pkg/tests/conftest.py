import shutil
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

import pytest

from litscape.cli import demo_config_path

SYNTHETIC = demo_config_path().parent


def atom_feed(ids, total):
    entries = "".join(
        f"""<entry><id>http://arxiv.org/abs/{pid}v1</id><title>Paper {pid}</title>
        <summary>Abstract of {pid} using the SP500 dataset.</summary></entry>"""
        for pid in ids
    )
    return f"""<?xml version="1.0" encoding="UTF-8"?>
<feed xmlns="http://www.w3.org/2005/Atom" xmlns:opensearch="http://a9.com/-/spec/opensearch/1.1/">
<title>stub</title><opensearch:totalResults>{total}</opensearch:totalResults>{entries}</feed>"""


class StubServer:
    """Local HTTP server that records requests and answers through a swappable handler."""

    def __init__(self):
        self.requests = []
        self.handler = lambda method, path, query, body: (404, "text/plain", "no handler")
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def _serve(self, method):
                length = int(self.headers.get("Content-Length") or 0)
                body = self.rfile.read(length).decode("utf-8") if length else ""
                parsed = urlparse(self.path)
                query = {k: v[0] for k, v in parse_qs(parsed.query).items()}
                stub.requests.append({"method": method, "path": parsed.path, "query": query,
                                      "body": body, "headers": dict(self.headers)})
                status, ctype, payload = stub.handler(method, parsed.path, query, body)
                data = payload.encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", ctype)
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def do_GET(self):
                self._serve("GET")

            def do_POST(self):
                self._serve("POST")

            def log_message(self, *args):
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.server.server_address[1]}"
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def stub():
    s = StubServer()
    yield s
    s.close()


@pytest.fixture
def arxiv_stub(stub):
    """Stub arXiv API holding ``stub.total`` matching papers."""
    stub.total = 100

    def handler(method, path, query, body):
        start, k = int(query["start"]), int(query["max_results"])
        ids = [f"2401.{i:05d}" for i in range(start, min(start + k, stub.total))]
        return 200, "application/atom+xml", atom_feed(ids, stub.total)

    stub.handler = handler
    return stub


@pytest.fixture
def synthetic_dir(tmp_path):
    """A private copy of the bundled synthetic corpus and its config."""
    dst = tmp_path / "synthetic"
    shutil.copytree(SYNTHETIC, dst, ignore=shutil.ignore_patterns("out", "__pycache__"))
    return dst


ACCEPTANCE_LINES: list[str] = []


class _Criterion:
    def __init__(self, number, title):
        self.number, self.title = number, title
        self.details: list[str] = []

    def note(self, text):
        self.details.append(text)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        status = "PASS" if exc_type is None else "FAIL"
        detail = "; ".join(self.details)
        if exc_type is not None:
            detail = (detail + "; " if detail else "") + f"{exc_type.__name__}: {exc}".splitlines()[0]
        line = f"{status} criterion {self.number} ({self.title}): {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return False


@pytest.fixture
def criterion():
    """``with criterion(n, title) as c:`` prints and records one PASS/FAIL line."""
    return _Criterion


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)

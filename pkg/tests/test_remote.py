import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from sentsel.errors import BackendError, ClientError
from sentsel.remote import HttpGenerationClient, HttpScorerBackend


class Server:
    """Tiny JSON server; ``script`` is a list of (status, body) replies used in order."""

    def __init__(self):
        self.script = []
        self.requests = []
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                n = int(self.headers["Content-Length"])
                outer.requests.append((self.path, json.loads(self.rfile.read(n))))
                status, body = outer.script.pop(0)
                data = body if isinstance(body, bytes) else json.dumps(body).encode()
                self.send_response(status)
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.httpd.server_port}"
        threading.Thread(target=self.httpd.serve_forever, daemon=True).start()


@pytest.fixture(scope="module")
def server():
    s = Server()
    yield s
    s.httpd.shutdown()


@pytest.fixture(autouse=True)
def reset(server):
    server.script.clear()
    server.requests.clear()


def test_scorer_ok(server):
    server.script.append((200, {"logits": [[0, 1, 2], [3, 4, 5]]}))
    out = HttpScorerBackend(server.url + "/").classify(["a", "b"])
    assert [s.logits for s in out] == [(0.0, 1.0, 2.0), (3.0, 4.0, 5.0)]
    assert server.requests == [("/classify", {"texts": ["a", "b"]})]


def test_scorer_retries_5xx(server):
    server.script += [(503, {}), (200, {"logits": [[1, 2]]})]
    assert HttpScorerBackend(server.url, retries=1).classify(["a"])[0].logits == (1.0, 2.0)
    assert len(server.requests) == 2


def test_scorer_gives_up_after_retries(server):
    server.script += [(500, {})] * 3
    with pytest.raises(BackendError):
        HttpScorerBackend(server.url, retries=2).classify(["a"])
    assert len(server.requests) == 3


def test_4xx_not_retried(server):
    server.script += [(404, {}), (200, {"logits": [[1]]})]
    with pytest.raises(BackendError):
        HttpScorerBackend(server.url, retries=2).classify(["a"])
    assert len(server.requests) == 1


@pytest.mark.parametrize("body", [b"not json", {"logits": [[1, 2]]}, {"logits": [["x"]]}, {"other": 1}])
def test_scorer_malformed(server, body):
    server.script.append((200, body))
    with pytest.raises(BackendError):
        HttpScorerBackend(server.url, retries=0).classify(["a", "b"] if body == {"logits": [[1, 2]]} else ["a"])


def test_generation(server):
    server.script.append((200, {"text": "Answer: Minor"}))
    assert HttpGenerationClient(server.url).generate("prompt", 32) == "Answer: Minor"
    assert server.requests == [("/generate", {"prompt": "prompt", "max_new_tokens": 32, "temperature": 0})]


def test_generation_errors(server):
    server.script += [(200, {"text": 5}), (400, {})]
    client = HttpGenerationClient(server.url, retries=0)
    with pytest.raises(ClientError):
        client.generate("p", 8)
    with pytest.raises(ClientError):
        client.generate("p", 8)


def test_connection_refused():
    with pytest.raises(BackendError):
        HttpScorerBackend("http://127.0.0.1:9", retries=0, timeout=2).classify(["a"])

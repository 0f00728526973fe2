import http.server
import json
import threading

import pytest


class _EmbeddingHandler(http.server.BaseHTTPRequestHandler):
    """Stub endpoint: embeds a text as [len(text), 1, 0, 0]."""

    dim = 4

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        payload = json.loads(self.rfile.read(length))
        vectors = [[float(len(t)), 1.0, 0.0, 0.0] for t in payload["texts"]]
        body = json.dumps({"vectors": vectors, "dim": self.dim}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture()
def embedding_server():
    server = http.server.HTTPServer(("127.0.0.1", 0), _EmbeddingHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}"
    server.shutdown()

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from llmize import EvaluatedSolution, ObjectiveDirection


class StubChatServer:
    """Local chat-completions stub that records every request.

    ``responder`` maps the request count (1-based) to (status, body dict).
    """

    def __init__(self, responder):
        self.requests = []
        self.responder = responder
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", "0"))
                body = json.loads(self.rfile.read(length)) if length else None
                outer.requests.append(
                    {
                        "path": self.path,
                        "headers": {k: v for k, v in self.headers.items()},
                        "body": body,
                    }
                )
                status, payload = outer.responder(len(outer.requests))
                data = json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self._server.server_address[1]}"
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def close(self):
        self._server.shutdown()
        self._server.server_close()


@pytest.fixture
def stub_chat_server():
    servers = []

    def start(responder):
        server = StubChatServer(responder)
        servers.append(server)
        return server

    yield start
    for server in servers:
        server.close()


def chat_body(content: str) -> dict:
    return {"choices": [{"message": {"role": "assistant", "content": content}}]}


def brute_force_topk(entries, capacity, direction):
    """Independent oracle for History: global top-K over unique payloads,
    ties to the earlier insertion, returned worst to best."""
    indexed = list(enumerate(entries))
    if direction is ObjectiveDirection.MINIMIZE:
        indexed.sort(key=lambda p: (p[1].score, p[0]))
    else:
        indexed.sort(key=lambda p: (-p[1].score, p[0]))
    kept = indexed[:capacity]
    return [entry for _, entry in reversed(kept)]


def ev(solution, score) -> EvaluatedSolution:
    return EvaluatedSolution(solution=solution, score=score)

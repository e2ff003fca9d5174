"""Local HTTP server serving fixture taxonomies, image galleries and images.

Fixture JSON layout (every section optional)::

    {
      "taxa": [{"key": 1, "scientificName": "Aves", "rank": "CLASS", "parentKey": null}, ...],
      "profiles": {"5": [{"extinct": true}, {}]},
      "galleries": {"Anas platyrhynchos": ["/img/a.png", "http://elsewhere/b.jpg"]},
      "images": {"a.png": "<base64>"}
    }

Endpoints::

    /species/{key}                       taxon record
    /species/{key}/children              paged (limit, offset)
    /species/{key}/speciesProfiles       paged (limit, offset)
    /gallery?q=...&offset=O&n=N          HTML page of <img> tags
    /img/{name}                          raw image bytes

Routes added with ``MockServer.route`` take precedence and can script
status codes, redirects and failures.

    python -m taxoforge.mockserver fixture.json --port 8080
"""

import argparse
import base64
import html
import json
import threading
import time
from collections import Counter
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlsplit


class MockServer:
    def __init__(self, fixture=None, host="127.0.0.1", port=0, delay=0.0):
        fixture = fixture or {}
        self.taxa = {int(t["key"]): t for t in fixture.get("taxa", [])}
        self.children = {}
        for t in fixture.get("taxa", []):
            parent = t.get("parentKey")
            if parent is not None:
                self.children.setdefault(int(parent), []).append(t)
        self.profiles = {int(k): v for k, v in fixture.get("profiles", {}).items()}
        self.galleries = {q: list(v) for q, v in fixture.get("galleries", {}).items()}
        self.images = {}
        for name, b64 in fixture.get("images", {}).items():
            self.images[name] = base64.b64decode(b64)
        self.delay = delay
        self.routes = {}
        self.hits = Counter()
        self._lock = threading.Lock()
        self._httpd = ThreadingHTTPServer((host, port), self._handler_class())
        self._httpd.daemon_threads = True
        self._thread = None

    @property
    def base_url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def url(self, path: str) -> str:
        return self.base_url + path

    def route(self, path, responder):
        """``responder`` is (status, headers, body) or a callable taking the
        hit count (1-based) and returning that tuple."""
        self.routes[path] = responder

    def add_image(self, name: str, data: bytes):
        self.images[name] = data

    def start(self):
        self._thread = threading.Thread(target=self._httpd.serve_forever, kwargs={"poll_interval": 0.02}, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self._httpd.shutdown()
        self._httpd.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    # request handling

    def _page(self, items, query):
        limit = int(query.get("limit", ["20"])[0])
        offset = int(query.get("offset", ["0"])[0])
        chunk = items[offset:offset + limit]
        body = {"offset": offset, "limit": limit, "endOfRecords": offset + limit >= len(items), "results": chunk}
        return 200, {"Content-Type": "application/json"}, json.dumps(body).encode()

    def _dispatch(self, raw_path):
        parts = urlsplit(raw_path)
        path, query = parts.path, parse_qs(parts.query)
        with self._lock:
            self.hits[raw_path] += 1
            count = self.hits[raw_path]
        responder = self.routes.get(raw_path, self.routes.get(path))
        if responder is not None:
            return responder(count) if callable(responder) else responder

        segs = [s for s in path.split("/") if s]
        if segs and segs[0] == "species" and len(segs) >= 2 and segs[1].isdigit():
            key = int(segs[1])
            if key not in self.taxa:
                return 404, {}, b"not found"
            if len(segs) == 2:
                return 200, {"Content-Type": "application/json"}, json.dumps(self.taxa[key]).encode()
            if segs[2:] == ["children"]:
                return self._page(self.children.get(key, []), query)
            if segs[2:] == ["speciesProfiles"]:
                return self._page(self.profiles.get(key, []), query)
        if path == "/gallery":
            q = query.get("q", [""])[0]
            offset = int(query.get("offset", ["0"])[0])
            n = int(query.get("n", ["20"])[0])
            srcs = self.galleries.get(q, [])[offset:offset + n]
            tags = "".join(f'<img src="{html.escape(s)}">' for s in srcs)
            return 200, {"Content-Type": "text/html"}, f"<html><body>{tags}</body></html>".encode()
        if len(segs) == 2 and segs[0] == "img" and segs[1] in self.images:
            return 200, {"Content-Type": "application/octet-stream"}, self.images[segs[1]]
        return 404, {}, b"not found"

    def _handler_class(self):
        server = self

        class Handler(BaseHTTPRequestHandler):
            def do_GET(self):
                if server.delay:
                    time.sleep(server.delay)
                status, headers, body = server._dispatch(self.path)
                self.send_response(status)
                for k, v in headers.items():
                    self.send_header(k, v)
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, fmt, *args):
                pass

        return Handler


def main(argv=None):
    ap = argparse.ArgumentParser(prog="taxoforge-mockserver")
    ap.add_argument("fixture")
    ap.add_argument("--host", default="127.0.0.1")
    ap.add_argument("--port", type=int, default=8080)
    ap.add_argument("--delay", type=float, default=0.0)
    args = ap.parse_args(argv)
    with open(args.fixture, encoding="utf-8") as fh:
        fixture = json.load(fh)
    srv = MockServer(fixture, args.host, args.port, args.delay)
    print(f"serving on {srv.base_url}", flush=True)
    try:
        srv._httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

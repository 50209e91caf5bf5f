"""HTTP model server speaking the explanation engine's wire protocol.

Endpoints::

    POST /v1/predict
        {"images": [{"width": W, "height": H, "channels": C,
                     "pixels_b64": "<base64 row-major bytes>"}, ...]}
        -> {"outputs": [{"probs": [...]}, ...]}

    GET /v1/meta -> {"num_classes": N, "model_name": "..."}

Responses are canonical JSON (sorted keys, no whitespace) so recorded
protocol vectors can be compared byte for byte. The threading server
handles concurrent requests; outputs within one request always align
with its inputs.
"""

from __future__ import annotations

import base64
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .classifiers import ToyClassifierSpec, classify


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _decode_image(entry: dict) -> np.ndarray:
    width = int(entry["width"])
    height = int(entry["height"])
    channels = int(entry["channels"])
    raw = base64.b64decode(entry["pixels_b64"])
    if len(raw) != width * height * channels:
        raise ValueError(
            f"pixel payload has {len(raw)} bytes, expected {width * height * channels}"
        )
    return np.frombuffer(raw, dtype=np.uint8).reshape(height, width, channels)


def predict_payload(spec: ToyClassifierSpec, request_doc: dict) -> dict:
    images = request_doc.get("images")
    if not isinstance(images, list) or not images:
        raise ValueError("request must carry a non-empty 'images' list")
    outputs = []
    for entry in images:
        pixels = _decode_image(entry)
        outputs.append({"probs": classify(spec, pixels)})
    return {"outputs": outputs}


def meta_payload(spec: ToyClassifierSpec) -> dict:
    return {"num_classes": spec.num_classes, "model_name": spec.kind}


class _Handler(BaseHTTPRequestHandler):
    def log_message(self, fmt, *args):
        pass

    def _send(self, status: int, body: str) -> None:
        payload = body.encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def do_GET(self):
        if self.path == "/v1/meta":
            self._send(200, canonical_json(meta_payload(self.server.spec)))
        else:
            self._send(404, canonical_json({"error": "unknown path"}))

    def do_POST(self):
        if self.path != "/v1/predict":
            self._send(404, canonical_json({"error": "unknown path"}))
            return
        length = int(self.headers.get("Content-Length", "0"))
        raw = self.rfile.read(length)
        try:
            doc = json.loads(raw)
            payload = predict_payload(self.server.spec, doc)
        except (ValueError, KeyError, TypeError) as exc:
            self._send(400, canonical_json({"error": str(exc)}))
            return
        self._send(200, canonical_json(payload))


class RefServer:
    """Owns the listening socket; ``port=0`` picks a free port."""

    def __init__(self, spec: ToyClassifierSpec, host: str = "127.0.0.1", port: int = 0):
        self.spec = spec
        self.httpd = ThreadingHTTPServer((host, port), _Handler)
        self.httpd.spec = spec
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address
        return f"http://{host}:{port}"

    def start_background(self) -> "RefServer":
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self.httpd.serve_forever()

    def close(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()

"""Shared fixtures: toy images, manifests, mock classifiers, test server."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from hseg import CallableAdapter, ImageBuffer, SegmentManifest


def rect_mask(height: int, width: int, r0: int, c0: int, r1: int, c1: int) -> np.ndarray:
    """Boolean mask with rows [r0, r1) and cols [c0, c1) set."""
    mask = np.zeros((height, width), dtype=bool)
    mask[r0:r1, c0:c1] = True
    return mask


PROBE = (8, 8, 40, 40)  # rows 8..40, cols 8..40 of the toy image


def toy_image() -> ImageBuffer:
    """64x64 RGB: bright probe region on a dark background.

    The probe's upper half is brighter than its lower half so a depth-2
    refinement has a clear winner.
    """
    img = np.full((64, 64, 3), 20, dtype=np.uint8)
    img[8:24, 8:40] = 250
    img[24:40, 8:40] = 190
    return ImageBuffer.from_array(img)


def toy_manifest() -> SegmentManifest:
    """Probe region (id 0), its two halves (ids 1, 2), a distractor (id 3)."""
    masks = [
        rect_mask(64, 64, 8, 8, 40, 40),    # 1024 px
        rect_mask(64, 64, 8, 8, 24, 40),    # 512 px, upper half
        rect_mask(64, 64, 24, 8, 40, 40),   # 512 px, lower half
        rect_mask(64, 64, 40, 40, 64, 64),  # 576 px, disjoint
    ]
    return SegmentManifest.from_bitmaps(masks, provenance={"model": "toy", "params": {}})


def flat_manifest() -> SegmentManifest:
    """Two disjoint top-level segments, no children anywhere."""
    masks = [
        rect_mask(64, 64, 0, 0, 32, 64),
        rect_mask(64, 64, 32, 0, 64, 64),
    ]
    return SegmentManifest.from_bitmaps(masks)


def region_mean_fn(bbox=PROBE):
    """Two-class classifier: p(class 1) = mean intensity of bbox / 255."""
    r0, c0, r1, c1 = bbox

    def fn(images):
        out = []
        for im in images:
            m = float(im.pixels[r0:r1, c0:c1].mean()) / 255.0
            out.append([1.0 - m, m])
        return np.asarray(out)

    return fn


def region_mean_adapter(bbox=PROBE, name="region-mean") -> CallableAdapter:
    return CallableAdapter(region_mean_fn(bbox), num_classes=2, model_name=name)


def constant_adapter(num_classes=2, label=0) -> CallableAdapter:
    def fn(images):
        probs = np.zeros((len(images), num_classes))
        probs[:, label] = 1.0
        return probs

    return CallableAdapter(fn, num_classes=num_classes, model_name="constant")


def hashed_random_adapter(num_classes=2, seed=0) -> CallableAdapter:
    """Pseudo-random but per-image deterministic probabilities."""
    import hashlib

    def fn(images):
        rows = []
        for im in images:
            digest = hashlib.blake2b(
                im.to_bytes() + seed.to_bytes(8, "little"), digest_size=8
            ).digest()
            rng = np.random.Generator(
                np.random.Philox(key=int.from_bytes(digest, "little"))
            )
            raw = rng.random(num_classes) + 1e-9
            rows.append(raw / raw.sum())
        return np.asarray(rows)

    return CallableAdapter(fn, num_classes=num_classes, model_name="random")


class _JsonHandler(BaseHTTPRequestHandler):
    def log_message(self, fmt, *args):  # keep test output clean
        pass

    def _send(self, status: int, body: str) -> None:
        payload = body.encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def do_GET(self):
        server = self.server
        if self.path == "/v1/meta":
            server.meta_hits += 1
            self._send(
                200,
                json.dumps(
                    {
                        "num_classes": server.num_classes,
                        "model_name": server.model_name,
                    },
                    sort_keys=True,
                    separators=(",", ":"),
                ),
            )
        else:
            self._send(404, "{}")

    def do_POST(self):
        server = self.server
        if self.path != "/v1/predict":
            self._send(404, "{}")
            return
        length = int(self.headers.get("Content-Length", "0"))
        body = self.rfile.read(length).decode("utf-8")
        if server.fail_next > 0:
            server.fail_next -= 1
            self._send(500, "{}")
            return
        if server.raw_response is not None:
            self._send(200, server.raw_response)
            return
        doc = json.loads(body)
        images = []
        for entry in doc["images"]:
            import base64

            pixels = np.frombuffer(
                base64.b64decode(entry["pixels_b64"]), dtype=np.uint8
            ).reshape(entry["height"], entry["width"], entry["channels"])
            images.append(
                ImageBuffer(
                    width=entry["width"],
                    height=entry["height"],
                    channels=entry["channels"],
                    pixels=pixels.copy(),
                )
            )
        probs = server.predict_fn(images)
        self._send(
            200,
            json.dumps(
                {"outputs": [{"probs": list(map(float, row))} for row in probs]},
                sort_keys=True,
                separators=(",", ":"),
            ),
        )


class LocalModelServer:
    """Local HTTP model endpoint for adapter and CLI tests."""

    def __init__(self, predict_fn, num_classes=2, model_name="test-model"):
        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), _JsonHandler)
        self.httpd.predict_fn = predict_fn
        self.httpd.num_classes = num_classes
        self.httpd.model_name = model_name
        self.httpd.meta_hits = 0
        self.httpd.fail_next = 0
        self.httpd.raw_response = None
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address
        return f"http://{host}:{port}"

    def close(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def region_server():
    server = LocalModelServer(region_mean_fn())
    yield server
    server.close()

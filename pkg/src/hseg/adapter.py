"""Uniform black-box access to classifier endpoints.

Three transports share one contract: a batch of raw images goes in, one
validated probability vector per image comes out, order preserved.

HTTP wire format::

    POST /v1/predict
    {"images": [{"width": W, "height": H, "channels": C,
                 "pixels_b64": "<base64 of row-major bytes>"}, ...]}
    -> {"outputs": [{"probs": [...]}, ...]}

    GET /v1/meta -> {"num_classes": N, "model_name": "..."}

The subprocess transport exchanges the same objects as NDJSON over
stdin/stdout, one JSON object per line; predict requests carry the
"images" key and meta requests are ``{"meta": true}``.
"""

from __future__ import annotations

import base64
import json
import subprocess
import threading
import time
from dataclasses import dataclass
from typing import Any, Callable, Mapping, Sequence

import numpy as np
import requests

from .errors import ProtocolError, TransportError, ValidationError
from .image_io import ImageBuffer

PROB_SUM_TOLERANCE = 1e-4


@dataclass(frozen=True)
class ModelOutput:
    """One validated prediction: probabilities, argmax, transport latency."""

    probs: tuple[float, ...]
    argmax_label: int
    raw_latency: float  # milliseconds


def _validate_probs(raw: Any, index: int) -> tuple[float, ...]:
    if not isinstance(raw, (list, tuple)) or not raw:
        raise ValidationError(f"output {index}: probs must be a non-empty list")
    arr = np.asarray(raw, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"output {index}: probs contain non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValidationError(f"output {index}: probs outside [0, 1]")
    total = float(arr.sum())
    if abs(total - 1.0) > PROB_SUM_TOLERANCE:
        raise ValidationError(
            f"output {index}: probs sum to {total!r}, expected 1 +/- {PROB_SUM_TOLERANCE}"
        )
    return tuple(float(p) for p in arr)


def _outputs_from_payload(
    payload: Any, expected: int, latency_ms: float
) -> list[ModelOutput]:
    if not isinstance(payload, Mapping) or "outputs" not in payload:
        raise ProtocolError("response is missing the 'outputs' key")
    outputs = payload["outputs"]
    if not isinstance(outputs, list) or len(outputs) != expected:
        got = len(outputs) if isinstance(outputs, list) else type(outputs).__name__
        raise ProtocolError(f"expected {expected} outputs, got {got}")
    results: list[ModelOutput] = []
    for idx, entry in enumerate(outputs):
        if not isinstance(entry, Mapping) or "probs" not in entry:
            raise ProtocolError(f"output {idx} is missing 'probs'")
        probs = _validate_probs(entry["probs"], idx)
        results.append(
            ModelOutput(
                probs=probs,
                argmax_label=int(np.argmax(probs)),
                raw_latency=latency_ms,
            )
        )
    return results


def image_payload(image: ImageBuffer) -> dict[str, Any]:
    """Serialize one image for the wire: raw pixels, never file paths."""
    return {
        "width": image.width,
        "height": image.height,
        "channels": image.channels,
        "pixels_b64": base64.b64encode(image.to_bytes()).decode("ascii"),
    }


def predict_request_body(images: Sequence[ImageBuffer]) -> str:
    """Canonical predict request body shared by both remote transports."""
    return json.dumps(
        {"images": [image_payload(im) for im in images]},
        sort_keys=True,
        separators=(",", ":"),
    )


class ModelAdapter:
    """Interface every transport implements."""

    def predict_batch(self, images: Sequence[ImageBuffer]) -> list[ModelOutput]:
        raise NotImplementedError

    def get_meta(self) -> dict[str, Any]:
        raise NotImplementedError

    def predict_probs(self, images: Sequence[ImageBuffer]) -> np.ndarray:
        """Convenience: stacked (n, num_classes) probability matrix."""
        outputs = self.predict_batch(images)
        return np.asarray([o.probs for o in outputs], dtype=np.float64)


class CallableAdapter(ModelAdapter):
    """In-process adapter wrapping ``fn(images) -> (n, C) probabilities``.

    Used for tests and for fully local runs; outputs go through the same
    validation as remote transports.
    """

    def __init__(
        self,
        fn: Callable[[Sequence[ImageBuffer]], np.ndarray],
        num_classes: int,
        model_name: str = "in-process",
    ) -> None:
        self._fn = fn
        self._meta = {"num_classes": int(num_classes), "model_name": model_name}
        self.calls = 0

    def predict_batch(self, images: Sequence[ImageBuffer]) -> list[ModelOutput]:
        if not images:
            raise ValueError("images must be non-empty")
        self.calls += 1
        start = time.perf_counter()
        probs = np.asarray(self._fn(images), dtype=np.float64)
        latency = (time.perf_counter() - start) * 1000.0
        payload = {"outputs": [{"probs": row.tolist()} for row in probs]}
        return _outputs_from_payload(payload, len(images), latency)

    def get_meta(self) -> dict[str, Any]:
        return dict(self._meta)


class HttpAdapter(ModelAdapter):
    """HTTP transport with bounded retries for transient failures.

    Only transport-level failures (connection errors, timeouts, 5xx) are
    retried; protocol and validation errors never are, so a retry can
    never duplicate outputs.
    """

    def __init__(
        self,
        endpoint: str,
        timeout: float = 30.0,
        retries: int = 2,
        backoff: float = 0.2,
    ) -> None:
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self._session = requests.Session()
        self._meta: dict[str, Any] | None = None
        self._meta_lock = threading.Lock()

    def _request(self, method: str, path: str, body: str | None = None) -> tuple[Any, float]:
        url = self.endpoint + path
        last_exc: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff * attempt)
            start = time.perf_counter()
            try:
                if method == "GET":
                    resp = self._session.get(url, timeout=self.timeout)
                else:
                    resp = self._session.post(
                        url,
                        data=body.encode("utf-8") if body else None,
                        headers={"Content-Type": "application/json"},
                        timeout=self.timeout,
                    )
            except requests.RequestException as exc:
                last_exc = exc
                continue
            latency = (time.perf_counter() - start) * 1000.0
            if resp.status_code >= 500:
                last_exc = TransportError(f"{url} answered {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise ProtocolError(f"{url} answered {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json(), latency
            except ValueError as exc:
                raise ProtocolError(f"{url} returned invalid JSON: {exc}") from exc
        raise TransportError(f"cannot reach {url}: {last_exc}")

    def predict_batch(self, images: Sequence[ImageBuffer]) -> list[ModelOutput]:
        if not images:
            raise ValueError("images must be non-empty")
        payload, latency = self._request(
            "POST", "/v1/predict", predict_request_body(images)
        )
        return _outputs_from_payload(payload, len(images), latency)

    def get_meta(self) -> dict[str, Any]:
        with self._meta_lock:
            if self._meta is None:
                payload, _ = self._request("GET", "/v1/meta")
                if not isinstance(payload, Mapping) or "num_classes" not in payload:
                    raise ProtocolError("meta response is missing 'num_classes'")
                self._meta = dict(payload)
            return dict(self._meta)


class SubprocessAdapter(ModelAdapter):
    """NDJSON transport over a child process's stdin/stdout.

    Calls are serialized with a lock, which preserves per-call ordering
    even when the adapter is shared across threads.
    """

    def __init__(self, command: Sequence[str]) -> None:
        self.command = list(command)
        self._lock = threading.Lock()
        self._proc: subprocess.Popen[str] | None = None
        self._meta: dict[str, Any] | None = None

    def _ensure_proc(self) -> subprocess.Popen[str]:
        if self._proc is None or self._proc.poll() is not None:
            try:
                self._proc = subprocess.Popen(
                    self.command,
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    text=True,
                    bufsize=1,
                )
            except OSError as exc:
                raise TransportError(f"cannot start {self.command!r}: {exc}") from exc
        return self._proc

    def _roundtrip(self, request: dict[str, Any]) -> tuple[Any, float]:
        proc = self._ensure_proc()
        assert proc.stdin is not None and proc.stdout is not None
        start = time.perf_counter()
        try:
            proc.stdin.write(json.dumps(request, sort_keys=True) + "\n")
            proc.stdin.flush()
            line = proc.stdout.readline()
        except (OSError, BrokenPipeError) as exc:
            raise TransportError(f"subprocess pipe failed: {exc}") from exc
        latency = (time.perf_counter() - start) * 1000.0
        if not line:
            raise TransportError("subprocess closed its stdout")
        try:
            return json.loads(line), latency
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"subprocess wrote invalid JSON: {exc}") from exc

    def predict_batch(self, images: Sequence[ImageBuffer]) -> list[ModelOutput]:
        if not images:
            raise ValueError("images must be non-empty")
        request = {"images": [image_payload(im) for im in images]}
        with self._lock:
            payload, latency = self._roundtrip(request)
        return _outputs_from_payload(payload, len(images), latency)

    def get_meta(self) -> dict[str, Any]:
        with self._lock:
            if self._meta is None:
                payload, _ = self._roundtrip({"meta": True})
                if not isinstance(payload, Mapping) or "num_classes" not in payload:
                    raise ProtocolError("meta response is missing 'num_classes'")
                self._meta = dict(payload)
            return dict(self._meta)

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.terminate()
            self._proc.wait(timeout=5)

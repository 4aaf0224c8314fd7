"""Shared helpers for the test suite: tiny fixtures and a stub API server."""

from __future__ import annotations

import io
import json
import threading
from collections import Counter
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from PIL import Image

from trapkit.dataset import Annotation, ImageRecord
from trapkit.evaluator import Detection, GroundTruthBox
from trapkit.geometry import ImageSize, NormalizedBox, PixelBox

DEFAULT_TOKEN = "stub-token-1234"


def rand_box(rng) -> NormalizedBox:
    w = rng.uniform(0.05, 0.5)
    h = rng.uniform(0.05, 0.5)
    return NormalizedBox(rng.uniform(w / 2, 1 - w / 2), rng.uniform(h / 2, 1 - h / 2), w, h)


def jitter_box(rng, box: NormalizedBox) -> NormalizedBox:
    """Perturb a box, spreading IoU across the whole matching ladder.

    The jitter magnitude is itself random so near-exact copies (IoU above
    0.95) happen often enough that every ladder rung separates matches.
    """
    shift = rng.uniform(0.0, 0.3)
    scale = rng.uniform(0.0, 0.2)
    w = min(1.0, box.w * rng.uniform(1 - scale, 1 + scale))
    h = min(1.0, box.h * rng.uniform(1 - scale, 1 + scale))
    cx = min(max(box.cx + box.w * rng.uniform(-shift, shift), w / 2), 1 - w / 2)
    cy = min(max(box.cy + box.h * rng.uniform(-shift, shift), h / 2), 1 - h / 2)
    return NormalizedBox(cx, cy, w, h)


def random_instance(rng):
    """Small random evaluation problem: (detections, ground truths, class count).

    Sized within 10 images, 5 classes, and 20 boxes per side. Roughly half
    the confidences are quantized to one decimal so ties are common, and
    most detections are jittered copies of real boxes so every IoU
    threshold in the ladder separates some matches.
    """
    class_count = rng.randint(1, 5)
    ids = [f"img_{i:02d}" for i in range(rng.randint(1, 10))]
    budget = rng.randint(0, 20)
    gts = {}
    for image_id in ids:
        n = min(budget, rng.randint(0, 4))
        budget -= n
        gts[image_id] = tuple(
            GroundTruthBox(rng.randrange(class_count), rand_box(rng)) for _ in range(n)
        )
    flat = [(image_id, gt) for image_id, boxes in gts.items() for gt in boxes]
    dets = []
    for _ in range(rng.randint(0, 20)):
        conf = round(rng.random(), 1) if rng.random() < 0.5 else rng.random()
        if flat and rng.random() < 0.7:
            image_id, gt = rng.choice(flat)
            cls = gt.class_index if rng.random() < 0.7 else rng.randrange(class_count)
            box = jitter_box(rng, gt.box)
        else:
            image_id = rng.choice(ids)
            cls = rng.randrange(class_count)
            box = rand_box(rng)
        dets.append(Detection(image_id, cls, conf, box))
    return dets, gts, class_count


def as_oracle(dets, gts):
    """Convert evaluator types to the plain structures the oracle expects."""
    odets = [
        {
            "image_id": d.image_id,
            "class": d.class_index,
            "conf": d.confidence,
            "box": (d.box.cx, d.box.cy, d.box.w, d.box.h),
        }
        for d in dets
    ]
    ogts = {
        image_id: [(g.class_index, (g.box.cx, g.box.cy, g.box.w, g.box.h)) for g in boxes]
        for image_id, boxes in gts.items()
    }
    return odets, ogts


def png_bytes(width: int = 64, height: int = 48, color=(10, 120, 40)) -> bytes:
    buf = io.BytesIO()
    Image.new("RGB", (width, height), color).save(buf, format="PNG")
    return buf.getvalue()


def record(
    image_id: str,
    species_boxes,
    width: int = 640,
    height: int = 480,
    path: str | None = None,
    location: str | None = None,
) -> ImageRecord:
    """Build an ImageRecord from (species, (x0, y0, x1, y1)) pairs."""
    return ImageRecord(
        image_id=image_id,
        path=path or f"media/{image_id}.png",
        size=ImageSize(width, height),
        annotations=tuple(Annotation(s, PixelBox(*b)) for s, b in species_boxes),
        location_id=location,
    )


class _StubHandler(BaseHTTPRequestHandler):
    server: "StubApiServer"

    def log_message(self, *args):  # keep pytest output clean
        pass

    def do_GET(self):
        stub = self.server.stub
        parsed = urlparse(self.path)
        path = parsed.path
        stub.hits[path] += 1

        if self.headers.get("Authorization") != f"Token {stub.token}":
            self.send_response(401)
            self.end_headers()
            return

        remaining = stub.flaky.get(path, 0)
        if remaining > 0:
            stub.flaky[path] = remaining - 1
            self.send_response(503)
            self.end_headers()
            return

        if path == "/media/":
            query = parse_qs(parsed.query)
            page = int(query.get("page", ["1"])[0])
            stub.projects_seen.update(query.get("project", []))
            start = (page - 1) * stub.page_size
            chunk = stub.records[start : start + stub.page_size]
            next_url = None
            if start + stub.page_size < len(stub.records):
                next_url = f"{stub.base_url}/media/?page={page + 1}"
            body = json.dumps({"results": chunk, "next": next_url}).encode()
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.end_headers()
            self.wfile.write(body)
            return

        if path in stub.files:
            self.send_response(200)
            self.send_header("Content-Type", "application/octet-stream")
            self.end_headers()
            self.wfile.write(stub.files[path])
            return

        self.send_response(404)
        self.end_headers()


class StubApiServer:
    """A local TRAPPER-like API: paginated listing, token auth, media files.

    ``flaky`` maps a path to the number of 503 responses it returns before
    recovering. ``hits`` counts every request per path, which lets tests
    assert that an idempotent re-run downloads nothing.
    """

    def __init__(self, records, files, token: str = DEFAULT_TOKEN, page_size: int = 2):
        self.records = records
        self.files = files
        self.token = token
        self.page_size = page_size
        self.hits: Counter[str] = Counter()
        self.flaky: dict[str, int] = {}
        self.projects_seen: Counter[str] = Counter()
        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
        self._httpd.stub = self
        self.base_url = f"http://127.0.0.1:{self._httpd.server_port}"
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._httpd.shutdown()
        self._httpd.server_close()
        self._thread.join(timeout=5)

    def listing_record(self, image_id: str, file_path: str, annotations, **extra) -> dict:
        rec = {
            "id": image_id,
            "download_url": f"{self.base_url}{file_path}",
            "annotations": annotations,
        }
        rec.update(extra)
        return rec


def ann(species: str, bbox, coords: str = "pixel") -> dict:
    return {"species": species, "bbox": list(bbox), "coords": coords}

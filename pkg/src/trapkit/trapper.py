"""Ingestion client for a TRAPPER-style REST API.

API contract assumed here (the toolkit's only coupling to the remote
service; everything downstream works from the local manifest):

* ``GET {endpoint}/media/``: paginated JSON listing with fields
  ``results`` (list of records) and ``next`` (absolute URL of the next
  page or null). Optional ``?project=<id>`` filter.
* Each record: ``id``, ``download_url``, ``annotations`` (list of
  ``{"species", "bbox": [x_min, y_min, x_max, y_max], "coords"}``),
  optional ``width``/``height``/``location``.
* ``GET <download_url>``: the media bytes.
* Auth: ``Authorization: Token <token>`` header on every request.

Media files are stored under content-addressed names
(``media/<hh>/<sha256>.<ext>``), which makes re-runs verifiable: an
already-listed image whose file hash still matches its name is not
downloaded again.
"""

from __future__ import annotations

import hashlib
import io
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import requests
from PIL import Image, UnidentifiedImageError

from .dataset import Annotation, ImageRecord, Manifest, load_manifest, save_manifest
from .errors import AuthError, InputError, RemoteError
from .geometry import ImageSize, NormalizedBox, PixelBox, to_pixel

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
MEDIA_DIR = "media"

_RETRY_STATUSES = {429, 500, 502, 503, 504}
_EXT_BY_FORMAT = {"JPEG": ".jpg", "PNG": ".png", "GIF": ".gif", "TIFF": ".tif",
                  "BMP": ".bmp", "WEBP": ".webp"}


@dataclass
class FetchSummary:
    """Outcome of one fetch run."""

    listed: int = 0
    downloaded: int = 0
    reused: int = 0
    skipped_empty: int = 0
    skipped_malformed: int = 0
    failures: list[tuple[str, str]] = field(default_factory=list)  # (image_id, reason)

    @property
    def ok(self) -> bool:
        return not self.failures

    def describe(self) -> str:
        parts = [
            f"{self.listed} listed",
            f"{self.downloaded} downloaded",
            f"{self.reused} reused",
        ]
        if self.skipped_empty:
            parts.append(f"{self.skipped_empty} empty skipped")
        if self.skipped_malformed:
            parts.append(f"{self.skipped_malformed} malformed skipped")
        if self.failures:
            parts.append(f"{len(self.failures)} failed")
        return ", ".join(parts)


class TrapperClient:
    """HTTP client with bounded exponential-backoff retries."""

    def __init__(
        self,
        endpoint: str,
        token: str,
        *,
        timeout: float = 30.0,
        max_retries: int = 3,
        backoff: float = 0.5,
        session: requests.Session | None = None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff
        self.session = session or requests.Session()
        self.session.headers["Authorization"] = f"Token {token}"

    def _get(self, url: str) -> requests.Response:
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self.session.get(url, timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = exc
                continue
            if resp.status_code in (401, 403):
                raise AuthError(f"authorization rejected ({resp.status_code}) for {url}")
            if resp.status_code in _RETRY_STATUSES:
                last_error = RemoteError(f"HTTP {resp.status_code} from {url}")
                continue
            if resp.status_code != 200:
                raise RemoteError(f"HTTP {resp.status_code} from {url}")
            return resp
        raise RemoteError(f"giving up on {url} after {self.max_retries + 1} attempts: {last_error}")

    def iter_media(self, project: str | None = None):
        """Yield raw media records, walking every page of the listing."""
        url = f"{self.endpoint}/media/"
        if project:
            url += f"?project={project}"
        while url:
            page = self._get(url).json()
            yield from page.get("results", [])
            url = page.get("next")

    def download(self, url: str) -> bytes:
        return self._get(url).content


def _record_from_api(raw: dict) -> tuple[str, str, ImageSize | None, str | None, list[tuple[str, list[float], str]]]:
    """Pull the fields we need out of one listing record; raise InputError if unusable."""
    image_id = raw.get("id")
    if not image_id or not isinstance(image_id, str):
        raise InputError("record has no usable id")
    url = raw.get("download_url")
    if not url:
        raise InputError(f"record {image_id!r} has no download_url")
    size = None
    if raw.get("width") and raw.get("height"):
        size = ImageSize(int(raw["width"]), int(raw["height"]))
    annotations = []
    for ann in raw.get("annotations", []):
        species = ann.get("species")
        bbox = ann.get("bbox")
        if not species or not isinstance(bbox, (list, tuple)) or len(bbox) != 4:
            raise InputError(f"record {image_id!r} has a malformed annotation")
        annotations.append((str(species), [float(v) for v in bbox], ann.get("coords", "pixel")))
    return image_id, url, size, raw.get("location"), annotations


def _sniff_image(data: bytes) -> tuple[ImageSize, str] | None:
    try:
        with Image.open(io.BytesIO(data)) as img:
            ext = _EXT_BY_FORMAT.get(img.format or "", ".bin")
            return ImageSize(img.width, img.height), ext
    except (UnidentifiedImageError, OSError):
        return None


def _build_annotations(
    image_id: str, size: ImageSize, raw_annotations: list[tuple[str, list[float], str]]
) -> tuple[Annotation, ...]:
    out = []
    for species, bbox, coords in raw_annotations:
        if coords == "pixel":
            box = PixelBox(*bbox)
        elif coords == "normalized":
            x0, y0, x1, y1 = bbox
            box = to_pixel(NormalizedBox(cx=(x0 + x1) / 2, cy=(y0 + y1) / 2,
                                         w=x1 - x0, h=y1 - y0), size)
        else:
            raise InputError(f"record {image_id!r}: unknown coords mode {coords!r}")
        out.append(Annotation(species, box))
    return tuple(out)


def _verify_cached(record: ImageRecord, dest: Path) -> bool:
    """True when the previously recorded media file is intact (hash matches its name)."""
    media_path = dest / record.path
    if not media_path.is_file():
        return False
    expected = media_path.stem
    digest = hashlib.sha256(media_path.read_bytes()).hexdigest()
    return digest == expected


def fetch_package(
    endpoint: str,
    token: str,
    dest: str | Path,
    *,
    project: str | None = None,
    workers: int = 4,
    client: TrapperClient | None = None,
) -> tuple[Manifest, FetchSummary]:
    """Download the annotated media package into ``dest``.

    Walks the full paginated listing, downloads media in parallel, and
    writes ``manifest.json`` plus content-addressed media files. Re-runs
    are idempotent: records whose media already exists locally (verified
    by checksum) are reused without a download. Per-item download
    failures are collected in the summary; the manifest contains only the
    successful items.
    """
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    client = client or TrapperClient(endpoint, token)

    cached: dict[str, ImageRecord] = {}
    manifest_path = dest / MANIFEST_NAME
    if manifest_path.is_file():
        try:
            cached = {r.image_id: r for r in load_manifest(manifest_path).records}
        except InputError as exc:
            log.warning("ignoring unreadable previous manifest: %s", exc)

    summary = FetchSummary()
    to_fetch: list[tuple[str, str, ImageSize | None, str | None, list]] = []
    records: list[ImageRecord] = []

    for raw in client.iter_media(project=project):
        summary.listed += 1
        try:
            image_id, url, size, location, annotations = _record_from_api(raw)
        except InputError as exc:
            log.warning("skipping malformed record: %s", exc)
            summary.skipped_malformed += 1
            continue
        if not annotations:
            summary.skipped_empty += 1
            continue
        prior = cached.get(image_id)
        if prior is not None and _verify_cached(prior, dest):
            summary.reused += 1
            records.append(prior)
            continue
        to_fetch.append((image_id, url, size, location, annotations))

    def fetch_one(item) -> ImageRecord:
        image_id, url, size, location, annotations = item
        data = client.download(url)
        sniffed = _sniff_image(data)
        if sniffed is None:
            if size is None:
                raise InputError(
                    f"record {image_id!r}: media is not a readable image and the "
                    "listing reports no dimensions"
                )
            ext = ".bin"
        else:
            file_size, ext = sniffed
            if size is not None and (size.width, size.height) != (file_size.width, file_size.height):
                log.warning(
                    "record %r: listed size %dx%d differs from file %dx%d; using the file",
                    image_id, size.width, size.height, file_size.width, file_size.height,
                )
            size = file_size
        digest = hashlib.sha256(data).hexdigest()
        rel_path = f"{MEDIA_DIR}/{digest[:2]}/{digest}{ext}"
        media_path = dest / rel_path
        media_path.parent.mkdir(parents=True, exist_ok=True)
        # An existing file may be a stale corrupt copy, so trust only its hash.
        if not (
            media_path.is_file()
            and hashlib.sha256(media_path.read_bytes()).hexdigest() == digest
        ):
            tmp = media_path.with_suffix(f"{media_path.suffix}.{threading.get_ident()}.part")
            tmp.write_bytes(data)
            os.replace(tmp, media_path)
        return ImageRecord(
            image_id=image_id,
            path=rel_path,
            size=size,
            annotations=_build_annotations(image_id, size, annotations),
            location_id=location,
        )

    def fetch_guarded(item):
        try:
            return fetch_one(item)
        except AuthError:
            raise  # abort the whole run, do not report per-item
        except (RemoteError, InputError, OSError) as exc:
            return exc

    if to_fetch:
        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            for item, outcome in zip(to_fetch, pool.map(fetch_guarded, to_fetch)):
                if isinstance(outcome, ImageRecord):
                    summary.downloaded += 1
                    records.append(outcome)
                else:
                    log.error("failed to fetch %r: %s", item[0], outcome)
                    summary.failures.append((item[0], str(outcome)))

    records.sort(key=lambda r: r.image_id)
    classes = sorted({a.species for r in records for a in r.annotations})
    manifest = Manifest(classes=classes, records=records)
    save_manifest(manifest_path, manifest)
    return manifest, summary

"""HTTP bundle transport: publish/stage containers to any web repository.

The protocol is two verbs: PUT ``{base}/{digest}`` uploads a bundle named
by the SHA-256 of its bytes, GET of that URL retrieves it.  Pulls verify
the digest before anything is imported, so a tampered bundle is rejected.
"""

from __future__ import annotations

import hashlib
import logging
import time
import urllib.error
import urllib.request

from .container import Sciunit, export_bundle, import_bundle
from .errors import ConfigError, CorruptionError, TransportError

log = logging.getLogger(__name__)

RETRIES = 3
BACKOFF_SECONDS = 0.2


def _request(req: urllib.request.Request) -> bytes:
    last_error = None
    for attempt in range(RETRIES):
        try:
            with urllib.request.urlopen(req, timeout=30) as resp:
                return resp.read()
        except urllib.error.HTTPError as exc:
            if exc.code < 500:
                raise TransportError(
                    f"{req.get_method()} {req.full_url}: HTTP {exc.code}") from exc
            last_error = exc
        except urllib.error.URLError as exc:
            last_error = exc
        if attempt < RETRIES - 1:
            time.sleep(BACKOFF_SECONDS * (2 ** attempt))
    raise TransportError(
        f"{req.get_method()} {req.full_url} failed after {RETRIES} attempts: "
        f"{last_error}")


def push(sciunit: Sciunit, execution_id: str, repository_url: str) -> str:
    """Upload one execution's bundle; returns the resource URL."""
    if not repository_url:
        raise ConfigError("no repository_url configured")
    bundle = export_bundle(sciunit, execution_id)
    digest = hashlib.sha256(bundle).hexdigest()
    url = repository_url.rstrip("/") + "/" + digest
    req = urllib.request.Request(url, data=bundle, method="PUT",
                                 headers={"Content-Type": "application/octet-stream"})
    _request(req)
    log.info("pushed %s (%d bytes) to %s", execution_id[:12], len(bundle), url)
    return url


def pull(sciunit: Sciunit, url: str):
    """Download, digest-verify, and import a bundle; returns its manifest."""
    expected = url.rstrip("/").rsplit("/", 1)[-1]
    payload = _request(urllib.request.Request(url, method="GET"))
    actual = hashlib.sha256(payload).hexdigest()
    if len(expected) == 64 and actual != expected:
        raise CorruptionError(
            f"bundle digest mismatch: expected {expected}, got {actual}",
            digests=[expected])
    return import_bundle(sciunit, payload)

"""HTTP transport for concrete requests."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Mapping
from urllib.parse import urljoin, urlsplit

import requests

from .errors import NetworkError

if TYPE_CHECKING:
    from .testgen import ConcreteRequest

log = logging.getLogger(__name__)

MAX_REDIRECTS = 3


def classify(status: int) -> str:
    if 200 <= status <= 299:
        return "2xx"
    if 400 <= status <= 499:
        return "4xx"
    if 500 <= status <= 599:
        return "5xx"
    return "other"


@dataclass
class HttpExchange:
    request: "ConcreteRequest"
    status: int
    status_class: str
    response_body: Any = None
    latency_ms: float = 0.0
    timestamp: float = 0.0
    parse_error: str | None = None
    error: str | None = None
    index: int = -1

    @property
    def ok(self) -> bool:
        return self.status_class == "2xx"

    @classmethod
    def failed(cls, request: "ConcreteRequest", error: str) -> "HttpExchange":
        return cls(request, 0, "other", None, 0.0, time.time(), error=error)


def parse_body(content: bytes, content_type: str = "") -> tuple[Any, str | None]:
    """Decode a response body: JSON when possible, else text, else raw bytes."""
    if not content:
        return None, None
    try:
        return json.loads(content), None
    except ValueError as exc:
        err = f"not JSON: {exc}" if "json" in content_type else None
    try:
        return content.decode("utf-8"), err
    except UnicodeDecodeError:
        return content, err or "binary body"


def _origin(url: str) -> tuple[str, str]:
    parts = urlsplit(url)
    return parts.scheme, parts.netloc


class HttpExecutor:
    """Send :class:`ConcreteRequest` objects to one API under test.

    Redirects are followed manually, up to three hops and only within the
    origin of ``base_url``. A connection reset is retried once; HTTP status
    codes are never retried here.
    """

    def __init__(
        self,
        base_url: str,
        headers: Mapping[str, str] | None = None,
        timeout: float = 10.0,
        session: requests.Session | None = None,
    ):
        if not base_url:
            raise ValueError("base_url is required")
        self.base_url = base_url.rstrip("/")
        self.headers = dict(headers or {})
        self.timeout = timeout
        self.session = session or requests.Session()
        self.requests_sent = 0

    def url_for(self, req: "ConcreteRequest") -> str:
        return self.base_url + req.url

    def _send_once(self, method: str, url: str, req: "ConcreteRequest", with_body: bool) -> requests.Response:
        headers = {"Accept": "application/json", **self.headers, **req.headers}
        kwargs: dict[str, Any] = {
            "params": req.query or None,
            "headers": headers,
            "timeout": self.timeout,
            "allow_redirects": False,
        }
        if with_body and req.body is not None:
            kwargs["json"] = req.body
        for attempt in (0, 1):
            try:
                self.requests_sent += 1
                return self.session.request(method, url, **kwargs)
            except requests.Timeout as exc:
                raise NetworkError(f"timeout after {self.timeout}s: {method} {url}") from exc
            except requests.ConnectionError as exc:
                if attempt == 0 and _is_reset(exc):
                    log.debug("connection reset on %s %s, retrying once", method, url)
                    continue
                raise NetworkError(f"cannot reach {url}: {exc}") from exc
            except requests.RequestException as exc:
                raise NetworkError(str(exc)) from exc
        raise AssertionError("unreachable")

    def execute(self, req: "ConcreteRequest") -> HttpExchange:
        url = self.url_for(req)
        method = req.method
        with_body = True
        start = time.perf_counter()
        stamp = time.time()
        resp = self._send_once(method, url, req, with_body)
        hops = 0
        while resp.is_redirect and hops < MAX_REDIRECTS:
            target = urljoin(url, resp.headers.get("Location", ""))
            if _origin(target) != _origin(self.base_url):
                break
            if resp.status_code in (301, 302, 303) and method != "HEAD":
                method, with_body = "GET", False
            url = target
            resp = self._send_once(method, url, req, with_body)
            hops += 1
        latency = (time.perf_counter() - start) * 1000.0
        body, err = parse_body(resp.content, resp.headers.get("Content-Type", ""))
        return HttpExchange(req, resp.status_code, classify(resp.status_code), body, latency, stamp, err)

    def close(self) -> None:
        self.session.close()


def _is_reset(exc: Exception) -> bool:
    text = repr(exc).lower()
    return "reset" in text or "aborted" in text or "remotedisconnected" in text

"""In-process users/books API with a switchable mass-assignment flaw.

Vulnerable mode reproduces the auto-binding misconfiguration on two
operations: registration binds ``admin`` and the user update binds
``credits``. Everything else ignores undocumented body fields. Safe mode
either rejects undocumented fields with 400 (strict) or silently drops
them (lenient).

The server is a plain single-threaded ``HTTPServer`` and closes every
connection after one response, so request handling is strictly serialized.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, HTTPServer
from importlib import resources
from typing import Any
from urllib.parse import parse_qs, unquote, urlsplit

from ..errors import MassgateError

log = logging.getLogger(__name__)

SAFE, VULNERABLE = "safe", "vulnerable"

SEED_USERS = (
    {"username": "name1", "email": "mail1@mail.com", "password": "pass1", "admin": False, "credits": 0},
    {"username": "admin", "email": "admin@mail.com", "password": "pass2", "admin": True, "credits": 100},
)
SEED_BOOKS = ({"id": 1, "title": "bookTitle77", "owner": "name1"},)

# documented body fields per operation
_REGISTER_FIELDS = {"username", "email", "password"}
_UPDATE_FIELDS = {"email", "password"}
_BOOK_FIELDS = {"title"}
# the misconfiguration: operation -> extra stored columns it auto-binds
_VULNERABLE_BINDINGS = {"register_user": {"admin"}, "update_user": {"credits"}}
_COLUMN_TYPES = {"admin": bool, "credits": int}


class BindError(MassgateError):
    pass


def spec_text() -> str:
    """The fixture's OpenAPI document (identical for every mode)."""
    return resources.files(__package__).joinpath("openapi.yaml").read_text(encoding="utf-8")


def spec_bytes() -> bytes:
    return resources.files(__package__).joinpath("openapi.yaml").read_bytes()


@dataclass
class FixtureState:
    mode: str = SAFE
    strict: bool = True
    force_status: int | None = None
    users: dict[str, dict] = field(default_factory=dict)
    books: dict[int, dict] = field(default_factory=dict)
    next_book_id: int = 2
    request_count: int = 0

    def __post_init__(self):
        if self.mode not in (SAFE, VULNERABLE):
            raise ValueError(f"mode must be {SAFE!r} or {VULNERABLE!r}")
        self.reset()

    def reset(self) -> None:
        """Restore the seed data; idempotent."""
        self.users = {u["username"]: copy.deepcopy(u) for u in SEED_USERS}
        self.books = {b["id"]: copy.deepcopy(b) for b in SEED_BOOKS}
        self.next_book_id = max(self.books) + 1

    def snapshot(self) -> dict:
        return {"users": copy.deepcopy(self.users), "books": copy.deepcopy(self.books)}


def _public_user(u: dict) -> dict:
    return {k: u[k] for k in ("username", "email", "admin", "credits")}


class _Reply(Exception):
    def __init__(self, status: int, body: Any = None):
        self.status = status
        self.body = body


def _error(status: int, message: str) -> _Reply:
    return _Reply(status, {"error": message})


class FixtureApp:
    """Routing and business logic, independent of the HTTP plumbing."""

    def __init__(self, state: FixtureState):
        self.state = state

    def handle(self, method: str, target: str, body: Any) -> tuple[int, Any]:
        self.state.request_count += 1
        if self.state.force_status is not None:
            return self.state.force_status, {"error": "forced status"}
        parts = urlsplit(target)
        segs = [unquote(s) for s in parts.path.strip("/").split("/") if s]
        query = parse_qs(parts.query)
        try:
            return 200, self._route(method, segs, query, body)
        except _Reply as reply:
            return reply.status, reply.body

    def _route(self, method: str, segs: list[str], query: dict, body: Any) -> Any:
        s = self.state
        match (method, segs):
            case ("GET", ["users"]):
                return [_public_user(u) for u in s.users.values()]
            case ("POST", ["users", "register"]):
                return self._register(body)
            case ("GET", ["users", name]):
                return _public_user(self._user(name))
            case ("PUT", ["users", name]):
                return self._update(self._user(name), body)
            case ("DELETE", ["users", name]):
                self._user(name)
                del s.users[name]
                raise _Reply(204)
            case ("GET", ["books"]):
                return list(s.books.values())
            case ("POST", ["books"]):
                return self._add_book(body)
            case ("GET", ["books", bid]):
                return self._book(bid)
            case ("DELETE", ["books", bid]):
                del s.books[self._book(bid)["id"]]
                raise _Reply(204)
            case ("GET", ["crash"]):
                raise _error(500, "unhandled exception")
            case ("POST", ["reset"]):
                s.reset()
                return {"status": "reset"}
            case ("GET", ["slow"]):
                ms = int((query.get("ms") or ["1000"])[0])
                time.sleep(ms / 1000.0)
                return {"slept_ms": ms}
            case (_, ["users" | "books" | "crash" | "reset" | "slow", *_]):
                raise _error(405, "method not allowed")
        raise _error(404, "no such route")

    # -- helpers

    def _user(self, name: str) -> dict:
        user = self.state.users.get(name)
        if user is None:
            raise _error(404, f"user {name!r} not found")
        return user

    def _book(self, raw_id: str) -> dict:
        try:
            book = self.state.books.get(int(raw_id))
        except ValueError:
            raise _error(400, "book id must be an integer") from None
        if book is None:
            raise _error(404, f"book {raw_id} not found")
        return book

    def _object(self, body: Any) -> dict:
        if not isinstance(body, dict):
            raise _error(400, "expected a JSON object")
        return body

    def _undocumented(self, body: dict, documented: set[str], op: str) -> dict:
        """Extra fields to bind, after enforcing the mode's policy on the rest."""
        extra = set(body) - documented
        s = self.state
        bound = _VULNERABLE_BINDINGS.get(op, set()) if s.mode == VULNERABLE else set()
        if s.mode == SAFE and s.strict and extra:
            raise _error(400, f"unexpected fields: {sorted(extra)}")
        out = {}
        for name in sorted(extra & bound):
            value = body[name]
            kind = _COLUMN_TYPES[name]
            if kind is bool and not isinstance(value, bool):
                raise _error(400, f"{name} must be a boolean")
            if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
                raise _error(400, f"{name} must be an integer")
            out[name] = value
        return out

    def _register(self, body: Any) -> dict:
        body = self._object(body)
        for key in ("username", "email", "password"):
            if not isinstance(body.get(key), str) or not body[key]:
                raise _error(400, f"{key} is required")
        bound = self._undocumented(body, _REGISTER_FIELDS, "register_user")
        name = body["username"]
        if name in self.state.users:
            raise _error(409, "user already exists")
        user = {"username": name, "email": body["email"], "password": body["password"], "admin": False, "credits": 0}
        user.update(bound)
        self.state.users[name] = user
        raise _Reply(201, {"username": name, "email": user["email"]})

    def _update(self, user: dict, body: Any) -> dict:
        body = self._object(body)
        for key in ("email", "password"):
            if key in body and not isinstance(body[key], str):
                raise _error(400, f"{key} must be a string")
        bound = self._undocumented(body, _UPDATE_FIELDS, "update_user")
        for key in ("email", "password"):
            if key in body:
                user[key] = body[key]
        user.update(bound)
        return {"username": user["username"], "email": user["email"]}

    def _add_book(self, body: Any) -> dict:
        body = self._object(body)
        if not isinstance(body.get("title"), str) or not body["title"]:
            raise _error(400, "title is required")
        self._undocumented(body, _BOOK_FIELDS, "add_book")
        s = self.state
        book = {"id": s.next_book_id, "title": body["title"], "owner": "name1"}
        s.books[book["id"]] = book
        s.next_book_id += 1
        raise _Reply(201, {"id": book["id"], "title": book["title"]})


class _Handler(BaseHTTPRequestHandler):
    server_version = "fixture/1"
    protocol_version = "HTTP/1.1"
    app: FixtureApp  # set per server

    def log_message(self, fmt, *args):
        log.debug("%s - %s", self.address_string(), fmt % args)

    def _dispatch(self):
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        body: Any = None
        if raw:
            try:
                body = json.loads(raw)
            except ValueError:
                self._send(400, {"error": "malformed JSON"})
                return
        status, payload = self.server.app.handle(self.command, self.path, body)
        self._send(status, payload)

    def _send(self, status: int, payload: Any) -> None:
        data = b"" if payload is None or status == 204 else json.dumps(payload).encode()
        self.send_response(status)
        if data:
            self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.send_header("Connection", "close")
        self.end_headers()
        self.wfile.write(data)
        self.close_connection = True

    do_GET = do_POST = do_PUT = do_DELETE = do_PATCH = _dispatch


class _Server(HTTPServer):
    allow_reuse_address = True

    def __init__(self, addr, app: FixtureApp):
        self.app = app
        super().__init__(addr, _Handler)


class FixtureServer:
    """Handle for a running fixture; usable as a context manager."""

    def __init__(self, state: FixtureState, host: str = "127.0.0.1", port: int = 0):
        self.state = state
        try:
            self._httpd = _Server((host, port), FixtureApp(state))
        except OSError as exc:
            raise BindError(f"cannot bind {host}:{port}: {exc}") from exc
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def url(self) -> str:
        return f"http://{self._httpd.server_address[0]}:{self.port}"

    def start(self) -> "FixtureServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, kwargs={"poll_interval": 0.05}, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def reset(self) -> None:
        self.state.reset()

    def __enter__(self) -> "FixtureServer":
        return self if self._thread else self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def serve(
    mode: str = SAFE,
    port: int = 0,
    *,
    strict: bool = True,
    force_status: int | None = None,
    host: str = "127.0.0.1",
) -> FixtureServer:
    """Start a fixture in a background thread and return its handle."""
    state = FixtureState(mode=mode, strict=strict, force_status=force_status)
    return FixtureServer(state, host, port).start()


def reset(state: FixtureState) -> None:
    state.reset()


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="massgate-fixture", description="Run the bundled fixture API.")
    parser.add_argument("--mode", choices=(SAFE, VULNERABLE), default=SAFE)
    parser.add_argument("--port", type=int, default=5000)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--lenient", action="store_true", help="safe mode: ignore undocumented fields instead of 400")
    parser.add_argument("--force-status", type=int, default=None, help="answer every request with this status")
    parser.add_argument("--print-spec", action="store_true", help="print the OpenAPI document and exit")
    args = parser.parse_args(argv)
    if args.print_spec:
        print(spec_text(), end="")
        return 0
    state = FixtureState(mode=args.mode, strict=not args.lenient, force_status=args.force_status)
    try:
        server = FixtureServer(state, args.host, args.port)
    except BindError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"fixture ({args.mode}{'' if state.strict else ', lenient'}) listening on {server.url}", flush=True)
    try:
        server._httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server._httpd.server_close()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

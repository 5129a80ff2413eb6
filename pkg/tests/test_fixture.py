import json
import urllib.request

import pytest

from massgate.fixture import (
    SEED_USERS,
    BindError,
    FixtureApp,
    FixtureServer,
    FixtureState,
    reset,
    serve,
    spec_bytes,
    spec_text,
)
from massgate.spec_model import parse_spec


def call(app, method, target, body=None):
    return app.handle(method, target, body)


def test_reset_is_idempotent():
    state = FixtureState("vulnerable")
    app = FixtureApp(state)
    call(app, "POST", "/users/register", {"username": "u", "email": "e", "password": "p", "admin": True})
    call(app, "DELETE", "/books/1")
    reset(state)
    once = state.snapshot()
    reset(state)
    assert state.snapshot() == once
    assert set(once["users"]) == {u["username"] for u in SEED_USERS}
    assert 1 in once["books"]


def test_reset_endpoint():
    state = FixtureState()
    app = FixtureApp(state)
    call(app, "DELETE", "/users/name1")
    assert call(app, "POST", "/reset") == (200, {"status": "reset"})
    assert "name1" in state.users


@pytest.mark.parametrize(
    "mode, strict, status, admin",
    [("vulnerable", True, 201, True), ("safe", True, 400, None), ("safe", False, 201, False)],
)
def test_register_modes(mode, strict, status, admin):
    app = FixtureApp(FixtureState(mode, strict=strict))
    got, _ = call(app, "POST", "/users/register", {"username": "u1", "email": "e", "password": "p", "admin": True})
    assert got == status
    if admin is not None:
        assert call(app, "GET", "/users/u1")[1]["admin"] is admin


def test_vulnerable_bindings_are_per_operation():
    app = FixtureApp(FixtureState("vulnerable"))
    call(app, "POST", "/users/register", {"username": "u1", "email": "e", "password": "p", "credits": 999})
    assert call(app, "GET", "/users/u1")[1]["credits"] == 0
    call(app, "PUT", "/users/u1", {"admin": True, "credits": 7})
    user = call(app, "GET", "/users/u1")[1]
    assert user["admin"] is False and user["credits"] == 7
    assert call(app, "PUT", "/users/u1", {"credits": "lots"})[0] == 400


def test_routes_and_errors():
    app = FixtureApp(FixtureState())
    assert call(app, "GET", "/users")[0] == 200
    assert call(app, "GET", "/users/ghost")[0] == 404
    assert call(app, "GET", "/books/abc")[0] == 400
    assert call(app, "PATCH", "/users")[0] == 405
    assert call(app, "GET", "/nowhere")[0] == 404
    assert call(app, "GET", "/crash")[0] == 500
    assert call(app, "POST", "/users/register", ["not", "object"])[0] == 400
    assert call(app, "POST", "/books", {"title": "t"}) == (201, {"id": 2, "title": "t"})
    assert "password" not in call(app, "GET", "/users/name1")[1]


def test_force_status():
    state = FixtureState(force_status=400)
    assert call(FixtureApp(state), "GET", "/users")[0] == 400
    assert state.request_count == 1


def test_bad_mode():
    with pytest.raises(ValueError):
        FixtureState("chaotic")


def test_spec_is_shared_and_valid():
    assert spec_bytes().decode() == spec_text()
    spec = parse_spec(spec_text())
    assert {op.operation_id for op in spec.operations} >= {"register_user", "update_user", "list_users"}


def test_server_over_http():
    with serve("vulnerable") as srv:
        with urllib.request.urlopen(srv.url + "/users") as resp:
            assert resp.headers["Connection"] == "close"
            assert len(json.loads(resp.read())) == 2
        req = urllib.request.Request(srv.url + "/users/register", data=b"{bad", method="POST",
                                     headers={"Content-Type": "application/json"})
        with pytest.raises(urllib.error.HTTPError) as info:
            urllib.request.urlopen(req)
        assert info.value.code == 400


def test_port_in_use():
    with serve() as srv:
        with pytest.raises(BindError):
            FixtureServer(FixtureState(), port=srv.port)


def test_main_reports_bind_error(capsys):
    from massgate.fixture.server import main

    with serve() as srv:
        assert main(["--port", str(srv.port)]) == 1
    assert "cannot bind" in capsys.readouterr().err

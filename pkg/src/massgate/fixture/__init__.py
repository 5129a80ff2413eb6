"""Bundled fixture API used by the acceptance suite and demos."""

from .server import (
    SAFE,
    SEED_BOOKS,
    SEED_USERS,
    VULNERABLE,
    BindError,
    FixtureApp,
    FixtureServer,
    FixtureState,
    reset,
    serve,
    spec_bytes,
    spec_text,
)

__all__ = [
    "SAFE",
    "SEED_BOOKS",
    "SEED_USERS",
    "VULNERABLE",
    "BindError",
    "FixtureApp",
    "FixtureServer",
    "FixtureState",
    "reset",
    "serve",
    "spec_bytes",
    "spec_text",
]

"""Input-value synthesis for request parameters.

Documented values (examples, default, enum) are tried first; after that,
values are drawn at random to match the declared ``format``, a format guessed
from the field name, or just the JSON kind. All randomness comes from the
``random.Random`` passed in, so a fixed seed reproduces every value.
"""

from __future__ import annotations

import base64
import datetime as dt
import random
import string
import uuid
from typing import Any, Callable

from .spec_model import SchemaNode
from .stemmer import split_name

_ALNUM = string.ascii_lowercase + string.digits
_EPOCH = dt.datetime(2020, 1, 1, tzinfo=dt.timezone.utc)
_WORDS = ("alpha", "bravo", "cedar", "delta", "ember", "fjord", "gamma", "harbor", "indigo", "juniper")
_TLDS = ("com", "org", "net", "io")


def _token(rng: random.Random, n: int = 8) -> str:
    return "".join(rng.choice(_ALNUM) for _ in range(n))


def _instant(rng: random.Random) -> dt.datetime:
    return _EPOCH + dt.timedelta(seconds=rng.randrange(0, 5 * 365 * 86400))


def _email(rng):
    return f"{_token(rng, 8)}@{_token(rng, 6)}.{rng.choice(_TLDS)}"


def _date(rng):
    return _instant(rng).date().isoformat()


def _datetime(rng):
    return _instant(rng).strftime("%Y-%m-%dT%H:%M:%SZ")


def _time(rng):
    return _instant(rng).strftime("%H:%M:%S")


def _uuid(rng):
    return str(uuid.UUID(int=rng.getrandbits(128), version=4))


def _url(rng):
    return f"https://{_token(rng, 6)}.{rng.choice(_TLDS)}/{_token(rng, 5)}"


def _phone(rng):
    return "+1" + "".join(rng.choice(string.digits) for _ in range(10))


def _ipv4(rng):
    return ".".join(str(rng.randint(1, 254)) for _ in range(4))


def _ipv6(rng):
    return ":".join(f"{rng.getrandbits(16):x}" for _ in range(8))


def _hostname(rng):
    return f"{_token(rng, 6)}.{_token(rng, 5)}.{rng.choice(_TLDS)}"


def _username(rng):
    return f"{rng.choice(_WORDS)}_{_token(rng, 6)}"


def _password(rng):
    core = _token(rng, 10)
    return f"{core[:5].upper()}{core[5:]}!{rng.randint(10, 99)}"


def _color(rng):
    return f"#{rng.getrandbits(24):06x}"


def _country(rng):
    return rng.choice(("IT", "US", "DE", "FR", "JP", "BR", "IN", "CA"))


def _currency(rng):
    return rng.choice(("EUR", "USD", "GBP", "JPY", "CHF", "CAD"))


def _iban(rng):
    return "IT60X0542811101" + "".join(rng.choice(string.digits) for _ in range(12))


def _zipcode(rng):
    return f"{rng.randint(10000, 99999)}"


def _latitude(rng):
    return round(rng.uniform(-90.0, 90.0), 6)


def _longitude(rng):
    return round(rng.uniform(-180.0, 180.0), 6)


def _mimetype(rng):
    return rng.choice(("application/json", "text/plain", "image/png", "text/html"))


def _locale(rng):
    return rng.choice(("en_US", "it_IT", "de_DE", "fr_FR", "ja_JP"))


def _semver(rng):
    return f"{rng.randint(0, 9)}.{rng.randint(0, 20)}.{rng.randint(0, 50)}"


def _slug(rng):
    return f"{rng.choice(_WORDS)}-{rng.choice(_WORDS)}-{_token(rng, 4)}"


def _byte(rng):
    return base64.b64encode(bytes(rng.getrandbits(8) for _ in range(9))).decode()


GENERATORS: dict[str, Callable[[random.Random], Any]] = {
    "email": _email,
    "date": _date,
    "date-time": _datetime,
    "time": _time,
    "uuid": _uuid,
    "url": _url,
    "uri": _url,
    "phone": _phone,
    "ipv4": _ipv4,
    "ipv6": _ipv6,
    "hostname": _hostname,
    "username": _username,
    "password": _password,
    "color": _color,
    "country": _country,
    "currency": _currency,
    "iban": _iban,
    "zipcode": _zipcode,
    "latitude": _latitude,
    "longitude": _longitude,
    "mimetype": _mimetype,
    "locale": _locale,
    "semver": _semver,
    "slug": _slug,
    "byte": _byte,
}

# substring of a lower-cased, separator-free field name -> generator key;
# checked in order, so more specific keys come first
_NAME_HINTS = (
    ("email", "email"),
    ("mail", "email"),
    ("datetime", "date-time"),
    ("timestamp", "date-time"),
    ("createdat", "date-time"),
    ("updatedat", "date-time"),
    ("birthdate", "date"),
    ("date", "date"),
    ("uuid", "uuid"),
    ("guid", "uuid"),
    ("url", "url"),
    ("uri", "url"),
    ("website", "url"),
    ("link", "url"),
    ("phone", "phone"),
    ("mobile", "phone"),
    ("ipv6", "ipv6"),
    ("ipaddress", "ipv4"),
    ("ip", "ipv4"),
    ("hostname", "hostname"),
    ("host", "hostname"),
    ("domain", "hostname"),
    ("username", "username"),
    ("login", "username"),
    ("password", "password"),
    ("passwd", "password"),
    ("colour", "color"),
    ("color", "color"),
    ("country", "country"),
    ("currency", "currency"),
    ("iban", "iban"),
    ("zip", "zipcode"),
    ("postcode", "zipcode"),
    ("postalcode", "zipcode"),
    ("latitude", "latitude"),
    ("lat", "latitude"),
    ("longitude", "longitude"),
    ("lng", "longitude"),
    ("lon", "longitude"),
    ("mimetype", "mimetype"),
    ("contenttype", "mimetype"),
    ("locale", "locale"),
    ("language", "locale"),
    ("version", "semver"),
    ("slug", "slug"),
    ("time", "time"),
)

_NUMERIC_FORMATS = {"latitude", "longitude"}


def infer_format(name: str) -> str | None:
    key = "".join(ch for ch in name.lower() if ch.isalnum())
    if not key:
        return None
    for hint, fmt in _NAME_HINTS:
        if hint in key:
            # short hints must match a whole word, e.g. not "ship" for "ip"
            if len(hint) <= 3 and key != hint and not _word_match(name.lower(), hint):
                continue
            return fmt
    return None


def _word_match(name: str, hint: str) -> bool:
    return hint in split_name(name)


def _generic(schema: SchemaNode, rng: random.Random) -> Any:
    if schema.kind == "boolean":
        return rng.random() < 0.5
    if schema.kind == "integer":
        lo = int(schema.minimum) if schema.minimum is not None else 0
        hi = int(schema.maximum) if schema.maximum is not None else max(lo, 0) + 10000
        return rng.randint(lo, max(lo, hi))
    if schema.kind == "number":
        lo = float(schema.minimum) if schema.minimum is not None else 0.0
        hi = float(schema.maximum) if schema.maximum is not None else lo + 10000.0
        return round(rng.uniform(lo, hi), 3)
    if schema.kind == "array":
        return [random_value(schema.items, "", rng)]
    if schema.kind == "object":
        return {k: random_value(v, k, rng) for k, v in schema.properties.items()}
    return _token(rng)


def _coerce(value: Any, kind: str) -> Any:
    if kind == "string":
        return str(value)
    if kind in ("integer", "number") and isinstance(value, (int, float)) and not isinstance(value, bool):
        return int(value) if kind == "integer" else value
    return None


def random_value(schema: SchemaNode, name: str, rng: random.Random) -> Any:
    """A random value matching ``schema``, ignoring documented values (enum aside)."""
    if schema.enum_values:
        return rng.choice(list(schema.enum_values))
    if not schema.is_scalar:
        return _generic(schema, rng)
    for fmt in (schema.format, infer_format(name)):
        if fmt and fmt in GENERATORS:
            if schema.kind != "string" and fmt not in _NUMERIC_FORMATS:
                continue
            value = _coerce(GENERATORS[fmt](rng), schema.kind)
            if value is not None:
                return value
    return _generic(schema, rng)


def synthesize_value(schema: SchemaNode, name: str, rng: random.Random, documented: bool = True) -> Any:
    """Value for one input field.

    With ``documented`` set, spec examples come first, then the default, then
    an enum member. Otherwise (retries after failed attempts) a fresh random
    value is drawn.
    """
    if documented:
        if schema.example_values:
            return schema.example_values[0]
        if schema.has_default:
            return schema.default_value
        if schema.enum_values:
            return schema.enum_values[0]
    return random_value(schema, name, rng)


def distinct_pair(schema: SchemaNode, name: str, rng: random.Random) -> tuple[Any, Any] | None:
    """Two distinct injection values for a read-only field, or None if impossible."""
    if schema.kind == "boolean":
        return (True, False)
    if schema.enum_values:
        members = list(dict.fromkeys(schema.enum_values))
        if len(members) < 2:
            return None
        first, second = rng.sample(members, 2)
        return (first, second)
    first = random_value(schema, name, rng)
    for _ in range(100):
        second = random_value(schema, name, rng)
        if second != first:
            return (first, second)
    return None

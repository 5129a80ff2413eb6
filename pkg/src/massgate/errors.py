"""Exception hierarchy shared across the package."""


class MassgateError(Exception):
    """Base class for all tool errors (mapped to exit code 1 by the CLI)."""


class ParseError(MassgateError):
    pass


class UnresolvedRef(ParseError):
    pass


class UnsupportedVersion(ParseError):
    pass


class RecursionLimit(MassgateError):
    pass


class UnknownOperation(MassgateError):
    pass


class InvalidAnnotationValue(MassgateError):
    pass


class EmptyVocabulary(MassgateError):
    pass


class TemplateNotApplicable(MassgateError):
    pass


class InstantiationFailed(MassgateError):
    """A template could not be realized within the attempt budgets."""

    def __init__(self, message: str, requests_sent: int = 0, exchanges: list | None = None):
        super().__init__(message)
        self.requests_sent = requests_sent
        self.exchanges = exchanges or []


class IdNotFound(MassgateError):
    pass


class NetworkError(MassgateError):
    pass


class FieldMissingInResponse(MassgateError):
    pass


class TruthSchemaError(MassgateError):
    pass

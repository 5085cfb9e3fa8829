"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: configuration problems exit 2, data
problems exit 3, runtime/numeric problems exit 4.
"""


class ConfigurationError(Exception):
    """Invalid configuration or mismatched model/batch shapes."""


class DataError(Exception):
    """Problems with corpus files or label data."""


class ConllParseError(DataError):
    """Malformed line in a CoNLL column file."""

    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


class UnknownTagError(DataError):
    """Tag not present in the label scheme."""

    def __init__(self, tag: str, lineno: int | None = None):
        where = f" at line {lineno}" if lineno is not None else ""
        super().__init__(f"unknown tag {tag!r}{where}")
        self.tag = tag
        self.lineno = lineno


class DegenerateInputError(ValueError):
    """An operation received an input it is undefined for (empty set, all-sentinel batch, zero vector)."""

"""Exception hierarchy shared by the resplit library and CLI."""


class ResplitError(Exception):
    """Base class for every error raised by resplit."""


class NotebookFormatError(ResplitError):
    """The target file is not a notebook resplit can read."""


class MalformedJson(NotebookFormatError):
    """The document is not valid UTF-8 JSON or lacks the nbformat structure."""


class UnsupportedFormat(NotebookFormatError):
    """The notebook uses an nbformat major version other than 4."""


class StalePlan(ResplitError):
    """A merge or split plan was applied to a notebook it was not computed for."""


class ConfigError(ResplitError):
    """A configuration file could not be read or failed validation."""

"""Exception classes shared across the package.

The CLI maps each family to its own exit code, see ``cmsanet.cli``.
"""


class CMSAError(Exception):
    """Base class for all package errors."""


class DimensionError(CMSAError, ValueError):
    """Tensor extents do not agree with what an operation requires."""


class UsageError(CMSAError, ValueError):
    """An API was called in a way it does not support."""


class VocabularyError(CMSAError, KeyError):
    """A token id or word falls outside the closed vocabulary."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class GenerationError(CMSAError, RuntimeError):
    """Synthetic scene generation gave up after its retry budget."""


class ParseError(CMSAError, ValueError):
    """A file on disk is malformed.

    ``path`` and ``line`` locate the problem when known.
    """

    def __init__(self, message, path=None, line=None):
        self.path = None if path is None else str(path)
        self.line = line
        where = ""
        if self.path is not None:
            where = self.path if line is None else f"{self.path}:{line}"
            where += ": "
        super().__init__(where + message)


class ConfigError(CMSAError, ValueError):
    """A run configuration is invalid or references unknown keys."""


class NumericError(CMSAError, ArithmeticError):
    """Non-finite values appeared, or a numeric check failed."""

"""Exception hierarchy and the CLI exit codes attached to it."""
from __future__ import annotations

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_GEOCODING = 4
EXIT_IO = 5


class GeolocEvalError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigError(GeolocEvalError):
    """Invalid configuration (bad flag values, missing files, bad thresholds)."""

    exit_code = EXIT_CONFIG


class InputError(GeolocEvalError):
    """Base for problems in user-supplied prediction or truth files."""

    exit_code = EXIT_INPUT


class ParseError(InputError):
    """Malformed input document; carries the offset where decoding failed."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
        self.offset = offset


class ValidationError(InputError):
    """Well-formed input with invalid content (bad coordinate, duplicate id)."""


class CoverageError(InputError):
    """A run does not cover the ground-truth document set under policy=error."""

    def __init__(self, system_name: str, missing_ids: list[str], sample_size: int = 10):
        sample = ", ".join(sorted(missing_ids)[:sample_size])
        more = len(missing_ids) - min(len(missing_ids), sample_size)
        suffix = f" (and {more} more)" if more > 0 else ""
        super().__init__(
            f"run {system_name!r} is missing {len(missing_ids)} ground-truth "
            f"document(s): {sample}{suffix}"
        )
        self.system_name = system_name
        self.missing_ids = missing_ids


class GeocodeError(GeolocEvalError):
    """Reverse geocoding could not complete (provider down, budget exhausted)."""

    exit_code = EXIT_GEOCODING


class CacheCorruptError(GeocodeError):
    """Cache file unreadable; re-run with --rebuild-cache to discard it."""

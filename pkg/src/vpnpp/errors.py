"""Exception hierarchy; the CLI maps these onto its exit codes."""

from __future__ import annotations


class VpnppError(Exception):
    """Base for all package-specific failures."""


class ConfigError(VpnppError):
    """Invalid or unparsable configuration (CLI exit code 2)."""


class MissingArtifactError(VpnppError):
    """A required upstream artifact (e.g. teacher checkpoint) is absent (exit 3)."""


class DataFormatError(VpnppError):
    """Malformed, truncated or inconsistent on-disk data (exit 4)."""


class DegenerateEmbeddingError(VpnppError):
    """An embedding collapsed to zero norm where a unit vector is required."""

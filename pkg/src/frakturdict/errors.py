"""Exception hierarchy shared across the pipeline.

Every error carries a stable ``code`` so the CLI and the HTTP service can
return machine-readable diagnostics without string matching.
"""

from __future__ import annotations

from typing import Any


class FrakturError(Exception):
    """Base class for all domain errors."""

    code = "error"

    def __init__(self, message: str, **details: Any) -> None:
        super().__init__(message)
        self.message = message
        self.details = details

    def as_dict(self) -> dict[str, Any]:
        return {"code": self.code, "message": self.message, "details": self.details}


# --- entry model -----------------------------------------------------------

class MalformedPayload(FrakturError):
    """Reply body could not be parsed as the expected format."""

    code = "malformed_payload"


class SchemaViolation(FrakturError):
    """Payload parsed but a required part of the schema is missing."""

    code = "schema_violation"


class XmlSyntax(FrakturError):
    """Input is not well-formed XML."""

    code = "xml_syntax"


class SubsetViolation(FrakturError):
    """XML is well formed but uses elements or attributes outside the frozen subset."""

    code = "subset_violation"


# --- tiler -----------------------------------------------------------------

class DegenerateGeometry(FrakturError):
    """Requested tiling would produce segments too small to be useful."""

    code = "degenerate_geometry"


class OutOfBounds(FrakturError):
    """Crop box lies outside the page or has zero area."""

    code = "out_of_bounds"


# --- gateway ---------------------------------------------------------------

class MissingPromptAsset(FrakturError):
    """Named prompt asset does not exist or is empty."""

    code = "missing_prompt_asset"


class ProviderError(FrakturError):
    """Provider kept failing after the retry budget was exhausted."""

    code = "provider_error"


class AuthError(FrakturError):
    """Provider credentials missing or rejected."""

    code = "auth_error"


class RefusalDetected(FrakturError):
    """Model declined the task; the refusal text is in ``message``."""

    code = "refusal_detected"


class UnknownModel(FrakturError):
    """Model id missing from the price table."""

    code = "unknown_model"


# --- merger ----------------------------------------------------------------

class EmptyFragmentSet(FrakturError):
    code = "empty_fragment_set"


# --- evaluator -------------------------------------------------------------

class EmptyReference(FrakturError):
    """CER is undefined against an empty reference string."""

    code = "empty_reference"


class SchemaMismatch(FrakturError):
    """Hypothesis and reference use different schemas."""

    code = "schema_mismatch"


class EmptyInput(FrakturError):
    code = "empty_input"


# --- batch manager ---------------------------------------------------------

class InvalidConfig(FrakturError):
    code = "invalid_config"


class UnreadableScan(FrakturError):
    code = "unreadable_scan"


class NothingToExport(FrakturError):
    code = "nothing_to_export"


class IllegalTransition(FrakturError):
    """Page is not in a state from which the requested action is legal."""

    code = "illegal_transition"


class UnknownId(FrakturError):
    """Job or page id not present in the store."""

    code = "unknown_id"

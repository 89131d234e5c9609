class ExportError(Exception):
    """Base class for export failures."""


class InputError(ExportError):
    """Raw manifest or corpus is malformed or missing."""


class EncoderError(ExportError):
    """A feature backend could not be constructed or applied."""

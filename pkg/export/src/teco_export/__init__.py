"""Offline export bridge: raw utterances -> teco feature bundles."""

from .errors import EncoderError, ExportError, InputError
from .export import ExportJob, ExportResult, load_corpus, run_export
from .hashed import HashedMediaEncoder, HashedTextEncoder

__all__ = [
    "EncoderError", "ExportError", "InputError",
    "ExportJob", "ExportResult", "load_corpus", "run_export",
    "HashedMediaEncoder", "HashedTextEncoder",
]

"""Deterministic hashed feature backends.

These stand in for the pretrained encoders in environments where the
real models cannot run (CI, air-gapped machines).  Every feature is a
pure function of its input string or bytes, so exports are bit-for-bit
reproducible.  The token-hashing scheme is the same one the downstream
training package uses for its hermetic test encoder, which keeps query
embeddings and store embeddings in a single, consistent space.
"""
from __future__ import annotations

import hashlib

import numpy as np

from .errors import EncoderError, InputError


def _seeded_normal(seed: int, shape, scale=1.0) -> np.ndarray:
    gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    return gen.normal(0.0, scale, size=shape).astype(np.float32)


def _hash_seed(*parts) -> int:
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "little")


class HashedTextEncoder:
    """Token-level features: each whitespace token hashes to a stable
    pseudorandom d-vector; rows are zero-padded / truncated to length."""

    name = "hashed-text"

    def __init__(self, length: int, dim: int, salt: int = 0):
        self.length = length
        self.dim = dim
        self.salt = salt

    def token_vec(self, token: str) -> np.ndarray:
        return _seeded_normal(_hash_seed(self.salt, token), (self.dim,))

    def __call__(self, sentence: str) -> np.ndarray:
        tokens = sentence.split()
        if not tokens:
            raise InputError("empty utterance")
        out = np.zeros((self.length, self.dim), dtype=np.float32)
        for i, tok in enumerate(tokens[: self.length]):
            out[i] = self.token_vec(tok)
        return out

    def n_tokens(self, sentence: str) -> int:
        return min(len(sentence.split()), self.length)

    def embed(self, sentence: str) -> np.ndarray:
        """Mean-pooled sentence embedding, for retrieval."""
        return self(sentence).mean(axis=0)


class HashedMediaEncoder:
    """Sequence features for a media file: seeded from the file's content
    hash, so re-encoding an unchanged file reproduces the same blob."""

    name = "hashed-media"

    def __init__(self, length: int, dim: int, salt: int = 0):
        self.length = length
        self.dim = dim
        self.salt = salt

    def __call__(self, path: str) -> np.ndarray:
        try:
            with open(path, "rb") as fh:
                payload = fh.read()
        except OSError as exc:
            raise EncoderError(f"undecodable media {path}: {exc}") from exc
        if not payload:
            raise EncoderError(f"undecodable media {path}: empty file")
        seed = _hash_seed(self.salt, hashlib.sha256(payload).hexdigest())
        return _seeded_normal(seed, (self.length, self.dim))

    def placeholder(self, record_id: str) -> np.ndarray:
        """Features for records that carry no media path at all."""
        return _seeded_normal(_hash_seed(self.salt, "placeholder", record_id),
                              (self.length, self.dim))

"""Commonsense relation retrieval and relation-feature assembly.

Generated phrases are ingested, not produced here.  Retrieval is an
exhaustive cosine-similarity scan over a store of precomputed sentence
embeddings; ties break to the lowest entry index.  Relation sentences
are rendered from fixed templates and encoded either by ingested
precomputed features or, in hermetic test mode, by a deterministic
hashed token embedding.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .bundle import RelationQuad
from .errors import DataError, ShapeError
from .rng import Rng

TEMPLATE_XREACT = "The speaker feels {}."
TEMPLATE_XWANT = "The speaker wants {}."


@dataclass
class RelationPhrasePair:
    xreact: str
    xwant: str
    source: str  # "generated" | "retrieved"
    score: float | None = None


class KnowledgeStore:
    """Immutable list of (sentence embedding, xReact phrase, xWant phrase)."""

    def __init__(self, embeddings: np.ndarray, xreact: list, xwant: list):
        emb = np.asarray(embeddings, dtype=np.float64)
        if emb.ndim != 2 or emb.shape[0] == 0:
            raise DataError(f"knowledge store needs >= 1 entry, got shape {emb.shape}")
        if np.isnan(emb).any():
            raise DataError("knowledge store embeddings contain NaN")
        if not (len(xreact) == len(xwant) == emb.shape[0]):
            raise DataError("knowledge store phrase/embedding counts differ")
        self.embeddings = emb
        self.xreact = list(xreact)
        self.xwant = list(xwant)

    def __len__(self):
        return self.embeddings.shape[0]

    @property
    def d_e(self):
        return self.embeddings.shape[1]


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ShapeError(f"cosine: shapes {a.shape} and {b.shape} differ")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DataError("cosine similarity undefined for a zero vector")
    return float(np.dot(a, b) / (na * nb))


def retrieve(query: np.ndarray, store: KnowledgeStore) -> RelationPhrasePair:
    """Argmax-cosine entry of the store; ties break to the lowest index."""
    q = np.asarray(query, dtype=np.float64).ravel()
    if q.shape[0] != store.d_e:
        raise ShapeError(
            f"query dim {q.shape[0]} != store dim {store.d_e}")
    nq = np.linalg.norm(q)
    if nq == 0.0:
        raise DataError("cosine similarity undefined for a zero vector")
    norms = np.linalg.norm(store.embeddings, axis=1)
    if (norms == 0.0).any():
        raise DataError("knowledge store contains a zero embedding")
    scores = store.embeddings @ q / (norms * nq)
    best = int(np.argmax(scores))  # np.argmax returns the first maximum
    return RelationPhrasePair(
        xreact=store.xreact[best],
        xwant=store.xwant[best],
        source="retrieved",
        score=float(scores[best]),
    )


def render_template(pair: RelationPhrasePair):
    if not pair.xreact or not pair.xwant:
        raise DataError("relation phrases must be non-empty")
    return TEMPLATE_XREACT.format(pair.xreact), TEMPLATE_XWANT.format(pair.xwant)


def assemble_quad(gen: RelationPhrasePair, ret: RelationPhrasePair,
                  encoder) -> RelationQuad:
    """Encode the four templated relation sentences in canonical order
    (generated xReact, generated xWant, retrieved xReact, retrieved xWant)."""
    gen_xr, gen_xw = render_template(gen)
    ret_xr, ret_xw = render_template(ret)
    encoded = [encoder(s) for s in (gen_xr, gen_xw, ret_xr, ret_xw)]
    shapes = {e.shape for e in encoded}
    if len(shapes) != 1 or encoded[0].ndim != 2:
        raise ShapeError(f"encoder produced inconsistent shapes: {shapes}")
    return RelationQuad(
        gen_xreact=encoded[0],
        gen_xwant=encoded[1],
        ret_xreact=encoded[2],
        ret_xwant=encoded[3],
        phrases={"gen_xreact": gen.xreact, "gen_xwant": gen.xwant,
                 "ret_xreact": ret.xreact, "ret_xwant": ret.xwant},
    )


class HashSentenceEncoder:
    """Deterministic toy sentence encoder for hermetic tests.

    Each whitespace token maps to a pseudorandom d-vector seeded from a
    stable hash of (salt, token); rows are zero-padded/truncated to a
    fixed sentence length.
    """

    def __init__(self, length: int, dim: int, salt: int = 0):
        self.length = length
        self.dim = dim
        self.salt = salt

    def _token_vec(self, token: str) -> np.ndarray:
        digest = hashlib.sha256(f"{self.salt}:{token}".encode()).digest()
        seed = int.from_bytes(digest[:8], "little")
        return Rng(seed).normal((self.dim,))

    def __call__(self, sentence: str) -> np.ndarray:
        tokens = sentence.split()
        if not tokens:
            raise DataError("cannot encode an empty sentence")
        out = np.zeros((self.length, self.dim), dtype=np.float32)
        for i, tok in enumerate(tokens[: self.length]):
            out[i] = self._token_vec(tok)
        return out

    def embed(self, sentence: str) -> np.ndarray:
        """Mean-pooled sentence embedding, for retrieval stores."""
        return self(sentence).mean(axis=0)


# -- store file I/O ---------------------------------------------------------
# One entry per line: comma-separated embedding floats, TAB, xReact
# phrase, TAB, xWant phrase.

def save_store(store: KnowledgeStore, path):
    with open(path, "w") as fh:
        for emb, xr, xw in zip(store.embeddings, store.xreact, store.xwant):
            emb_txt = ",".join(repr(float(v)) for v in emb)
            fh.write(f"{emb_txt}\t{xr}\t{xw}\n")


def load_store(path) -> KnowledgeStore:
    embs, xreact, xwant = [], [], []
    try:
        fh = open(path)
    except OSError as exc:
        raise DataError(f"missing knowledge store {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(
                    f"{path}:{lineno}: expected 3 tab-separated fields, "
                    f"got {len(parts)}")
            try:
                emb = np.array([float(v) for v in parts[0].split(",")])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad embedding: {exc}") from exc
            if not parts[1] or not parts[2]:
                raise DataError(f"{path}:{lineno}: empty relation phrase")
            embs.append(emb)
            xreact.append(parts[1])
            xwant.append(parts[2])
    if not embs:
        raise DataError(f"knowledge store {path} is empty")
    dims = {e.shape[0] for e in embs}
    if len(dims) != 1:
        raise DataError(f"knowledge store {path}: mixed embedding dims {dims}")
    return KnowledgeStore(np.stack(embs), xreact, xwant)

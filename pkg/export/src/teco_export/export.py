"""Export pipeline: raw utterance manifest -> feature bundle + store.

Reads a raw JSON manifest (utterance text, optional media paths, labels,
splits), runs the configured feature backends, retrieves commonsense
relation phrases from an event corpus, and writes the downstream
training package's bundle and knowledge-store files along with a
per-record export.log.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import EncoderError, ExportError, InputError
from .formats import SPLITS, write_bundle, write_store
from .hashed import HashedMediaEncoder, HashedTextEncoder

TEMPLATE_XREACT = "The speaker feels {}."
TEMPLATE_XWANT = "The speaker wants {}."
FALLBACK_PHRASE = "none"


@dataclass
class ExportJob:
    raw_manifest: str
    out_dir: str
    knowledge_out: str
    corpus: str
    backend: str = "hashed"
    # production-sized defaults; toy exports override all of these
    d: int = 768
    d_v: int = 256
    d_a: int = 768
    l_s: int = 30
    l_v: int = 230
    l_a: int = 480
    l_r: int = 30
    salt: int = 0

    def validate(self):
        for name in ("d", "d_v", "d_a", "l_s", "l_v", "l_a", "l_r"):
            if getattr(self, name) <= 0:
                raise InputError(f"{name} must be positive")
        if self.backend != "hashed":
            raise EncoderError(f"unknown backend {self.backend!r}")


@dataclass
class ExportResult:
    bundle_dir: str
    log_path: str
    n_exported: int
    n_skipped: int
    log_lines: list = field(default_factory=list)


def load_raw_manifest(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise InputError(f"missing raw manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"unparseable raw manifest {path}: {exc}") from exc
    if "class_names" not in doc or "utterances" not in doc:
        raise InputError(f"{path}: needs 'class_names' and 'utterances'")
    if not doc["utterances"]:
        raise InputError(f"{path}: no utterances")
    return doc


def load_corpus(path):
    """ATOMIC-style tuples, one per line: event TAB xReact TAB xWant."""
    events, xreact, xwant = [], [], []
    try:
        fh = open(path)
    except OSError as exc:
        raise InputError(f"missing corpus {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3 or not all(parts):
                raise InputError(
                    f"{path}:{lineno}: expected 'event<TAB>xReact<TAB>xWant'")
            events.append(parts[0])
            xreact.append(parts[1])
            xwant.append(parts[2])
    if not events:
        raise InputError(f"corpus {path} is empty")
    return events, xreact, xwant


def retrieve_nearest(query: np.ndarray, embeddings: np.ndarray) -> int:
    """Argmax cosine similarity; ties break to the lowest index (the
    same rule the training package's retriever applies)."""
    q = np.asarray(query, dtype=np.float64).ravel()
    emb = np.asarray(embeddings, dtype=np.float64)
    nq = np.linalg.norm(q)
    norms = np.linalg.norm(emb, axis=1)
    if nq == 0.0 or (norms == 0.0).any():
        raise ExportError("cosine similarity undefined for a zero vector")
    return int(np.argmax(emb @ q / (norms * nq)))


def _label_index(label, class_names, rid):
    if isinstance(label, str):
        if label not in class_names:
            raise InputError(f"record {rid}: unknown class name {label!r}")
        return class_names.index(label)
    if not 0 <= int(label) < len(class_names):
        raise InputError(f"record {rid}: label {label} out of range")
    return int(label)


def run_export(job: ExportJob) -> ExportResult:
    job.validate()
    raw = load_raw_manifest(job.raw_manifest)
    class_names = raw["class_names"]
    events, corpus_xreact, corpus_xwant = load_corpus(job.corpus)

    text_enc = HashedTextEncoder(job.l_s, job.d, job.salt)
    rel_enc = HashedTextEncoder(job.l_r, job.d, job.salt)
    vision_enc = HashedMediaEncoder(job.l_v, job.d_v, job.salt + 1)
    audio_enc = HashedMediaEncoder(job.l_a, job.d_a, job.salt + 2)

    store_emb = [text_enc.embed(ev) for ev in events]
    os.makedirs(os.path.dirname(os.path.abspath(job.knowledge_out)),
                exist_ok=True)
    write_store(job.knowledge_out, store_emb, corpus_xreact, corpus_xwant)
    store_matrix = np.stack(store_emb)

    log = [f"# teco-export backend={job.backend} "
           f"text={text_enc.name} vision={vision_enc.name} "
           f"audio={audio_enc.name} corpus_entries={len(events)} "
           f"d={job.d} d_v={job.d_v} d_a={job.d_a} "
           f"l_s={job.l_s} l_v={job.l_v} l_a={job.l_a} l_r={job.l_r} "
           f"salt={job.salt}"]
    records, queries, skipped = [], [], 0
    seen = set()
    for row in raw["utterances"]:
        rid = row.get("id")
        if not rid:
            raise InputError("utterance without an id")
        if rid in seen:
            raise InputError(f"duplicate utterance id {rid!r}")
        seen.add(rid)
        split = row.get("split")
        if split not in SPLITS:
            raise InputError(f"record {rid}: unknown split {split!r}")
        text = row.get("text", "")
        if not text.split():
            raise InputError(f"record {rid}: empty utterance")
        label = _label_index(row.get("label"), class_names, rid)

        features = {"text": text_enc(text)}
        orig_len = {"text": text_enc.n_tokens(text)}
        try:
            for chan, enc, key in (("vision", vision_enc, "video"),
                                   ("audio", audio_enc, "audio")):
                path = row.get(key)
                features[chan] = enc(path) if path else enc.placeholder(rid)
                orig_len[chan] = features[chan].shape[0]
        except EncoderError as exc:
            skipped += 1
            log.append(f"SKIP\t{rid}\t{exc}")
            continue

        gen = row.get("generated") or {}
        gen_xr = gen.get("xreact") or FALLBACK_PHRASE
        gen_xw = gen.get("xwant") or FALLBACK_PHRASE
        if FALLBACK_PHRASE in (gen_xr, gen_xw) and not (
                gen.get("xreact") and gen.get("xwant")):
            log.append(f"WARN\t{rid}\tmissing generated phrases; "
                       f"using fallback {FALLBACK_PHRASE!r}")

        query = text_enc.embed(text)
        best = retrieve_nearest(query, store_matrix)
        ret_xr, ret_xw = corpus_xreact[best], corpus_xwant[best]

        features["gen_xreact"] = rel_enc(TEMPLATE_XREACT.format(gen_xr))
        features["gen_xwant"] = rel_enc(TEMPLATE_XWANT.format(gen_xw))
        features["ret_xreact"] = rel_enc(TEMPLATE_XREACT.format(ret_xr))
        features["ret_xwant"] = rel_enc(TEMPLATE_XWANT.format(ret_xw))

        records.append({
            "id": rid, "split": split, "label": label,
            "orig_len": orig_len, "features": features,
            "phrases": {"gen_xreact": gen_xr, "gen_xwant": gen_xw,
                        "ret_xreact": ret_xr, "ret_xwant": ret_xw},
        })
        queries.append((rid, query))
        log.append(f"OK\t{rid}\tgen_xreact={gen_xr}\tgen_xwant={gen_xw}\t"
                   f"ret_xreact={ret_xr}\tret_xwant={ret_xw}")

    if not records:
        raise ExportError("all records were skipped; nothing to export")
    for split in SPLITS:
        if not any(r["split"] == split for r in records):
            raise ExportError(f"split {split!r} is empty after skips; "
                              f"the bundle would not validate downstream")

    dims = {"d": job.d, "d_v": job.d_v, "d_a": job.d_a}
    lengths = {"l_s": job.l_s, "l_v": job.l_v, "l_a": job.l_a,
               "l_r": job.l_r}
    write_bundle(job.out_dir, class_names, raw.get("binary_map"),
                 dims, lengths, records)

    # per-utterance retrieval query embeddings, for downstream auditing
    with open(os.path.join(job.out_dir, "queries.tsv"), "w") as fh:
        for rid, q in queries:
            fh.write(rid + "\t" + ",".join(repr(float(v)) for v in q) + "\n")

    log.append(f"# exported={len(records)} skipped={skipped}")
    log_path = os.path.join(job.out_dir, "export.log")
    with open(log_path, "w") as fh:
        fh.write("\n".join(log) + "\n")
    return ExportResult(bundle_dir=job.out_dir, log_path=log_path,
                        n_exported=len(records), n_skipped=skipped,
                        log_lines=log)

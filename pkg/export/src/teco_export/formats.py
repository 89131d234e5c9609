"""Writers for the training package's on-disk formats.

Bundle blobs: 16-byte little-endian header (magic "TECO", version u16=1,
rank u16=2, two u32 per-record dims) followed by float32 record data in
manifest order.  The manifest is indented, key-sorted JSON so identical
exports produce identical bytes.  Knowledge stores are one entry per
line: comma-separated embedding floats, TAB, xReact phrase, TAB, xWant
phrase.
"""
from __future__ import annotations

import hashlib
import json
import os
import struct

import numpy as np

from .errors import ExportError

MAGIC = b"TECO"
VERSION = 1
SPLITS = ("train", "valid", "test")

# channel name -> (length key, dim key)
CHANNELS = {
    "text": ("l_s", "d"),
    "vision": ("l_v", "d_v"),
    "audio": ("l_a", "d_a"),
    "gen_xreact": ("l_r", "d"),
    "gen_xwant": ("l_r", "d"),
    "ret_xreact": ("l_r", "d"),
    "ret_xwant": ("l_r", "d"),
}


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_blob(path, arrays, record_shape):
    header = struct.pack("<4sHHII", MAGIC, VERSION, 2,
                         record_shape[0], record_shape[1])
    with open(path, "wb") as fh:
        fh.write(header)
        for arr in arrays:
            if arr.shape != tuple(record_shape):
                raise ExportError(
                    f"blob {os.path.basename(path)}: record shape "
                    f"{arr.shape} != expected {tuple(record_shape)}")
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def write_bundle(out_dir, class_names, binary_map, dims, lengths, records):
    """records: list of dicts with id/split/label/orig_len/phrases and a
    'features' dict holding one (length, dim) float32 array per channel."""
    os.makedirs(out_dir, exist_ok=True)
    seen = set()
    for rec in records:
        if rec["id"] in seen:
            raise ExportError(f"duplicate record id {rec['id']!r}")
        seen.add(rec["id"])
    blobs = {}
    for name, (lk, dk) in CHANNELS.items():
        fname = f"{name}.bin"
        path = os.path.join(out_dir, fname)
        write_blob(path, (r["features"][name] for r in records),
                   (lengths[lk], dims[dk]))
        blobs[name] = {"file": fname, "sha256": sha256_file(path)}
    doc = {
        "format": {"magic": "TECO", "version": VERSION},
        "class_names": list(class_names),
        "binary_map": binary_map,
        "dims": dict(dims),
        "lengths": dict(lengths),
        "blobs": blobs,
        "records": [
            {
                "id": r["id"],
                "split": r["split"],
                "label": int(r["label"]),
                "orig_len": {k: int(v)
                             for k, v in sorted(r["orig_len"].items())},
                "phrases": dict(sorted(r["phrases"].items())),
            }
            for r in records
        ],
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return out_dir


def write_store(path, embeddings, xreact, xwant):
    if not (len(embeddings) == len(xreact) == len(xwant)):
        raise ExportError("store embedding/phrase counts differ")
    if len(embeddings) == 0:
        raise ExportError("refusing to write an empty knowledge store")
    with open(path, "w") as fh:
        for emb, xr, xw in zip(embeddings, xreact, xwant):
            emb_txt = ",".join(repr(float(v)) for v in emb)
            fh.write(f"{emb_txt}\t{xr}\t{xw}\n")

"""Feature-bundle on-disk format, padding, and the synthetic generator.

A bundle directory holds manifest.json plus one binary blob per channel
(text, vision, audio, and the four relation slots).  Blob layout:
16-byte little-endian header (magic "TECO", version u16, rank u16=2,
two u32 per-record dims) followed by all records' float32 data
concatenated in manifest order.  Bit-exact and seekable; record count
comes from the manifest.
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .rng import Rng

MAGIC = b"TECO"
VERSION = 1
SPLITS = ("train", "valid", "test")

# channel name -> (length key, dim key) into manifest lengths/dims
CHANNELS = {
    "text": ("l_s", "d"),
    "vision": ("l_v", "d_v"),
    "audio": ("l_a", "d_a"),
    "gen_xreact": ("l_r", "d"),
    "gen_xwant": ("l_r", "d"),
    "ret_xreact": ("l_r", "d"),
    "ret_xwant": ("l_r", "d"),
}
RELATION_CHANNELS = ("gen_xreact", "gen_xwant", "ret_xreact", "ret_xwant")


@dataclass
class RelationQuad:
    gen_xreact: np.ndarray
    gen_xwant: np.ndarray
    ret_xreact: np.ndarray
    ret_xwant: np.ndarray
    phrases: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "gen_xreact": self.gen_xreact,
            "gen_xwant": self.gen_xwant,
            "ret_xreact": self.ret_xreact,
            "ret_xwant": self.ret_xwant,
        }


@dataclass
class UtteranceRecord:
    id: str
    text_feat: np.ndarray
    vision_feat: np.ndarray
    audio_feat: np.ndarray
    relations: RelationQuad
    label: int
    split: str
    # original (pre-padding) lengths per modality; masks derive from these
    orig_len: dict = field(default_factory=dict)

    def channel(self, name: str) -> np.ndarray:
        if name == "text":
            return self.text_feat
        if name == "vision":
            return self.vision_feat
        if name == "audio":
            return self.audio_feat
        return self.relations.as_dict()[name]

    def mask(self, name: str) -> np.ndarray:
        feat = self.channel(name)
        n = self.orig_len.get(name, feat.shape[0])
        m = np.zeros(feat.shape[0], dtype=np.float32)
        m[: min(n, feat.shape[0])] = 1.0
        return m


@dataclass
class DatasetManifest:
    class_names: list
    binary_map: list | None
    dims: dict
    lengths: dict
    index: dict = field(default_factory=dict)  # id -> position in blob order

    @property
    def n_classes(self):
        return len(self.class_names)

    def channel_shape(self, name):
        lk, dk = CHANNELS[name]
        return (self.lengths[lk], self.dims[dk])


def pad_or_truncate(seq: np.ndarray, target_len: int):
    """Zero-pad short sequences, keep the prefix of long ones.

    Returns (fixed-length array, validity mask of the original rows).
    """
    if target_len <= 0:
        raise ConfigError(f"target_len must be positive, got {target_len}")
    if seq.ndim != 2 or seq.shape[0] < 1:
        raise DataError(f"expected a non-empty (len, dim) sequence, got shape {seq.shape}")
    l, d = seq.shape
    mask = np.zeros(target_len, dtype=np.float32)
    mask[: min(l, target_len)] = 1.0
    if l == target_len:
        return seq.copy(), mask
    if l > target_len:
        return seq[:target_len].copy(), mask
    out = np.zeros((target_len, d), dtype=seq.dtype)
    out[:l] = seq
    return out, mask


# -- blob I/O ---------------------------------------------------------------

def _write_blob(path, arrays, record_shape):
    header = struct.pack("<4sHHII", MAGIC, VERSION, 2,
                         record_shape[0], record_shape[1])
    with open(path, "wb") as fh:
        fh.write(header)
        for arr in arrays:
            if arr.shape != record_shape:
                raise DataError(
                    f"blob {os.path.basename(path)}: record shape {arr.shape} "
                    f"!= expected {record_shape}")
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_blob(path, record_shape, n_records):
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise DataError(f"missing blob file {path}: {exc}") from exc
    if len(raw) < 16:
        raise DataError(f"blob {path}: truncated header")
    magic, version, rank, d0, d1 = struct.unpack("<4sHHII", raw[:16])
    if magic != MAGIC:
        raise DataError(f"blob {path}: bad magic {magic!r}")
    if version != VERSION:
        raise DataError(f"blob {path}: unknown version {version}")
    if rank != 2 or (d0, d1) != tuple(record_shape):
        raise DataError(
            f"blob {path}: header dims ({d0}, {d1}) != manifest "
            f"shape {tuple(record_shape)}")
    expected = 16 + n_records * d0 * d1 * 4
    if len(raw) != expected:
        raise DataError(
            f"blob {path}: size {len(raw)} != expected {expected} "
            f"for {n_records} records")
    flat = np.frombuffer(raw[16:], dtype="<f4")
    return flat.reshape(n_records, d0, d1).astype(np.float32)


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def blob_offset(manifest: DatasetManifest, channel: str, record_id: str) -> int:
    """Byte offset of a record's data within a channel blob."""
    shape = manifest.channel_shape(channel)
    return 16 + manifest.index[record_id] * shape[0] * shape[1] * 4


# -- bundle write / load ----------------------------------------------------

def write_bundle(out_dir, manifest: DatasetManifest, records):
    """Write manifest.json plus one blob per channel, in record order."""
    os.makedirs(out_dir, exist_ok=True)
    order = list(records)
    manifest.index = {r.id: i for i, r in enumerate(order)}
    if len(manifest.index) != len(order):
        raise DataError("duplicate record ids in bundle")
    blobs = {}
    for name in CHANNELS:
        fname = f"{name}.bin"
        path = os.path.join(out_dir, fname)
        _write_blob(path, (r.channel(name) for r in order),
                    manifest.channel_shape(name))
        blobs[name] = {"file": fname, "sha256": _sha256(path)}
    doc = {
        "format": {"magic": "TECO", "version": VERSION},
        "class_names": manifest.class_names,
        "binary_map": manifest.binary_map,
        "dims": manifest.dims,
        "lengths": manifest.lengths,
        "blobs": blobs,
        "records": [
            {
                "id": r.id,
                "split": r.split,
                "label": int(r.label),
                "orig_len": {k: int(v) for k, v in sorted(r.orig_len.items())},
                "phrases": dict(sorted(r.relations.phrases.items())),
            }
            for r in order
        ],
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return out_dir


def load_bundle(bundle_dir):
    """Load and validate a bundle; returns (manifest, records by split)."""
    manifest_path = os.path.join(bundle_dir, "manifest.json")
    try:
        with open(manifest_path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise DataError(f"missing manifest {manifest_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"unparseable manifest {manifest_path}: {exc}") from exc

    fmt = doc.get("format", {})
    if fmt.get("magic") != "TECO":
        raise DataError(f"manifest {manifest_path}: bad magic {fmt.get('magic')!r}")
    if fmt.get("version") != VERSION:
        raise DataError(
            f"manifest {manifest_path}: unknown version {fmt.get('version')}")

    manifest = DatasetManifest(
        class_names=doc["class_names"],
        binary_map=doc.get("binary_map"),
        dims=doc["dims"],
        lengths=doc["lengths"],
    )
    if manifest.binary_map is not None and \
            len(manifest.binary_map) != manifest.n_classes:
        raise DataError("binary_map must cover every class")
    for key, val in {**manifest.dims, **manifest.lengths}.items():
        if val <= 0:
            raise DataError(f"manifest dim {key} must be positive, got {val}")

    rows = doc["records"]
    n = len(rows)
    data = {}
    for name, meta in doc["blobs"].items():
        if name not in CHANNELS:
            raise DataError(f"unknown blob channel {name!r}")
        path = os.path.join(bundle_dir, meta["file"])
        if not os.path.exists(path):
            raise DataError(f"missing blob file {path}")
        if "sha256" in meta and _sha256(path) != meta["sha256"]:
            raise DataError(f"checksum mismatch for blob {meta['file']}")
        data[name] = _read_blob(path, manifest.channel_shape(name), n)
    missing = set(CHANNELS) - set(data)
    if missing:
        raise DataError(f"manifest lists no blob for channels {sorted(missing)}")

    by_split = {s: [] for s in SPLITS}
    manifest.index = {}
    for i, row in enumerate(rows):
        rid = row["id"]
        if rid in manifest.index:
            raise DataError(f"duplicate record id {rid!r}")
        manifest.index[rid] = i
        if row["split"] not in SPLITS:
            raise DataError(f"record {rid}: unknown split {row['split']!r}")
        label = row["label"]
        if not 0 <= label < manifest.n_classes:
            raise DataError(
                f"record {rid}: label {label} out of range [0, {manifest.n_classes})")
        quad = RelationQuad(
            gen_xreact=data["gen_xreact"][i],
            gen_xwant=data["gen_xwant"][i],
            ret_xreact=data["ret_xreact"][i],
            ret_xwant=data["ret_xwant"][i],
            phrases=row.get("phrases", {}),
        )
        rec = UtteranceRecord(
            id=rid,
            text_feat=data["text"][i],
            vision_feat=data["vision"][i],
            audio_feat=data["audio"][i],
            relations=quad,
            label=label,
            split=row["split"],
            orig_len=row.get("orig_len", {}),
        )
        by_split[row["split"]].append(rec)
    for split in SPLITS:
        if not by_split[split]:
            raise DataError(f"empty split: {split}")
    return manifest, by_split


# -- synthetic generation ---------------------------------------------------

@dataclass
class SyntheticConfig:
    n_classes: int = 20
    per_class_train: int = 20
    per_class_valid: int = 5
    per_class_test: int = 5
    d: int = 16
    d_v: int = 16
    d_a: int = 16
    l_s: int = 4
    l_v: int = 6
    l_a: int = 6
    l_r: int = 4
    margin: float = 5.0
    noise: float = 1.0
    # channels whose per-class cluster centers carry the label signal;
    # every other channel is pure noise
    signal_channels: tuple = ("text", "vision", "audio",
                              "gen_xreact", "gen_xwant",
                              "ret_xreact", "ret_xwant")

    def lengths(self):
        return {"l_s": self.l_s, "l_v": self.l_v, "l_a": self.l_a,
                "l_r": self.l_r}

    def dims(self):
        return {"d": self.d, "d_v": self.d_v, "d_a": self.d_a}


def generate_synthetic(cfg: SyntheticConfig, seed: int, out_dir):
    """Deterministic clustered synthetic bundle.

    Per signal channel and class, one center row is drawn with norm
    proportional to margin; each sample is center + noise.  Identical
    seed therefore yields byte-identical bundle files.
    """
    if cfg.margin <= 0:
        raise ConfigError(f"margin must be positive, got {cfg.margin}")
    unknown = set(cfg.signal_channels) - set(CHANNELS)
    if unknown:
        raise ConfigError(f"unknown signal channels: {sorted(unknown)}")
    rng = Rng(seed)
    lengths, dims = cfg.lengths(), cfg.dims()
    centers = {}
    for name in CHANNELS:
        lk, dk = CHANNELS[name]
        if name in cfg.signal_channels:
            centers[name] = rng.normal((cfg.n_classes, dims[dk]),
                                       scale=cfg.margin)
        else:
            centers[name] = np.zeros((cfg.n_classes, dims[dk]),
                                     dtype=np.float32)

    records = []
    counts = {"train": cfg.per_class_train, "valid": cfg.per_class_valid,
              "test": cfg.per_class_test}
    for split, per_class in counts.items():
        for cls in range(cfg.n_classes):
            for j in range(per_class):
                rid = f"{split}-{cls:02d}-{j:04d}"
                feats = {}
                for name in CHANNELS:
                    lk, dk = CHANNELS[name]
                    row = centers[name][cls]
                    noise = rng.normal((lengths[lk], dims[dk]),
                                       scale=cfg.noise)
                    feats[name] = (row[None, :] + noise).astype(np.float32)
                quad = RelationQuad(
                    gen_xreact=feats["gen_xreact"],
                    gen_xwant=feats["gen_xwant"],
                    ret_xreact=feats["ret_xreact"],
                    ret_xwant=feats["ret_xwant"],
                    phrases={"gen_xreact": f"synthetic reaction {cls}",
                             "gen_xwant": f"synthetic want {cls}",
                             "ret_xreact": f"synthetic reaction {cls}",
                             "ret_xwant": f"synthetic want {cls}"},
                )
                records.append(UtteranceRecord(
                    id=rid,
                    text_feat=feats["text"],
                    vision_feat=feats["vision"],
                    audio_feat=feats["audio"],
                    relations=quad,
                    label=cls,
                    split=split,
                    orig_len={name: lengths[CHANNELS[name][0]]
                              for name in ("text", "vision", "audio")},
                ))
    manifest = DatasetManifest(
        class_names=[f"intent_{i:02d}" for i in range(cfg.n_classes)],
        binary_map=[i % 2 for i in range(cfg.n_classes)],
        dims=dims,
        lengths=lengths,
    )
    return write_bundle(out_dir, manifest, records)

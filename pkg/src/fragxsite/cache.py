"""Binary cache of preprocessed samples plus a JSON manifest.

Layout, all little-endian::

    magic b"FXDS" | u32 schema version | u32 protein count | u32 sample count
    protein:  str id | u16 pocket count | per pocket: 6 f32 corners, f32 score, graph
    sample:   str drug id | u32 protein index | u8 label | u16 fragment count | graphs
    graph:    u32 n | u32 m | n*74 f32 features | m*2 u32 edges | n u32 atom indices
    str:      u16 byte length | utf-8 bytes

Samples that share a protein share its pocket graphs after loading.
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

from .featurize import FEATURE_DIM, GraphSample
from .model import InteractionSample

MAGIC = b"FXDS"
SCHEMA_VERSION = 1
CACHE_NAME = "samples.bin"
MANIFEST_NAME = "manifest.json"


class CacheError(ValueError):
    pass


def _write_str(buf: io.BytesIO, s: str) -> None:
    raw = s.encode()
    buf.write(struct.pack("<H", len(raw)))
    buf.write(raw)


def _write_graph(buf: io.BytesIO, g: GraphSample) -> None:
    buf.write(struct.pack("<II", g.num_nodes, len(g.edges)))
    buf.write(np.ascontiguousarray(g.features, dtype="<f4").tobytes())
    buf.write(np.ascontiguousarray(g.edges, dtype="<u4").tobytes())
    buf.write(np.ascontiguousarray(g.atom_indices, dtype="<u4").tobytes())


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.off = 0

    def unpack(self, fmt: str):
        vals = struct.unpack_from(fmt, self.data, self.off)
        self.off += struct.calcsize(fmt)
        return vals

    def array(self, dtype: str, count: int) -> np.ndarray:
        arr = np.frombuffer(self.data, dtype=dtype, count=count, offset=self.off)
        self.off += arr.nbytes
        return arr

    def string(self) -> str:
        (n,) = self.unpack("<H")
        s = self.data[self.off:self.off + n].decode()
        self.off += n
        return s

    def graph(self) -> GraphSample:
        n, m = self.unpack("<II")
        feats = self.array("<f4", n * FEATURE_DIM).reshape(n, FEATURE_DIM)
        edges = self.array("<u4", 2 * m).reshape(m, 2).astype(np.int64)
        idx = self.array("<u4", n).astype(np.int64)
        return GraphSample(feats.astype(np.float32), edges, idx)


def encode_samples(samples: list[InteractionSample]) -> bytes:
    proteins: dict[str, int] = {}
    ordered: list[InteractionSample] = []
    for s in samples:
        if s.protein_id not in proteins:
            proteins[s.protein_id] = len(proteins)
            ordered.append(s)
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<III", SCHEMA_VERSION, len(proteins), len(samples)))
    for s in ordered:
        _write_str(buf, s.protein_id)
        buf.write(struct.pack("<H", len(s.pocket_graphs)))
        for k, g in enumerate(s.pocket_graphs):
            box = s.pocket_boxes[k] if k < len(s.pocket_boxes) else None
            corners = (list(box["min_corner"]) + list(box["max_corner"])) if box else [0.0] * 6
            score = box["score"] if box else 0.0
            buf.write(struct.pack("<7f", *corners, score))
            _write_graph(buf, g)
    for s in samples:
        _write_str(buf, s.drug_id)
        buf.write(struct.pack("<IBH", proteins[s.protein_id], s.label, len(s.fragment_graphs)))
        for g in s.fragment_graphs:
            _write_graph(buf, g)
    return buf.getvalue()


def decode_samples(data: bytes) -> list[InteractionSample]:
    if data[:4] != MAGIC:
        raise CacheError("not a sample cache")
    r = _Reader(data)
    r.off = 4
    version, n_prot, n_samp = r.unpack("<III")
    if version != SCHEMA_VERSION:
        raise CacheError(f"cache schema version {version} is not supported (expected {SCHEMA_VERSION})")
    proteins = []
    for _ in range(n_prot):
        pid = r.string()
        (n_pock,) = r.unpack("<H")
        boxes, graphs = [], []
        for _ in range(n_pock):
            vals = r.unpack("<7f")
            g = r.graph()
            boxes.append({"min_corner": list(vals[:3]), "max_corner": list(vals[3:6]),
                          "score": vals[6], "atom_count": g.num_nodes})
            graphs.append(g)
        proteins.append((pid, boxes, graphs))
    samples = []
    for _ in range(n_samp):
        drug_id = r.string()
        pidx, label, n_frag = r.unpack("<IBH")
        frags = [r.graph() for _ in range(n_frag)]
        pid, boxes, graphs = proteins[pidx]
        samples.append(InteractionSample(frags, graphs, label, drug_id, pid, boxes))
    return samples


def write_cache(out_dir, samples: list[InteractionSample], manifest: dict) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / CACHE_NAME).write_bytes(encode_samples(samples))
    manifest = {"schema_version": SCHEMA_VERSION, **manifest}
    (out / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return out


def read_manifest(cache_dir) -> dict:
    path = Path(cache_dir) / MANIFEST_NAME
    if not path.exists():
        raise CacheError(f"no manifest at {path}")
    manifest = json.loads(path.read_text())
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise CacheError(f"cache schema version {manifest.get('schema_version')} is not supported "
                         f"(expected {SCHEMA_VERSION})")
    return manifest


def read_cache(cache_dir) -> tuple[list[InteractionSample], dict]:
    manifest = read_manifest(cache_dir)
    path = Path(cache_dir) / CACHE_NAME
    if not path.exists():
        raise CacheError(f"no sample cache at {path}")
    return decode_samples(path.read_bytes()), manifest

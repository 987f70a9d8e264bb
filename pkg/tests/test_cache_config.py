import json
import struct

import numpy as np
import pytest

from fragxsite.cache import (CacheError, decode_samples, encode_samples, read_cache, read_manifest,
                             write_cache)
from fragxsite.config import PREPROCESS_FIELDS, RunConfig

from conftest import toy_sample


def _same_graph(a, b):
    return (np.array_equal(a.features, b.features) and np.array_equal(a.edges, b.edges)
            and np.array_equal(a.atom_indices, b.atom_indices))


def test_round_trip(rng):
    samples = [toy_sample(rng, label=i % 2, drug_id=f"D{i}", protein_id=f"P{i % 2}") for i in range(4)]
    for s in samples:
        s.pocket_boxes = [{"min_corner": [0.0, 1.0, 2.0], "max_corner": [3.0, 4.0, 5.0], "score": 0.5}] * len(s.pocket_graphs)
    back = decode_samples(encode_samples(samples))
    assert len(back) == 4
    for a, b in zip(samples, back):
        assert (a.drug_id, a.label) == (b.drug_id, b.label)
        assert all(_same_graph(x, y) for x, y in zip(a.fragment_graphs, b.fragment_graphs))
        assert b.pocket_boxes[0]["max_corner"] == [3.0, 4.0, 5.0]
    # protein P0 is stored once: samples 0 and 2 carry its pockets
    assert back[0].pocket_graphs is back[2].pocket_graphs
    assert all(_same_graph(x, y) for x, y in zip(samples[0].pocket_graphs, back[0].pocket_graphs))


def test_encoding_deterministic(rng):
    samples = [toy_sample(rng, label=i % 2) for i in range(3)]
    assert encode_samples(samples) == encode_samples(samples)


def test_header_layout(rng):
    blob = encode_samples([toy_sample(rng)])
    assert blob[:4] == b"FXDS"
    assert struct.unpack_from("<III", blob, 4) == (1, 1, 1)


def test_version_refused(tmp_path, rng):
    blob = bytearray(encode_samples([toy_sample(rng)]))
    blob[4:8] = struct.pack("<I", 99)
    with pytest.raises(CacheError, match="99"):
        decode_samples(bytes(blob))
    with pytest.raises(CacheError):
        decode_samples(b"JUNKJUNK")
    write_cache(tmp_path, [toy_sample(rng)], {"x": 1})
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    manifest["schema_version"] = 2
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(CacheError, match="version"):
        read_manifest(tmp_path)


def test_write_and_read(tmp_path, rng):
    samples = [toy_sample(rng, label=1)]
    write_cache(tmp_path, samples, {"note": "hi"})
    back, manifest = read_cache(tmp_path)
    assert manifest["note"] == "hi" and manifest["schema_version"] == 1
    assert len(back) == 1
    with pytest.raises(CacheError):
        read_cache(tmp_path / "missing")


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError, match="bogus"):
        RunConfig.from_dict({"bogus": 1})


@pytest.mark.parametrize("bad", [{"heads": 3}, {"edge_threshold": 0}, {"grid": -1}, {"drop_threshold": 2},
                                 {"val_fraction": 0.6, "test_fraction": 0.5}])
def test_config_validated_at_load(bad):
    with pytest.raises(ValueError):
        RunConfig.from_dict(bad)


def test_config_load_and_subconfigs(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"dim": 32, "heads": 2, "scan_range": 6.0, "lr": 0.01}))
    cfg = RunConfig.load(path)
    assert cfg.model_config().dim == 32 and cfg.pocket_config().range == 6.0
    assert cfg.train_config().lr == 0.01
    assert RunConfig.from_dict(cfg.to_dict()) == cfg


def test_preprocess_hash_tracks_only_preprocessing():
    base = RunConfig()
    assert base.replace(lr=0.5, epochs=3).preprocess_hash() == base.preprocess_hash()
    for name in PREPROCESS_FIELDS:
        value = getattr(base, name)
        changed = base.replace(**{name: value + 1})
        assert changed.preprocess_hash() != base.preprocess_hash(), name

"""Command line: preprocess, train, evaluate, explain, synth.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import difflib
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .autodiff import NumericalError
from .cache import CacheError, read_cache, write_cache
from .chemio import PDBError, SmilesError, read_pdb
from .config import RunConfig
from .metrics import MetricError
from .model import evaluate, explain, load_model, split_indices, train
from .pipeline import make_sample, prepare_protein

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
CSV_COLUMNS = ("smiles", "pdb_path", "label", "drug_id", "protein_id")

log = logging.getLogger("fragx")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _load_config(args) -> RunConfig:
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
        if args.seed is not None:
            cfg = cfg.replace(seed=args.seed)
    except (OSError, ValueError, TypeError) as exc:
        raise UsageError(f"bad config: {exc}") from None
    return cfg


def _threads() -> int:
    raw = os.environ.get("FRAGX_THREADS", "")
    try:
        return max(1, int(raw)) if raw else min(4, os.cpu_count() or 1)
    except ValueError:
        raise UsageError(f"FRAGX_THREADS must be an integer, got {raw!r}") from None


# ---------------------------------------------------------------------------
# preprocess


def _read_rows(csv_path: Path) -> list[dict]:
    with csv_path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in CSV_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise DataError(f"{csv_path}: missing columns {', '.join(missing)}")
        return list(reader)


def cmd_preprocess(args) -> int:
    cfg = _load_config(args)
    csv_path = Path(args.csv)
    if not csv_path.exists():
        raise DataError(f"no such file: {csv_path}")
    rows = _read_rows(csv_path)
    base = csv_path.parent

    proteins: dict[tuple[str, str], object] = {}
    drops: list[dict] = []

    def protein_for(row):
        key = (row["protein_id"], row["pdb_path"])
        if key not in proteins:
            path = Path(row["pdb_path"])
            path = path if path.is_absolute() else base / path
            try:
                p = read_pdb(path)
                p.source_id = row["protein_id"]
                proteins[key] = prepare_protein(p, cfg)
            except (OSError, PDBError) as exc:
                proteins[key] = exc
        return proteins[key]

    # proteins first (shared across rows), then drugs in parallel
    for row in rows:
        protein_for(row)

    def build(item):
        i, row = item
        label = row.get("label", "").strip()
        if label not in ("0", "1"):
            return i, None, f"label must be 0 or 1, got {label!r}"
        prot = protein_for(row)
        if isinstance(prot, Exception):
            return i, None, f"protein: {prot}"
        if not prot.graphs:
            return i, None, "protein has no non-empty pocket"
        try:
            return i, make_sample(row["smiles"], prot, int(label), row["drug_id"], cfg), None
        except (SmilesError, ValueError) as exc:
            return i, None, f"drug: {exc}"

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        results = sorted(pool.map(build, enumerate(rows)), key=lambda r: r[0])

    samples, records = [], []
    for i, sample, reason in results:
        row_no = i + 2  # header is line 1
        if sample is None:
            drops.append({"row": row_no, "drug_id": rows[i].get("drug_id", ""), "reason": reason})
            log.warning("row %d dropped: %s", row_no, reason)
            continue
        samples.append(sample)
        records.append({"row": row_no, "drug_id": sample.drug_id, "protein_id": sample.protein_id,
                        "label": sample.label, "fragments": len(sample.fragment_graphs),
                        "pockets": len(sample.pocket_graphs)})
    manifest = {
        "config": cfg.to_dict(),
        "config_hash": cfg.preprocess_hash(),
        "seed": cfg.seed,
        "input_sha256": hashlib.sha256(csv_path.read_bytes()).hexdigest(),
        "samples": len(samples),
        "records": records,
        "dropped": drops,
    }
    write_cache(args.out, samples, manifest)
    print(f"wrote {len(samples)} samples to {args.out} ({len(drops)} dropped)")
    if rows and len(drops) / len(rows) > cfg.drop_threshold:
        print(f"error: {len(drops)}/{len(rows)} rows dropped, above the threshold "
              f"{cfg.drop_threshold:.0%}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


# ---------------------------------------------------------------------------
# train / evaluate / explain


def _load_samples(cache_dir, cfg: RunConfig | None = None):
    samples, manifest = read_cache(cache_dir)
    if cfg is not None and manifest.get("config_hash") != cfg.preprocess_hash():
        raise DataError(f"cache {cache_dir} was built with config hash {manifest.get('config_hash')}, "
                        f"current preprocessing config hash is {cfg.preprocess_hash()}")
    if not samples:
        raise DataError(f"cache {cache_dir} holds no samples")
    return samples, manifest


def cmd_train(args) -> int:
    cfg = _load_config(args)
    samples, _ = _load_samples(args.cache, cfg)
    out = Path(args.out)
    header = f"{'epoch':>5} {'train_loss':>10} {'val_loss':>10} {'val_auc':>8} {'val_f1':>7}"
    print(header)

    def show(row):
        auc = row.get("val_auc")
        f1 = row.get("val_f1")
        print(f"{row['epoch']:>5} {row['train_loss']:>10.4f} {row['val_loss']:>10.4f} "
              f"{'-' if auc is None else f'{auc:.4f}':>8} {'-' if f1 is None else f'{f1:.4f}':>7}",
              flush=True)

    result = train(samples, cfg.model_config(), cfg.train_config(), out_dir=out, log_fn=show)
    tr, va, te = result.split
    (out / "split.json").write_text(json.dumps(
        {"train": tr.tolist(), "val": va.tolist(), "test": te.tolist()}, indent=1))
    (out / "run_config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    print(f"best epoch {result.best_epoch}; checkpoint {out / 'model.ckpt'}")
    return EXIT_OK


def _split_samples(ckpt: Path, samples, split: str):
    split_file = ckpt.parent / "split.json"
    if split_file.exists():
        idx = json.loads(split_file.read_text())[split]
    else:
        cfg = RunConfig()
        parts = dict(zip(("train", "val", "test"),
                         split_indices(len(samples), cfg.seed, cfg.val_fraction, cfg.test_fraction)))
        idx = parts[split].tolist()
    if not idx:
        raise DataError(f"split {split!r} is empty")
    return [samples[i] for i in idx]


def cmd_evaluate(args) -> int:
    ckpt = Path(args.checkpoint)
    if not ckpt.exists():
        raise DataError(f"checkpoint not found: {ckpt}")
    model = load_model(ckpt)
    samples, _ = _load_samples(args.cache)
    subset = _split_samples(ckpt, samples, args.split)
    metrics = evaluate(model, subset)
    payload = {"split": args.split, "n": len(subset), **metrics.to_dict()}
    text = json.dumps(payload, indent=2)
    print(text)
    out = Path(args.out) if args.out else ckpt.parent
    out.mkdir(parents=True, exist_ok=True)
    (out / f"metrics_{args.split}.json").write_text(text)
    return EXIT_OK


def _write_matrix(path: Path, mat: np.ndarray) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"key_{j}" for j in range(mat.shape[1])])
        for row in mat:
            w.writerow([f"{v:.9g}" for v in row])


def cmd_explain(args) -> int:
    ckpt = Path(args.checkpoint)
    if not ckpt.exists():
        raise DataError(f"checkpoint not found: {ckpt}")
    model = load_model(ckpt)
    samples, _ = _load_samples(args.cache)
    match = [s for s in samples if s.drug_id == args.drug_id and s.protein_id == args.protein_id]
    if not match:
        pairs = [f"{s.drug_id}/{s.protein_id}" for s in samples]
        near = difflib.get_close_matches(f"{args.drug_id}/{args.protein_id}", pairs, n=5, cutoff=0.0)
        raise DataError(f"pair {args.drug_id}/{args.protein_id} not in cache; nearest: {', '.join(near)}")
    result = explain(model, match[0], args.top_k)
    amap = result.pop("attention")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "explain.json").write_text(json.dumps(result, indent=2))
    _write_matrix(out / "pocket_stage.csv", amap.pocket_stage)
    _write_matrix(out / "fragment_stage.csv", amap.fragment_stage)
    print(json.dumps(result, indent=2))
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synthetic import make_pairs, protein_to_pdb

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pairs, proteins = make_pairs(args.n, seed=args.seed if args.seed is not None else 0)
    for pid, p in proteins.items():
        (out / f"{pid}.pdb").write_text(protein_to_pdb(p))
    with (out / "pairs.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for p in pairs:
            w.writerow([p.smiles, f"{p.protein_id}.pdb", p.label, p.drug_id, p.protein_id])
    print(f"wrote {len(pairs)} pairs and {len(proteins)} proteins to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config")
    common.add_argument("--seed", type=int, help="override the config seed")
    p = _Parser(prog="fragx", description="Fragment/pocket drug-target interaction pipeline")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("preprocess", parents=[common], help="CSV + PDB files -> sample cache")
    s.add_argument("csv")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("train", parents=[common], help="train on a cache")
    s.add_argument("cache")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", parents=[common], help="metrics for one split")
    s.add_argument("checkpoint")
    s.add_argument("cache")
    s.add_argument("--split", choices=("train", "val", "test"), default="test")
    s.add_argument("--out")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("explain", parents=[common], help="rank pockets and fragments for one pair")
    s.add_argument("checkpoint")
    s.add_argument("cache")
    s.add_argument("--drug-id", required=True)
    s.add_argument("--protein-id", required=True)
    s.add_argument("--top-k", type=int, default=6)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_explain)

    s = sub.add_parser("synth", parents=[common], help="write a planted-motif dataset")
    s.add_argument("--n", type=int, default=500)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CacheError, MetricError, PDBError, SmilesError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

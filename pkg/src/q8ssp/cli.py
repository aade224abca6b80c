"""``q8ssp`` command line: data, check, train, predict, ensemble, evaluate, report.

Settings resolve as command-line flags, then the ``--config`` file (global
keys plus one section per command), then built-in presets. Every command
writes into ``--out`` under an advisory lock, names outputs by a hash of
their inputs and skips work whose outputs already exist.

Exit codes: 0 success, 1 integrity or leakage finding, 2 usage error,
3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import urllib.request
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import AlignmentError, ConfigError, IntegrityError, Q8Error

log = logging.getLogger("q8ssp")

EXIT_OK, EXIT_FINDING, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3
LOCK_NAME = ".q8ssp.lock"


class UsageError(Q8Error):
    exit_code = EXIT_USAGE


@dataclass
class RunConfig:
    """Everything needed to rebuild a training run from its manifest."""

    model_id: str
    train_path: str
    validation_path: str | None = None
    split: dict | None = None
    val_fraction: float = 0.0
    limit: int | None = None
    preset: str = "published"
    small: bool = False
    embedding_dim: int | None = None
    arch_overrides: dict = field(default_factory=dict)
    train_overrides: dict = field(default_factory=dict)
    layout: dict | None = None
    seed: int = 0
    deterministic: bool = False
    allow_leakage: bool = False


# -- config resolution ----------------------------------------------------------

def load_config(path) -> dict:
    if path is None:
        return {}
    import yaml

    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file {p} does not exist")
    text = p.read_text(encoding="utf-8")
    data = json.loads(text) if p.suffix == ".json" else yaml.safe_load(text)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{p}: top level must be a mapping")
    return data


def resolve(args, config: dict, key: str, default=None):
    """flag > command section of the config > global config key > default."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    section = config.get(args.command) or {}
    if key in section:
        return section[key]
    if key in config and not isinstance(config[key], dict):
        return config[key]
    return default


def layout_from(args, config):
    from .data import DEFAULT_LAYOUT, RawLayout

    d = resolve(args, config, "layout")
    return RawLayout.from_dict(d) if d else DEFAULT_LAYOUT


def out_dir(args, config) -> Path:
    return Path(resolve(args, config, "out", "q8ssp-out"))


def require_file(path, what="input") -> Path:
    if path is None:
        raise UsageError(f"missing {what} path")
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} file {p} does not exist")
    return p


def short(h: str) -> str:
    return h[:12]


# -- dataset loading -------------------------------------------------------------

def load_records(path, layout, limit=None):
    from .data import load_raw

    records = load_raw(require_file(path, "dataset"), layout)
    return records if limit is None else records[: int(limit)]


def load_encoded(path, layout, limit=None, cache_dir=None):
    """Records of a container file, featurized; reuses a feature cache when given."""
    from .data import dataset_name
    from .featurize import cache_key, load_cached, prepare, save_cached
    from .io import sha256_file

    path = require_file(path, "dataset")
    name = dataset_name(path)
    if cache_dir is not None and limit is None:
        key = cache_key(sha256_file(path), layout)
        ds = load_cached(cache_dir, name, key)
        if ds is not None:
            return ds
        ds = prepare(load_records(path, layout), name)
        save_cached(ds, cache_dir, key)
        return ds
    return prepare(load_records(path, layout, limit), name)


# -- commands --------------------------------------------------------------------

def cmd_data(args, config) -> int:
    """Fetch or verify containers, print counts and duplicate groups, write the feature cache."""
    from .data import dataset_name, deduplicate, encode_raw, find_duplicates
    from .featurize import cache_key, prepare, save_cached
    from .io import save_array, sha256_file, write_json

    out = out_dir(args, config)
    layout = layout_from(args, config)
    path = Path(args.path)
    expected = resolve(args, config, "sha256")
    url = resolve(args, config, "fetch")
    if not path.exists():
        if not url:
            raise UsageError(f"{path} does not exist; pass --fetch URL to download it")
        log.info("fetching %s", url)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".part")
        urllib.request.urlretrieve(url, tmp)
        tmp.replace(path)
    digest = sha256_file(path)
    if expected and digest != expected.lower():
        raise IntegrityError(f"{path}: sha256 {digest} does not match expected {expected}")

    records = load_records(path, layout)
    groups = find_duplicates(records)
    lengths = np.array([r.length for r in records]) if records else np.zeros(1, dtype=int)
    name = dataset_name(path)
    summary = {
        "path": str(path),
        "sha256": digest,
        "records": len(records),
        "residues": int(lengths.sum()),
        "min_length": int(lengths.min()),
        "max_length": int(lengths.max()),
        "duplicate_groups": [list(g) for g in groups],
        "duplicate_records": sum(len(g) - 1 for g in groups),
        "layout": layout.to_dict(),
    }
    print(f"{path}: {summary['records']} records, {summary['residues']} residues, "
          f"lengths {summary['min_length']}..{summary['max_length']}, sha256 {short(digest)}")
    print(f"duplicate groups: {len(groups)} ({summary['duplicate_records']} redundant records)")
    for g in groups[:20]:
        print("  " + " ".join(records[i].id for i in g))

    status = EXIT_FINDING if groups else EXIT_OK
    if groups and args.deduplicate:
        records = deduplicate(records)
        clean = out / f"{name}.dedup.npy"
        save_array(clean, encode_raw(records, layout).reshape(len(records), -1))
        summary["deduplicated"] = {"path": str(clean), "records": len(records), "sha256": sha256_file(clean)}
        print(f"wrote {clean} ({len(records)} records)")
        digest, name, status = summary["deduplicated"]["sha256"], dataset_name(clean), EXIT_OK
    if not args.no_cache:
        save_cached(prepare(records, name), out / "cache", cache_key(digest, layout))
    write_json(out / f"{name}.summary.json", summary)
    return status


def _split_records(args, config, layout):
    from .data import SplitSpec, apply_split
    from .io import read_json

    data, split = resolve(args, config, "data"), resolve(args, config, "split")
    if data is not None:
        if split is None:
            raise UsageError("--data needs --split")
        records = load_records(data, layout)
        spec = SplitSpec.from_dict(read_json(require_file(split, "split")))
        spec.validate(len(records))
        with warnings.catch_warnings():
            # leakage is reported by the caller, not warned about
            warnings.simplefilter("ignore", UserWarning)
            parts = apply_split(records, spec, allow_leakage=True)
        return dict(zip(("train", "validation", "test"), parts))
    parts = {}
    for part in ("train", "validation", "test"):
        p = resolve(args, config, part)
        if p is not None:
            parts[part] = load_records(p, layout)
    if len(parts) < 2:
        raise UsageError("check needs at least two of --train/--validation/--test, or --data with --split")
    return parts


def cmd_check(args, config) -> int:
    """Cross-split leakage audit; exit 1 with the pair list when any split shares a sequence."""
    from .data import cross_split_pairs, decode_sequence
    from .io import atomic_write_text, hash_text

    layout = layout_from(args, config)
    parts = _split_records(args, config, layout)
    report = cross_split_pairs([
        (name, list(range(len(recs))), [decode_sequence(r) for r in recs]) for name, recs in parts.items()
    ])
    sizes = ", ".join(f"{k}={len(v)}" for k, v in parts.items())
    if report.clean:
        print(f"clean: no shared sequences across splits ({sizes})")
    else:
        print(f"LEAKAGE: {len(report)} cross-split pair(s) ({sizes})")
        print(report.to_text(), end="")
    out = out_dir(args, config)
    key = short(hash_text(report.to_tsv() + sizes))
    atomic_write_text(out / f"leakage.{key}.tsv", report.to_tsv())
    atomic_write_text(out / f"leakage.{key}.txt", report.to_text())
    return EXIT_OK if report.clean else EXIT_FINDING


def _train_datasets(run: RunConfig, cache_dir):
    from .data import DEFAULT_LAYOUT, RawLayout, SplitSpec, apply_split
    from .featurize import prepare

    layout = RawLayout.from_dict(run.layout) if run.layout else DEFAULT_LAYOUT
    if run.split is not None:
        records = load_records(run.train_path, layout)
        spec = SplitSpec.from_dict(run.split)
        spec.validate(len(records))
        train, val, _ = apply_split(records, spec, allow_leakage=run.allow_leakage)
        train = train[: run.limit] if run.limit else train
        return prepare(train, "train"), prepare(val, "validation") if val else None
    train = load_encoded(run.train_path, layout, run.limit, cache_dir)
    if run.validation_path:
        return train, load_encoded(run.validation_path, layout, None, cache_dir)
    if run.val_fraction > 0:
        n = len(train)
        order = np.random.default_rng(run.seed).permutation(n)
        n_val = max(1, int(round(run.val_fraction * n)))
        return train.subset(np.sort(order[n_val:])), train.subset(np.sort(order[:n_val]))
    return train, None


def _run_config(args, config) -> RunConfig:
    from .archzoo import parse_override
    from .io import read_json

    model = resolve(args, config, "model")
    if model is None:
        raise UsageError("train needs --model (one of A-F)")
    arch = dict(resolve(args, config, "arch_overrides", {}) or {})
    for item in args.arch or []:
        k, v = parse_override(item)
        arch[k] = v
    overrides = {}
    for key in ("optimizer_name", "learning_rate", "decay", "epochs", "batch_size"):
        v = resolve(args, config, key)
        if v is not None:
            overrides[key] = v
    split = resolve(args, config, "split")
    if isinstance(split, str):
        split = read_json(require_file(split, "split"))
    return RunConfig(
        model_id=str(model).upper(),
        train_path=str(require_file(resolve(args, config, "data"), "training data")),
        validation_path=resolve(args, config, "validation"),
        split=split,
        val_fraction=float(resolve(args, config, "val_fraction", 0.0)),
        limit=resolve(args, config, "limit"),
        preset=resolve(args, config, "preset", "published"),
        small=bool(resolve(args, config, "small", False)),
        embedding_dim=resolve(args, config, "embedding_dim"),
        arch_overrides=arch,
        train_overrides=overrides,
        layout=resolve(args, config, "layout"),
        seed=int(resolve(args, config, "seed", 0)),
        deterministic=bool(resolve(args, config, "deterministic", False)),
        allow_leakage=bool(resolve(args, config, "allow_leakage", False)),
    )


def cmd_train(args, config) -> int:
    from .archzoo import ArchConfig, build_model, small_config
    from .io import hash_text, read_json, sha256_file
    from .train import fit, preset

    run = _run_config(args, config)
    if run.model_id not in "ABCDEF" or len(run.model_id) != 1:
        raise UsageError(f"unknown model {run.model_id!r}; choose one of A-F")
    out = out_dir(args, config)
    inputs = {"train": sha256_file(run.train_path)}
    if run.validation_path:
        inputs["validation"] = sha256_file(require_file(run.validation_path, "validation data"))
    run_hash = hash_text(json.dumps({"run": asdict(run), "inputs": inputs}, sort_keys=True))
    manifest_path = out / "manifest.json"
    if not (args.force or args.dry_run) and manifest_path.exists() and (out / "weights.npz").exists():
        if read_json(manifest_path).get("run_hash") == run_hash:
            print(f"{out}: up to date (run {short(run_hash)})")
            return EXIT_OK

    base = small_config(run.model_id, run.seed) if run.small else ArchConfig(run.model_id, seed=run.seed)
    structure = {**base.structure, **run.arch_overrides}
    arch = ArchConfig(run.model_id, run.embedding_dim or base.embedding_dim, run.seed, structure)
    cfg = preset(run.model_id, run.preset, run.seed, deterministic=run.deterministic, **run.train_overrides)
    if args.dry_run:
        print(json.dumps({"run_config": asdict(run), "arch_config": arch.to_dict(), "train_config": cfg.to_dict(),
                          "run_hash": run_hash}, indent=2, sort_keys=True))
        return EXIT_OK
    train_ds, val_ds = _train_datasets(run, resolve(args, config, "cache_dir"))
    print(f"model {run.model_id}: {cfg.optimizer_name} lr={cfg.learning_rate} decay={cfg.decay} "
          f"epochs={cfg.epochs} batch={cfg.batch_size}; train={len(train_ds)} "
          f"validation={len(val_ds) if val_ds is not None else 0}")
    _, history = fit(build_model(arch), train_ds, val_ds, cfg, out_dir=out, allow_leakage=run.allow_leakage,
                     manifest_extra={"run_config": asdict(run), "run_hash": run_hash, "input_sha256": inputs})
    if history.epochs:
        best = history.epochs[history.best_epoch]
        print(f"best epoch {best.epoch}: accuracy {best.val_accuracy:.4f} ({'validation' if val_ds else 'training'})")
    print(f"checkpoint: {out}")
    return EXIT_OK


def cmd_predict(args, config) -> int:
    from .archzoo import load_checkpoint
    from .ensemble_eval import load_probs, save_probs
    from .io import hash_text, sha256_file
    from .train import pick_device, predict_probs, set_deterministic

    ckpt = Path(require_file(resolve(args, config, "checkpoint"), "checkpoint"))
    data = require_file(resolve(args, config, "data"), "dataset")
    limit = resolve(args, config, "limit")
    set_deterministic(bool(resolve(args, config, "deterministic", False)))
    inputs = {"weights": sha256_file(ckpt / "weights.npz"), "data": sha256_file(data), "limit": limit}
    key = short(hash_text(json.dumps(inputs, sort_keys=True)))
    model, manifest = load_checkpoint(ckpt)
    model.to(pick_device())
    out = out_dir(args, config)
    path = Path(resolve(args, config, "output") or out / f"probs.{manifest['model_id']}.{key}.npy")
    if path.exists():
        try:
            _, meta = load_probs(path)
            if meta.get("inputs") == inputs:
                print(f"{path}: up to date")
                return EXIT_OK
        except Q8Error:
            pass
    ds = load_encoded(data, layout_from(args, config), limit, resolve(args, config, "cache_dir"))
    probs = predict_probs(model, ds, int(resolve(args, config, "batch_size", 32)))
    save_probs(path, probs, ds.ids, ds.lengths, {"inputs": inputs, "model_id": manifest["model_id"],
                                                  "checkpoint": str(ckpt)})
    print(f"wrote {path} {probs.shape}")
    return EXIT_OK


def cmd_ensemble(args, config) -> int:
    from .ensemble_eval import ensemble_argmax, lengths_mask, load_probs, probs_sidecar, write_predictions
    from .io import hash_text, write_json

    paths = [require_file(p, "probability") for p in (args.probs or resolve(args, config, "probs", []) or [])]
    if not paths:
        raise UsageError("ensemble needs at least one probability file")
    members, metas = zip(*(load_probs(p) for p in paths))
    ids, lengths = metas[0]["ids"], metas[0]["lengths"]
    for p, m in zip(paths[1:], metas[1:]):
        if m["ids"] != ids or m["lengths"] != lengths:
            raise AlignmentError(f"{p}: records differ from {paths[0]}")
    # order-free name: members are identified by content only
    member_hashes = sorted(m["sha256"] for m in metas)
    key = short(hash_text("\n".join(member_hashes)))
    out = out_dir(args, config)
    path = Path(resolve(args, config, "output") or out / f"ensemble.{key}.tsv")
    mask = lengths_mask(lengths, members[0].shape[1])
    pred = ensemble_argmax(members, mask)
    write_predictions(path, ids, pred, lengths)
    write_json(probs_sidecar(path), {"members_sha256": member_hashes, "records": len(ids)})
    print(f"wrote {path} ({len(members)} member(s), {len(ids)} records)")
    return EXIT_OK


def cmd_evaluate(args, config) -> int:
    from .data import dataset_name
    from .ensemble_eval import REPORT_FORMATS, align_predictions, evaluate, read_predictions, render_report
    from .io import atomic_write_text, hash_text, sha256_file, write_json

    pred_path = require_file(resolve(args, config, "pred"), "predictions")
    gold_path = require_file(resolve(args, config, "gold"), "gold dataset")
    records = load_records(gold_path, layout_from(args, config), resolve(args, config, "limit"))
    ids = [r.id for r in records]
    gold = np.stack([r.labels for r in records])
    mask = np.stack([r.mask for r in records])
    pred = align_predictions(read_predictions(pred_path), ids, gold, mask)
    report = evaluate(pred, gold, mask)
    formats = resolve(args, config, "formats", ",".join(REPORT_FORMATS))
    formats = formats.split(",") if isinstance(formats, str) else list(formats)
    for fmt in formats:
        if fmt not in REPORT_FORMATS:
            raise ConfigError(f"unknown report format {fmt!r}; choose from {REPORT_FORMATS}")
    inputs = {"predictions": sha256_file(pred_path), "gold": sha256_file(gold_path)}
    key = short(hash_text(json.dumps(inputs, sort_keys=True)))
    out = out_dir(args, config)
    ext = {"table": "txt", "tsv": "tsv", "json": "json"}
    stem = f"report.{dataset_name(gold_path)}.{key}"
    for fmt in formats:
        atomic_write_text(out / f"{stem}.{ext[fmt]}", render_report(report, fmt))
    write_json(out / f"inputs.{stem}.json", inputs)
    print(render_report(report, "table"), end="")
    return EXIT_OK


def cmd_report(args, config) -> int:
    from .ensemble_eval import EvalReport, parse_report, read_confusion, render_report
    from .io import atomic_write_text

    fmt = resolve(args, config, "format", "table")
    if args.confusion:
        report = EvalReport.from_confusion(read_confusion(require_file(args.confusion, "confusion")))
    elif args.report:
        path = require_file(args.report, "report")
        src = {".json": "json", ".tsv": "tsv"}.get(path.suffix, "table")
        report = parse_report(path.read_text(encoding="utf-8"), src)
    else:
        raise UsageError("report needs --report FILE or --confusion FILE")
    text = render_report(report, fmt)
    output = resolve(args, config, "output")
    if output:
        atomic_write_text(output, text)
    print(text, end="")
    return EXIT_OK


COMMANDS = {
    "data": cmd_data,
    "check": cmd_check,
    "train": cmd_train,
    "predict": cmd_predict,
    "ensemble": cmd_ensemble,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}
WRITES_OUT = {"data", "check", "train", "predict", "ensemble", "evaluate"}


# -- parser ----------------------------------------------------------------------

def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # accepted before or after the subcommand; the subparser copy must not clobber
    d = argparse.SUPPRESS if suppress else None
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=d, help="YAML or JSON run config")
    p.add_argument("--seed", type=int, default=d)
    p.add_argument("--out", default=d, help="output directory (default ./q8ssp-out)")
    p.add_argument("--deterministic", action="store_const", const=True, default=d,
                   help="require reproducible kernels; fail if unavailable")
    p.add_argument("-v", "--verbose", action="store_const", const=True, default=d)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="q8ssp", description="Q8 secondary-structure benchmark suite",
                                     parents=[_global_flags(False)])
    sub = parser.add_subparsers(dest="command", required=True)
    common = [_global_flags(True)]

    p = sub.add_parser("data", parents=common, help="verify or fetch a container; summarise and cache it")
    p.add_argument("path")
    p.add_argument("--fetch", metavar="URL", help="download to PATH when it is missing")
    p.add_argument("--sha256", help="expected checksum")
    p.add_argument("--deduplicate", action="store_true", help="write a duplicate-free copy to --out")
    p.add_argument("--no-cache", action="store_true", help="skip writing the feature cache")

    p = sub.add_parser("check", parents=common, help="audit splits for shared sequences")
    p.add_argument("--train")
    p.add_argument("--validation", "--val", dest="validation")
    p.add_argument("--test")
    p.add_argument("--data", help="single container split by --split")
    p.add_argument("--split", help="JSON with train/validation/test index lists")

    p = sub.add_parser("train", parents=common, help="fit one model")
    p.add_argument("--model", help="A-F")
    p.add_argument("--data", help="training container")
    p.add_argument("--validation", "--val", dest="validation", help="validation container")
    p.add_argument("--split", help="JSON split over --data")
    p.add_argument("--val-fraction", type=float)
    p.add_argument("--preset", choices=["published", "smoke"])
    p.add_argument("--limit", type=int, help="use the first N training records")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", dest="learning_rate", type=float)
    p.add_argument("--decay", type=float)
    p.add_argument("--optimizer", dest="optimizer_name", choices=["rmsprop", "nadam", "adam"])
    p.add_argument("--arch", action="append", metavar="KEY=VALUE", help="structural override, repeatable")
    p.add_argument("--small", action="store_const", const=True, help="reduced widths for CPU runs")
    p.add_argument("--embedding-dim", type=int)
    p.add_argument("--allow-leakage", action="store_const", const=True)
    p.add_argument("--cache-dir")
    p.add_argument("--force", action="store_true", help="retrain even if the output is up to date")
    p.add_argument("--dry-run", action="store_true", help="print the resolved settings and stop")

    p = sub.add_parser("predict", parents=common, help="write per-residue probabilities")
    p.add_argument("--checkpoint")
    p.add_argument("--data")
    p.add_argument("--limit", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--output")
    p.add_argument("--cache-dir")

    p = sub.add_parser("ensemble", parents=common, help="average probability files into predictions")
    p.add_argument("probs", nargs="*")
    p.add_argument("--output")

    p = sub.add_parser("evaluate", parents=common, help="score predictions against a container")
    p.add_argument("--pred")
    p.add_argument("--gold")
    p.add_argument("--limit", type=int)
    p.add_argument("--formats", help="comma list of table,tsv,json")

    p = sub.add_parser("report", parents=common, help="render a saved report or a confusion matrix")
    p.add_argument("--report")
    p.add_argument("--confusion")
    p.add_argument("--format", choices=["table", "tsv", "json"])
    p.add_argument("--output")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config)
        if args.command in WRITES_OUT and not getattr(args, "dry_run", False):
            from filelock import FileLock, Timeout

            out = out_dir(args, config)
            out.mkdir(parents=True, exist_ok=True)
            try:
                with FileLock(str(out / LOCK_NAME), timeout=0):
                    return COMMANDS[args.command](args, config)
            except Timeout:
                print(f"error: {out} is locked by another run", file=sys.stderr)
                return EXIT_RUNTIME
        return COMMANDS[args.command](args, config)
    except Q8Error as exc:
        print(f"error: {exc}", file=sys.stderr)
        report = getattr(exc, "report", None)
        if report is not None and hasattr(report, "to_text"):
            print(report.to_text(), end="", file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:
        log.debug("unhandled failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

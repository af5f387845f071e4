"""Command-line pipeline driver.

Subcommands: synth, stats, pretrain, extract, train-head, eval, report,
plus a `windows` debug dump of sampled pretraining windows. Configuration
comes from one JSON file with per-module sections; any key can be
overridden on the command line as --section.key=value. A single --seed
flag makes the whole pipeline deterministic, and every artifact is written
atomically together with a manifest recording the config hash and input
fingerprints.

Exit codes: 0 success, 1 usage/config error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from .data import (LabelSet, NormalizationStats, ValidationError, canonical_json,
                   framewise_labels, list_recording_dirs, load_recording,
                   write_json_atomic)
from .features import extract_features, read_feature_file, write_feature_file
from .metrics import evaluate_split
from .model import ModelConfig, checkpoint_fingerprint
from .preprocessing import PreprocessConfig, compute_normalization_stats
from .pretraining import (PretrainConfig, load_pretrain_checkpoint, pretrain,
                          save_pretrain_checkpoint, write_loss_log)
from .sampler import SamplerConfig, sample_window, window_rng
from .synth import SynthConfig, generate_synthetic_dataset
from .tcn import HeadConfig, load_head, predict, save_head, train_head


class UsageError(Exception):
    pass


DEFAULT_CONFIG: dict = {
    "seed": 0,
    "dataset": {},          # SynthConfig fields
    "splits": {},           # {"train": [...], "test": [...]} or {"train_count": N}
    "preprocess": {},       # PreprocessConfig fields
    "sampler": {},          # SamplerConfig fields
    "model": {"d_embed": 512, "n_heads": 8, "fusion_hidden": 0, "text_vocab": 512},
    "pretrain": {},         # PretrainConfig fields
    "head": {},             # HeadConfig fields
    "metrics": {"tolerance_frames": 10},
    "extract": {"mode": "fused"},
}


def _deep_merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def _parse_override(arg: str) -> tuple[list[str], object]:
    if not arg.startswith("--") or "=" not in arg:
        raise UsageError(f"unrecognized argument {arg!r} (overrides look like --a.b=value)")
    key, raw = arg[2:].split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.split("."), value


def load_config(path: str | None, overrides: list[str], seed: int | None) -> dict:
    cfg = dict(DEFAULT_CONFIG)
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise UsageError(f"config file not found: {p}")
        with open(p) as f:
            cfg = _deep_merge(cfg, json.load(f))
    for arg in overrides:
        keys, value = _parse_override(arg)
        node = cfg
        for k in keys[:-1]:
            node = node.setdefault(k, {})
        node[keys[-1]] = value
    if seed is not None:
        cfg["seed"] = seed
    return cfg


def config_hash(cfg_sections: dict) -> str:
    return hashlib.sha256(canonical_json(cfg_sections).encode()).hexdigest()[:16]


def _hash_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def write_manifest(out_dir: Path, command: str, sections: dict, inputs: list[Path]):
    manifest = {
        "command": command,
        "config_hash": config_hash(sections),
        "config": sections,
        "inputs": {str(p): _hash_file(p) for p in inputs},
    }
    write_json_atomic(Path(out_dir) / f"{command}.manifest.json", manifest)


def _load_split(cfg: dict, data_dir: Path, which: str):
    dirs = list_recording_dirs(data_dir)
    if not dirs:
        raise UsageError(f"no recordings found under {data_dir}")
    ids = [p.name for p in dirs]
    splits = cfg.get("splits") or {}
    if "train" in splits or "test" in splits:
        wanted = splits.get(which) or []
        missing = [i for i in wanted if i not in ids]
        if missing:
            raise UsageError(f"{which} split names unknown recordings: {missing}")
        chosen = [p for p in dirs if p.name in set(wanted)]
    elif "train_count" in splits:
        n = int(splits["train_count"])
        chosen = dirs[:n] if which == "train" else dirs[n:]
    else:
        chosen = dirs if which == "train" else []
    if not chosen:
        raise UsageError(f"{which} split is empty; set splits in the config")
    return [load_recording(p) for p in chosen]


def _make_configs(cfg: dict):
    pre = PreprocessConfig.from_json(_deep_merge(PreprocessConfig().to_json(),
                                                 cfg.get("preprocess", {})))
    samp = SamplerConfig(**cfg.get("sampler", {}))
    return pre, samp


# -- subcommands ------------------------------------------------------------

def cmd_synth(args, cfg, overrides):
    out = Path(args.out)
    synth_cfg = SynthConfig(**{k: tuple(v) if isinstance(v, list) else v
                               for k, v in cfg.get("dataset", {}).items()})
    try:
        synth_cfg.validate()
    except ValueError as e:
        raise UsageError(f"invalid dataset config: {e}")
    recs = generate_synthetic_dataset(synth_cfg, int(cfg["seed"]), out)
    write_manifest(out, "synth", {"dataset": cfg.get("dataset", {}), "seed": cfg["seed"]}, [])
    print(f"wrote {len(recs)} recordings to {out}")
    return 0


def cmd_stats(args, cfg, overrides):
    data_dir = Path(args.data)
    pre, _ = _make_configs(cfg)
    recs = _load_split(cfg, data_dir, "train")
    stats = compute_normalization_stats(recs, pre)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    stats.save(out)
    write_manifest(out.parent, "stats",
                   {"preprocess": pre.to_json(), "splits": cfg.get("splits", {})},
                   [d / "meta.json" for d in list_recording_dirs(data_dir)])
    print(f"wrote {out} from {len(recs)} training recordings")
    return 0


def cmd_pretrain(args, cfg, overrides):
    data_dir = Path(args.data)
    stats_path = Path(args.stats)
    if not stats_path.exists():
        raise UsageError(f"missing stats file: {stats_path} (run `mmtas stats` first)")
    stats = NormalizationStats.load(stats_path)
    pre, samp = _make_configs(cfg)
    recs = _load_split(cfg, data_dir, "train")
    model_cfg = ModelConfig.for_dataset(
        recs[0], pre,
        d_embed=int(cfg["model"]["d_embed"]),
        n_heads=int(cfg["model"]["n_heads"]),
        fusion_hidden=int(cfg["model"].get("fusion_hidden", 0)),
        text_vocab=int(cfg["model"].get("text_vocab", 512)),
    )
    pt_cfg = PretrainConfig(**{**cfg.get("pretrain", {}), "seed": int(cfg["seed"])})
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)

    def progress(row):
        if row["step"] % 20 == 0 or row["step"] == pt_cfg.steps - 1:
            print(f"step {row['step']:5d}  total {row['loss_total']:.4f}  "
                  f"action {row['loss_action']:.4f}  boundary {row['loss_boundary']:.4f}")

    result = pretrain(recs, stats, pre, samp, model_cfg, pt_cfg, progress=progress)
    save_pretrain_checkpoint(out, result, pre, pt_cfg)
    write_loss_log(out.with_suffix(".loss.csv"), result.log)
    write_manifest(out.parent, "pretrain",
                   {"preprocess": pre.to_json(), "sampler": dataclasses.asdict(samp),
                    "model": model_cfg.to_json(), "pretrain": pt_cfg.to_json()},
                   [stats_path])
    print(f"wrote {out}")
    return 0


def cmd_extract(args, cfg, overrides):
    data_dir = Path(args.data)
    ckpt = Path(args.checkpoint)
    if not ckpt.exists():
        raise UsageError(f"missing checkpoint: {ckpt}")
    stats = NormalizationStats.load(Path(args.stats))
    model, pre, meta = load_pretrain_checkpoint(ckpt)
    fingerprint = checkpoint_fingerprint(ckpt)
    mode = cfg.get("extract", {}).get("mode", "fused")
    chash = config_hash({"preprocess": meta["preprocess_config"],
                         "model": meta["model_config"], "mode": mode})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for rec_dir in list_recording_dirs(data_dir):
        rec = load_recording(rec_dir)
        try:
            seq = extract_features(rec, model, pre, stats, mode=mode,
                                   fingerprint=fingerprint)
        except ValueError as e:
            raise UsageError(str(e))
        write_feature_file(out / rec.id, seq, chash)
        print(f"{rec.id}: {seq.features.shape[0]} x {seq.features.shape[1]}")
    write_manifest(out, "extract", {"mode": mode, "config_hash": chash}, [ckpt])
    return 0


def cmd_train_head(args, cfg, overrides):
    data_dir = Path(args.data)
    feat_dir = Path(args.features)
    granularity = args.granularity
    recs = _load_split(cfg, data_dir, "train")
    label_set = recs[0].label_set
    if label_set is None:
        raise UsageError("recordings carry no label sets")
    features, labels, chashes = [], [], set()
    for rec in recs:
        base = feat_dir / rec.id
        if not base.with_suffix(".bin").exists():
            raise UsageError(f"missing features for {rec.id} under {feat_dir}")
        seq = read_feature_file(base)
        with open(base.with_suffix(".json")) as f:
            chashes.add(json.load(f)["config_hash"])
        if seq.features.shape[0] != rec.n_frames:
            raise ValidationError(
                f"recording {rec.id}: {seq.features.shape[0]} feature rows vs "
                f"{rec.n_frames} frames")
        features.append(seq.features)
        labels.append(framewise_labels(rec, label_set, granularity))
    if len(chashes) != 1:
        raise UsageError(f"feature files disagree on config hash: {sorted(chashes)}")
    head_cfg = HeadConfig(**{**cfg.get("head", {}), "seed": int(cfg["seed"])})
    head = train_head(features, labels, label_set.n_labels(granularity), head_cfg,
                      progress=lambda r: print(f"epoch {r['epoch']:4d}  loss {r['loss']:.4f}")
                      if r["epoch"] % 10 == 0 else None)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    names = label_set.fine_labels if granularity == "fine" else label_set.coarse_labels
    save_head(out, head, head_cfg, granularity, names,
              {"config_hash": chashes.pop(), "d_embed": features[0].shape[1]})
    write_manifest(out.parent, "train-head",
                   {"head": head_cfg.to_json(), "granularity": granularity},
                   [feat_dir / f"{r.id}.bin" for r in recs])
    print(f"wrote {out}")
    return 0


def cmd_eval(args, cfg, overrides):
    data_dir = Path(args.data)
    feat_dir = Path(args.features)
    head_path = Path(args.head)
    if not head_path.exists():
        raise UsageError(f"missing head checkpoint: {head_path}")
    head, head_cfg, meta = load_head(head_path)
    granularity = meta["granularity"]
    names = meta["labels"]
    recs = _load_split(cfg, data_dir, args.split)
    label_set = recs[0].label_set
    out = Path(args.out)
    (out / "predictions").mkdir(parents=True, exist_ok=True)
    (out / "metrics").mkdir(parents=True, exist_ok=True)
    pairs = []
    tol = int(cfg.get("metrics", {}).get("tolerance_frames", 10))
    for rec in recs:
        base = feat_dir / rec.id
        if not base.with_suffix(".bin").exists():
            raise UsageError(f"missing features for {rec.id} under {feat_dir}")
        with open(base.with_suffix(".json")) as f:
            sidecar = json.load(f)
        if sidecar["config_hash"] != meta["features"]["config_hash"]:
            raise UsageError(
                f"config hash mismatch: features for {rec.id} were extracted with "
                f"{sidecar['config_hash']}, head was trained on "
                f"{meta['features']['config_hash']}")
        seq = read_feature_file(base)
        pred = predict(seq.features, head)
        gt = framewise_labels(rec, label_set, granularity)
        pairs.append((pred, gt))
        tmp = out / "predictions" / f"{rec.id}.csv.tmp"
        with open(tmp, "w") as f:
            f.write("frame,label\n")
            for i, p in enumerate(pred):
                f.write(f"{i},{names[int(p)]}\n")
        tmp.replace(out / "predictions" / f"{rec.id}.csv")
        from .metrics import evaluate
        write_json_atomic(out / "metrics" / f"{rec.id}.json",
                          evaluate(pred, gt, tol).to_json())
    report = evaluate_split(pairs, tol)
    write_json_atomic(out / "metrics.json", report.to_json())
    write_manifest(out, "eval", {"metrics": {"tolerance_frames": tol},
                                 "granularity": granularity},
                   [head_path])
    print(json.dumps(report.to_json(), indent=2, sort_keys=True))
    return 0


def cmd_report(args, cfg, overrides):
    from .viz import render_timeline
    eval_dir = Path(args.eval)
    data_dir = Path(args.data)
    metrics_path = eval_dir / "metrics.json"
    if not metrics_path.exists():
        raise UsageError(f"missing eval output: {metrics_path} (run `mmtas eval` first)")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(metrics_path) as f:
        metrics = json.load(f)
    write_json_atomic(out / "metrics.json", metrics)
    pred_dir = eval_dir / "predictions"
    for pred_csv in sorted(pred_dir.glob("*.csv")):
        rec = load_recording(data_dir / pred_csv.stem)
        label_set = rec.label_set
        rows = pred_csv.read_text().strip().split("\n")[1:]
        pred_names = [r.split(",", 1)[1] for r in rows]
        if pred_names[0] in label_set.fine_labels:
            granularity = "fine"
            names = label_set.fine_labels
            pred = np.array([label_set.fine_index(n) for n in pred_names])
        else:
            granularity = "coarse"
            names = label_set.coarse_labels
            pred = np.array([label_set.coarse_index(n) for n in pred_names])
        gt = framewise_labels(rec, label_set, granularity)
        render_timeline(pred, gt, names, out / f"{rec.id}.png", title=rec.id)
        print(f"rendered {out / (rec.id + '.png')}")
    write_manifest(out, "report", {}, [metrics_path])
    return 0


def cmd_windows(args, cfg, overrides):
    data_dir = Path(args.data)
    rec = load_recording(data_dir / args.recording)
    _, samp = _make_configs(cfg)
    segments = ([int(args.segment)] if args.segment is not None
                else range(len(rec.annotations)))
    dump = [sample_window(rec, k, samp, window_rng(int(cfg["seed"]), rec.id, k)).to_json()
            for k in segments]
    text = canonical_json(dump)
    if args.out:
        path = Path(args.out)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(text)
        tmp.replace(path)
    else:
        print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmtas",
        description="multimodal temporal action segmentation pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed everywhere")
        p.add_argument("--workers", type=int, default=1,
                       help="max parallel workers inside a command")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("stats", help="compute normalization statistics")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("pretrain", help="pretrain the feature extractor")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--stats", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("extract", help="export per-frame features")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--stats", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train-head", help="train the reference segmentation head")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--granularity", choices=["fine", "coarse"], default="fine")
    p.set_defaults(func=cmd_train_head)

    p = sub.add_parser("eval", help="evaluate predictions on a split")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--head", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", choices=["train", "test"], default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="emit metrics JSON and timeline plots")
    common(p)
    p.add_argument("--eval", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("windows", help="debug-dump sampled pretraining windows")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--recording", required=True)
    p.add_argument("--segment", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_windows)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args, unknown = parser.parse_known_args(argv)
    try:
        cfg = load_config(args.config, unknown, args.seed)
        return args.func(args, cfg, unknown)
    except (UsageError, FileNotFoundError, ValidationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (ValueError, KeyError, TypeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # runtime failures (non-finite loss, IO corruption, ...)
        print(f"runtime failure: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())

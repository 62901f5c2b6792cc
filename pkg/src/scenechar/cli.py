"""``scenechar`` command line: generate, train, eval, predict, inspect.

Settings are merged in three layers: built-in defaults, then the YAML file
given by ``--config``, then explicit flags. The merged result is echoed to
stderr as YAML (itself a valid ``--config`` file) and, when ``--out`` is set,
written next to a line-delimited JSON run log.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
import time
from collections import Counter
from pathlib import Path

import yaml

from . import __version__
from .dataset import Dataset, Split, Vocabulary, read_manifest, read_provenance, write_dataset
from .engine import EngineConfig, Source, data_path, generate, provenance_violations
from .errors import ConfigError, DataError, IoFailure, SceneCharError

log = logging.getLogger("scenechar")

ENGINE_PRESETS = {"default": "engine_default.yaml", "scene": "engine_scene.yaml"}
DEFAULTS = {
    "seed": 0,
    "threads": 1,
    "out": None,
    "engine": "default",
    "vocabulary": None,
    "generate": {"count": 1000, "source": "Artificial", "split": "Train", "start": 0},
    "train": {"model": "CNN-7", "artificial": None, "scene": None, "holdout": None, "plan": {}},
    "eval": {"checkpoints": [], "data": [], "reference_column": False},
    "predict": {"checkpoint": None, "image": None, "top_k": 5},
    "inspect": {"dataset": None, "strict": False},
}


class UsageError(SceneCharError):
    exit_code = 1


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------- config plumbing

def deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{p}: invalid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{p}: top level must be a mapping")
    unknown = set(data) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"{p}: unknown keys {sorted(unknown)}")
    return data


def flag_overrides(args: argparse.Namespace) -> dict:
    """Only flags the user actually passed (argparse defaults are None)."""
    top = {k: getattr(args, k) for k in ("seed", "threads", "out", "engine", "vocabulary") if getattr(args, k, None) is not None}
    section = {}
    for dest, key in getattr(args, "section_flags", {}).items():
        value = getattr(args, dest, None)
        if value is not None and value != []:
            section[key] = value
    plan = {}
    for dest, key in getattr(args, "plan_flags", {}).items():
        value = getattr(args, dest, None)
        if value is not None:
            plan[key] = value
    if plan:
        section["plan"] = plan
    if section:
        top[args.command] = section
    return top


def effective_config(args: argparse.Namespace) -> dict:
    cfg = deep_merge(DEFAULTS, load_config_file(args.config))
    cfg = deep_merge(cfg, flag_overrides(args))
    if cfg["threads"] is None or int(cfg["threads"]) < 1:
        raise ConfigError("--threads must be >= 1")
    if int(cfg["seed"]) < 0 or int(cfg["seed"]) >= 2**64:
        raise ConfigError("--seed must be an unsigned 64-bit integer")
    return cfg


def resolve_engine(spec) -> EngineConfig:
    if isinstance(spec, dict):
        return EngineConfig.from_dict(spec)
    if spec in ENGINE_PRESETS:
        return EngineConfig.load(data_path(ENGINE_PRESETS[spec]))
    return EngineConfig.load(spec)


def resolve_vocabulary(spec) -> Vocabulary:
    path = data_path("vocab50.txt") if spec is None else Path(spec)
    if not Path(path).is_file():
        raise ConfigError(f"vocabulary file not found: {path}")
    return Vocabulary.load(path)


class RunLog:
    """Line-delimited JSON records in ``<out>/run.jsonl`` (no-op without --out)."""

    def __init__(self, out: str | None, command: str):
        self.path = None
        if out is not None:
            out_dir = Path(out)
            try:
                out_dir.mkdir(parents=True, exist_ok=True)
            except OSError as exc:
                raise IoFailure(f"cannot create output directory {out_dir}: {exc}") from exc
            self.path = out_dir / "run.jsonl"
            self.path.write_text("", encoding="utf-8")
        self.command = command

    def write(self, event: str, **fields) -> None:
        if self.path is None:
            return
        rec = {"event": event, "command": self.command, "time": round(time.time(), 3), **fields}
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(rec, ensure_ascii=False, default=str) + "\n")


def echo_config(cfg: dict, run_log: RunLog) -> None:
    text = yaml.safe_dump(cfg, sort_keys=False, allow_unicode=True)
    print("# effective config\n" + text, file=sys.stderr, end="")
    run_log.write("config", config=cfg)
    if run_log.path is not None:
        (run_log.path.parent / "config.yaml").write_text(text, encoding="utf-8")


# ---------------------------------------------------------------- subcommands

def cmd_generate(cfg: dict, run_log: RunLog) -> int:
    g = cfg["generate"]
    if cfg["out"] is None:
        raise ConfigError("generate needs --out")
    count = int(g["count"])
    if count < 0:
        raise ConfigError("--count must be >= 0")
    engine = resolve_engine(cfg["engine"])
    vocab = resolve_vocabulary(cfg["vocabulary"])
    out = Path(cfg["out"])
    categories: Counter = Counter()

    def tap(images):
        for img in images:
            categories[img.provenance.font_category] += 1
            yield img

    t0 = time.perf_counter()
    images = generate(engine, list(vocab), count, int(cfg["seed"]), int(cfg["threads"]),
                      int(g["start"]), Source(g["source"]))
    write_dataset(tap(images), out, Split(g["split"]))
    (out / "engine.yaml").write_text(
        yaml.safe_dump(engine.to_dict(), sort_keys=False, allow_unicode=True), encoding="utf-8")
    elapsed = time.perf_counter() - t0
    freqs = {c: categories[c] / count if count else 0.0 for c in ("basic", "derived", "special")}
    summary = {"count": count, "font_category_frequencies": freqs, "seconds": round(elapsed, 3), "out": str(out)}
    run_log.write("summary", **summary)
    print(f"generated {count} images in {elapsed:.1f}s -> {out}")
    print("font categories: " + ", ".join(f"{c} {v:.4f}" for c, v in freqs.items()))
    return 0


def _open_optional(path) -> Dataset | None:
    return None if path is None else Dataset.open(path)


def cmd_train(cfg: dict, run_log: RunLog) -> int:
    from .recognizer import TrainPlan, build_model, train_two_stage

    t = cfg["train"]
    if cfg["out"] is None:
        raise ConfigError("train needs --out")
    plan = TrainPlan.from_dict({**t.get("plan", {}), "seed": int(cfg["seed"])})
    artificial = _open_optional(t["artificial"])
    scene = _open_optional(t["scene"])
    holdout = _open_optional(t["holdout"])
    vocab = resolve_vocabulary(cfg["vocabulary"])
    first = artificial if artificial is not None and len(artificial) else scene
    if first is None or len(first) == 0:
        raise DataError("train needs --artificial and/or --scene datasets with records")
    h, w, c = _image_shape(first)
    spec = build_model(t["model"], len(vocab), (c, h, w))
    out = Path(cfg["out"])
    history_path = out / "history.jsonl"
    history_path.write_text("", encoding="utf-8")

    def on_epoch(entry):
        with open(history_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry.to_dict()) + "\n")
        run_log.write("epoch", **entry.to_dict())
        acc = "-" if entry.holdout_accuracy is None else f"{entry.holdout_accuracy:.4f}"
        print(f"stage {entry.stage} epoch {entry.epoch}: loss {entry.loss:.4f} holdout {acc} ({entry.seconds:.0f}s)",
              file=sys.stderr)

    result = train_two_stage(plan, artificial, scene, spec, vocab, holdout, on_epoch=on_epoch)
    ckpt = out / "model.gfck"
    result.model.save(ckpt)
    stages = result.stages
    run_log.write("summary", checkpoint=str(ckpt), stage1_records=len(stages.stage1),
                  stage2_records=len(stages.stage2), epochs=len(result.history))
    print(f"wrote {ckpt} ({len(result.history)} epochs; stage 1 {len(stages.stage1)} records, "
          f"stage 2 {len(stages.stage2)} records)")
    return 0


def _image_shape(dataset: Dataset):
    from .dataset import read_image
    return read_image(dataset.image_path(dataset.records[0])).shape


def _named(spec: str) -> tuple[str | None, str]:
    if "=" in spec:
        name, path = spec.split("=", 1)
        return name, path
    return None, spec


def cmd_eval(cfg: dict, run_log: RunLog) -> int:
    from .recognizer import Recognizer, ablation_table, evaluate

    e = cfg["eval"]
    if not e["checkpoints"] or not e["data"]:
        raise ConfigError("eval needs at least one --checkpoint and one --data")
    datasets = []
    for spec in e["data"]:
        name, path = _named(spec)
        datasets.append((name or Path(path).name, Dataset.open(path)))
    reports = []
    for spec in e["checkpoints"]:
        regime, path = _named(spec)
        if not Path(path).is_file():
            raise IoFailure(f"checkpoint not found: {path}")
        model = Recognizer.load(path)
        for name, ds in datasets:
            rep = evaluate(model, ds, name, regime or model.regime or "?")
            reports.append(rep)
            run_log.write("report", model=rep.model, regime=rep.regime, dataset=name,
                          accuracy=rep.accuracy, total=rep.total)
    table = ablation_table(reports, reference=bool(e["reference_column"]))
    print(table.render())
    if cfg["out"] is not None:
        out = Path(cfg["out"])
        (out / "report.json").write_text(json.dumps(
            {"table": table.to_dict(), "reports": [r.to_dict() for r in reports]}, ensure_ascii=False, indent=1),
            encoding="utf-8")
    return 0


def cmd_predict(cfg: dict, run_log: RunLog) -> int:
    from .recognizer import Recognizer, predict

    p = cfg["predict"]
    if p["checkpoint"] is None or p["image"] is None:
        raise ConfigError("predict needs --checkpoint and an image path")
    if not Path(p["checkpoint"]).is_file():
        raise IoFailure(f"checkpoint not found: {p['checkpoint']}")
    if not Path(p["image"]).is_file():
        raise IoFailure(f"image not found: {p['image']}")
    if int(p["top_k"]) < 1:
        raise ConfigError("--top-k must be >= 1")
    ranked = predict(Recognizer.load(p["checkpoint"]), p["image"], int(p["top_k"]))
    for ch, prob in ranked:
        print(f"{ch}\t{prob:.6f}")
    run_log.write("prediction", image=str(p["image"]), ranking=ranked)
    return 0


def inspect_dataset(path, engine: EngineConfig | None = None) -> dict:
    """Counts, font-category and source frequencies, and a list of violations."""
    manifest = read_manifest(path)
    root = Dataset.open(path, validate=False).root
    provenance = read_provenance(path)
    if engine is None and (root / "engine.yaml").is_file():
        engine = EngineConfig.load(root / "engine.yaml")
    per_class = Counter(r.char for r in manifest)
    sources = Counter(r.source.value for r in manifest)
    categories: Counter = Counter()
    violations = []
    for rec in manifest:
        if not (root / rec.path).is_file():
            violations.append(f"{rec.path}: image missing")
        prov = provenance.get(rec.path)
        if prov is None:
            if provenance:
                violations.append(f"{rec.path}: no provenance record")
            continue
        categories[prov.font_category] += 1
        if prov.digest() != rec.digest:
            violations.append(f"{rec.path}: provenance digest mismatch")
        if engine is not None:
            violations += [f"{rec.path}: {v}" for v in provenance_violations(prov, engine)]
    n = sum(categories.values())
    return {
        "records": len(manifest),
        "per_class": dict(sorted(per_class.items())),
        "sources": dict(sources),
        "font_category_frequencies": {c: (categories[c] / n if n else 0.0) for c in ("basic", "derived", "special")},
        "violations": violations,
    }


def cmd_inspect(cfg: dict, run_log: RunLog) -> int:
    i = cfg["inspect"]
    if i["dataset"] is None:
        raise ConfigError("inspect needs a dataset directory")
    engine = resolve_engine(cfg["engine"]) if cfg["engine"] != "default" else None
    stats = inspect_dataset(i["dataset"], engine)
    run_log.write("inspect", **stats)
    print(f"records: {stats['records']}")
    print("sources: " + (", ".join(f"{k} {v}" for k, v in stats["sources"].items()) or "none"))
    print("font categories: " + ", ".join(f"{k} {v:.4f}" for k, v in stats["font_category_frequencies"].items()))
    print("per class: " + (" ".join(f"{k}:{v}" for k, v in stats["per_class"].items()) or "none"))
    print(f"violations: {len(stats['violations'])}")
    for v in stats["violations"][:50]:
        print(f"  {v}")
    if stats["violations"] and i["strict"]:
        raise DataError(f"{len(stats['violations'])} invariant violations in {i['dataset']}")
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "inspect": cmd_inspect,
}


# ---------------------------------------------------------------- argument parsing

def build_parser() -> Parser:
    shared = Parser(add_help=False)
    shared.add_argument("--config", help="YAML config file; flags override its values")
    shared.add_argument("--seed", type=int, help="root seed (unsigned 64-bit)")
    shared.add_argument("--threads", type=int, help="worker processes; 1 is bit-exact reproducible")
    shared.add_argument("--out", help="output directory")
    shared.add_argument("--engine", help="engine preset (default, scene) or engine YAML path")
    shared.add_argument("--vocabulary", help="vocabulary file, one line of characters")
    shared.add_argument("-v", "--verbose", action="store_true")

    parser = Parser(prog="scenechar", description="Synthetic scene-character data and a from-scratch CNN recognizer.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    p = sub.add_parser("generate", parents=[shared], help="synthesize a labeled dataset")
    p.add_argument("--count", type=int)
    p.add_argument("--source", choices=[s.value for s in Source])
    p.add_argument("--split", choices=[s.value for s in Split])
    p.add_argument("--start", type=int, help="first image index")
    p.set_defaults(section_flags={"count": "count", "source": "source", "split": "split", "start": "start"})

    p = sub.add_parser("train", parents=[shared], help="train a recognizer")
    p.add_argument("--model", choices=["CNN-7", "CNN-9"])
    p.add_argument("--artificial", help="artificial dataset directory")
    p.add_argument("--scene", help="scene dataset directory")
    p.add_argument("--holdout", help="dataset scored after every epoch")
    p.add_argument("--regime", choices=["A", "S", "A+S"])
    p.add_argument("--mixing", choices=["RemainderArtificial", "EqualizeCounts"])
    p.add_argument("--stage1-fraction", type=float)
    p.add_argument("--stage1-epochs", type=int)
    p.add_argument("--stage2-epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--target-accuracy", type=float, help="end stage 1 once holdout accuracy reaches this")
    p.set_defaults(
        section_flags={"model": "model", "artificial": "artificial", "scene": "scene", "holdout": "holdout"},
        plan_flags={"regime": "regime", "mixing": "stage2_mixing", "stage1_fraction": "stage1_fraction",
                    "stage1_epochs": "stage1_epochs", "stage2_epochs": "stage2_epochs", "lr": "lr",
                    "batch_size": "batch_size", "target_accuracy": "stage1_target_accuracy"},
    )

    p = sub.add_parser("eval", parents=[shared], help="score checkpoints and print the ablation table")
    p.add_argument("--checkpoint", action="append", default=[], dest="checkpoints",
                   help="checkpoint path, optionally REGIME=path; repeatable")
    p.add_argument("--data", action="append", default=[], help="dataset directory, optionally NAME=dir; repeatable")
    p.add_argument("--reference-column", action="store_true", default=None,
                   help="append the published accuracies as reference columns")
    p.set_defaults(section_flags={"checkpoints": "checkpoints", "data": "data", "reference_column": "reference_column"})

    p = sub.add_parser("predict", parents=[shared], help="rank characters for one image")
    p.add_argument("image", nargs="?")
    p.add_argument("--checkpoint")
    p.add_argument("--top-k", type=int)
    p.set_defaults(section_flags={"image": "image", "checkpoint": "checkpoint", "top_k": "top_k"})

    p = sub.add_parser("inspect", parents=[shared], help="dataset statistics and invariant checks")
    p.add_argument("dataset", nargs="?")
    p.add_argument("--strict", action="store_true", default=None, help="exit nonzero if any violation is found")
    p.set_defaults(section_flags={"dataset": "dataset", "strict": "strict"})
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        cfg = effective_config(args)
        run_log = RunLog(cfg["out"], args.command)
        echo_config(cfg, run_log)
        status = COMMANDS[args.command](cfg, run_log)
        run_log.write("exit", status=status)
        return status
    except SceneCharError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 3
    except (ValueError, KeyError, TypeError) as exc:
        # malformed config values that slipped past validation
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

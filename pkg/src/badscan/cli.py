"""Command line entry point.

Exit codes: 0 success, 1 clean image (``detect`` only), 2 config/usage
error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .bitplane import TriggerSpec, detect_trigger, embed_trigger, stamp_patch
from .harness.bench import bench_sweep, random_image
from .harness.config import ConfigError, ExperimentConfig, load_config
from .harness.experiment import run_experiment
from .harness.metrics import compute_metrics
from .harness.poison import poison_dataset
from .harness.report import ReportError, report
from .imagecore import PatchLoc, load_ppm, read_manifest, save_ppm, synth_dataset
from .net.checkpoint import load_checkpoint, save_checkpoint
from .net.model import init_model
from .net.train import fit

EXIT_OK, EXIT_CLEAN, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


def _trigger_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=int, default=1, help="number of least-significant planes to lock")
    p.add_argument("--size", type=int, default=4, help="trigger patch side in pixels")
    p.add_argument("--loc-i", default="topleft", help="'row,col' or topleft/bottomleft")
    p.add_argument("--loc-j", default="bottomleft", help="'row,col' or topleft/bottomleft")


def _spec_from(args, height: int, channels: int) -> TriggerSpec:
    try:
        return TriggerSpec(PatchLoc.parse(args.loc_i, height, args.size),
                           PatchLoc.parse(args.loc_j, height, args.size), args.size, args.k, channels)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    cfg.validate()
    return cfg


def cmd_synth(args) -> int:
    m = synth_dataset(args.classes, args.per_class, args.side, args.seed, args.out)
    print(f"wrote {len(m)} images to {args.out}")
    return EXIT_OK


def cmd_embed(args) -> int:
    img = load_ppm(args.inp)
    spec = _spec_from(args, img.height, img.channels)
    t0 = time.perf_counter()
    out = embed_trigger(img, spec)
    elapsed = time.perf_counter() - t0
    save_ppm(out, args.out)
    print(f"embedded k={spec.k} trigger in {elapsed:.6f} s")
    return EXIT_OK


def cmd_detect(args) -> int:
    img = load_ppm(args.inp)
    spec = _spec_from(args, img.height, img.channels)
    t0 = time.perf_counter()
    found = detect_trigger(img, spec)
    elapsed = time.perf_counter() - t0
    print("detected" if found else "clean")
    print(f"{elapsed:.6f}")
    return EXIT_OK if found else EXIT_CLEAN


def cmd_train(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.manifest:
        train = read_manifest(args.manifest)
    else:
        d = cfg.dataset
        train = synth_dataset(d.class_count, d.per_class, d.side, d.seed, out / "data" / "train")
    if cfg.attack.kind == "badnets":
        a = cfg.attack
        train = poison_dataset(train, a.poison_ratio, a.source_class, a.target_class, out / "data" / "poisoned",
                               seed=cfg.dataset.seed, patch_size=a.badnets_patch, value=a.badnets_value)
    px, y = train.load_images(), train.labels
    badscan = cfg.attack.kind == "badscan"
    model = init_model(cfg.model_config(class_count=train.class_count, side=px.shape[1]),
                       cfg.trigger_spec(px.shape[1]) if badscan else None, cfg.scan_plan() if badscan else None)
    t = cfg.train
    hist = fit(model, px, y, t.epochs, t.batch, t.lr, t.momentum, t.seed)
    save_checkpoint(model, out / "model.ckpt")
    print(json.dumps({"checkpoint": str(out / "model.ckpt"), "train_loss": hist}))
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load_checkpoint(args.checkpoint)
    test = read_manifest(args.manifest, model.config.class_count)
    if args.attack == "badnets":
        size = args.patch

        def trigger(px):
            return stamp_patch(px, size)

        m = compute_metrics(model, test, apply_trigger=trigger)
    else:
        spec = model.trigger_spec
        if spec is None:
            spec = _config(args).trigger_spec(model.config.image_side)
        m = compute_metrics(model, test, spec)
    print(json.dumps(m.to_json()))
    return EXIT_OK


def cmd_attack(args) -> int:
    cfg = _config(args)
    res = run_experiment(cfg, args.out)
    print(json.dumps({k: res[k] for k in ("metrics_before_retrain", "metrics_after_retrain", "psnr")}))
    return EXIT_OK


def cmd_bench(args) -> int:
    img = load_ppm(args.inp) if args.inp else random_image(args.side, seed=args.seed)
    table = bench_sweep(img, ks=tuple(args.ks), repeats=args.repeats, patch_size=args.size)
    text = json.dumps(table, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def cmd_report(args) -> int:
    text = report(args.results, args.out)
    if not args.out:
        print(text, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="badscan", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic texture dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--per-class", type=int, default=100)
    p.add_argument("--side", type=int, default=32)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("embed", help="embed the XOR-locked trigger into a PPM/PGM")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    _trigger_args(p)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("detect", help="check a PPM/PGM for the trigger")
    p.add_argument("--in", dest="inp", required=True)
    _trigger_args(p)
    p.set_defaults(func=cmd_detect)

    for name, fn, helptext in (("train", cmd_train, "train one model and save a checkpoint"),
                               ("attack", cmd_attack, "run a full experiment protocol")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", required=True)
        if name == "train":
            p.add_argument("--manifest", help="train on this manifest instead of synthetic data")
        p.set_defaults(func=fn)

    p = sub.add_parser("eval", help="CTA/TTA/TAR of a checkpoint on a manifest")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--attack", choices=("badscan", "badnets"), default="badscan")
    p.add_argument("--patch", type=int, default=4, help="visible patch size for --attack badnets")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="time trigger embedding and detection")
    p.add_argument("--in", dest="inp")
    p.add_argument("--side", type=int, default=224)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=4)
    p.add_argument("--ks", type=int, nargs="+", default=[1, 3, 5, 7])
    p.add_argument("--repeats", type=int, default=1000)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", help="render report.md from results directories")
    p.add_argument("results", nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ReportError, Exception) as exc:  # noqa: BLE001
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

"""One experiment run: train, evaluate, retrain from scratch, evaluate again.

Protocols by ``attack.kind``:

* ``badscan`` - clean training; the scan swap is wired into the model and
  fires on triggered inputs.
* ``badnets`` - training on visibly poisoned data, no scan swap.
* ``none``    - clean control, no scan swap.

Every protocol then re-initialises the weights and retrains on clean data,
so the second evaluation shows what survives retraining.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import replace
from pathlib import Path

import numpy as np

from .. import __version__
from ..bitplane import embed_array, psnr_arrays, stamp_patch
from ..imagecore import read_manifest, synth_dataset
from ..net.checkpoint import save_checkpoint
from ..net.model import init_model
from ..net.train import fit
from .bench import bench_sweep, random_image
from .config import ExperimentConfig
from .metrics import compute_metrics, encode_float, format_tar
from .poison import poison_dataset

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def prepare_data(cfg: ExperimentConfig, out_dir: Path):
    d = cfg.dataset
    if d.source == "synth":
        train = synth_dataset(d.class_count, d.per_class, d.side, d.seed, out_dir / "data" / "train")
        test = synth_dataset(d.class_count, d.test_per_class, d.side, d.seed + 1, out_dir / "data" / "test")
    else:
        train = read_manifest(d.train_manifest, d.class_count)
        test = read_manifest(d.test_manifest, d.class_count)
    return train, test


def run_experiment(cfg: ExperimentConfig, out_dir) -> dict:
    """Run the configured protocol and write results.json, results.csv and checkpoints."""
    cfg.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train, test = prepare_data(cfg, out_dir)
    test_px, test_y = test.load_images(), test.labels
    side = test_px.shape[1]
    spec = cfg.trigger_spec(side)
    kind = cfg.attack.kind
    mcfg = cfg.model_config(class_count=train.class_count, side=side)
    tr = cfg.train
    a = cfg.attack

    def stamp(px):
        return stamp_patch(px, a.badnets_patch, a.badnets_value)

    def embed(px):
        return embed_array(px, spec)

    if kind == "badnets":
        poisoned = poison_dataset(train, a.poison_ratio, a.source_class, a.target_class,
                                  out_dir / "data" / "poisoned", seed=cfg.dataset.seed,
                                  patch_size=a.badnets_patch, value=a.badnets_value)
        first_px, first_y = poisoned.load_images(), poisoned.labels
        trigger_fn = stamp
    else:
        first_px, first_y = train.load_images(), train.labels
        trigger_fn = embed

    plan = cfg.scan_plan() if kind == "badscan" else None
    dispatch_spec = spec if kind == "badscan" else None

    log.info("training %s model", kind)
    model = init_model(mcfg, dispatch_spec, plan)
    hist_before = fit(model, first_px, first_y, tr.epochs, tr.batch, tr.lr, tr.momentum, tr.seed)
    before = compute_metrics(model, (test_px, test_y), apply_trigger=trigger_fn)
    save_checkpoint(model, out_dir / "model_before.ckpt")

    log.info("retraining from scratch on clean data")
    clean_px, clean_y = train.load_images(), train.labels
    retrained = init_model(replace(mcfg, init_seed=mcfg.init_seed + 1), dispatch_spec, plan)
    hist_after = fit(retrained, clean_px, clean_y, tr.epochs, tr.batch, tr.lr, tr.momentum, tr.seed + 1)
    after = compute_metrics(retrained, (test_px, test_y), apply_trigger=trigger_fn)
    save_checkpoint(retrained, out_dir / "model_after.ckpt")

    embedded = np.stack([embed(p) for p in test_px])
    stamped = np.stack([stamp(p) for p in test_px])
    psnr = {"badscan": encode_float(psnr_arrays(test_px, embedded)),
            "badnets": encode_float(psnr_arrays(test_px, stamped))}

    timing = None
    if cfg.bench.repeats > 0:
        timing = bench_sweep(random_image(224), repeats=cfg.bench.repeats, patch_size=spec.patch_size)

    results = {
        "config": cfg.to_flat(),
        "metrics_before_retrain": {**before.to_json(), "train_loss": hist_before},
        "metrics_after_retrain": {**after.to_json(), "train_loss": hist_after},
        "psnr": psnr,
        "timing": timing,
        "versions": {"badscan": __version__, "numpy": np.__version__, "schema": SCHEMA_VERSION},
    }
    with open(out_dir / "results.json", "w", encoding="utf-8") as fh:
        json.dump(results, fh, indent=2, sort_keys=True)
        fh.write("\n")
    attack_psnr = psnr["badnets"] if kind == "badnets" else psnr["badscan"]
    with open(out_dir / "results.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["attack", "cta", "tta", "tar", "psnr"])
        for label, m in ((kind, before), (f"{kind}/retrained", after)):
            w.writerow([label, f"{m.cta:.4f}", f"{m.tta:.4f}", format_tar(m.tar),
                        attack_psnr if attack_psnr == "inf" else f"{attack_psnr:.2f}"])
    return results

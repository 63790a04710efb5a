"""Markdown summary of one or more results.json files."""

from __future__ import annotations

import json
from pathlib import Path

from .metrics import decode_float, format_tar

REQUIRED = ("config", "metrics_before_retrain", "metrics_after_retrain", "psnr", "timing", "versions")


class ReportError(ValueError):
    pass


def load_results(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / "results.json"
    if not path.exists():
        raise ReportError(f"missing results file {path}")
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    missing = [k for k in REQUIRED if k not in data]
    if missing:
        raise ReportError(f"{path} is missing keys {missing}")
    return data


def _pct(x) -> str:
    return f"{100.0 * float(x):.2f}"


def _db(x) -> str:
    return "inf" if x == "inf" else f"{float(x):.2f}"


def render_report(results: list[dict]) -> str:
    lines = [
        "# Backdoor evaluation",
        "",
        "CTA and TTA are top-1 accuracy (%) over the whole test set; TTA applies the attack's",
        "trigger to every test image. TAR = CTA / TTA.",
        "",
        "| Attack | Weights | CTA | TTA | TAR |",
        "|---|---|---|---|---|",
    ]
    for res in results:
        kind = res["config"]["attack.kind"]
        scan = res["config"]["scan.kind"] if kind == "badscan" else "-"
        name = f"{kind} ({scan})" if kind == "badscan" else kind
        for phase, key in (("trained", "metrics_before_retrain"), ("retrained from scratch", "metrics_after_retrain")):
            m = res[key]
            lines.append(f"| {name} | {phase} | {_pct(m['cta'])} | {_pct(m['tta'])} | "
                         f"{format_tar(decode_float(m['tar']))} |")
    lines += ["", "## Imperceptibility (PSNR, dB)", "", "| Run | BadScan trigger | Visible patch |", "|---|---|---|"]
    for res in results:
        p = res["psnr"]
        lines.append(f"| {res['config']['attack.kind']} | {_db(p['badscan'])} | {_db(p['badnets'])} |")
    timed = [r for r in results if r.get("timing")]
    if timed:
        lines += ["", "## Trigger timing (median seconds per image)", "", "| k | embed | detect |", "|---|---|---|"]
        for k, row in sorted(timed[0]["timing"].items(), key=lambda kv: int(kv[0])):
            lines.append(f"| {k} | {row['embed_s']:.6f} | {row['detect_s']:.6f} |")
    return "\n".join(lines) + "\n"


def report(paths, out_path=None) -> str:
    text = render_report([load_results(p) for p in paths])
    if out_path is not None:
        Path(out_path).write_text(text, encoding="utf-8")
    return text

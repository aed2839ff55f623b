"""Command-line interface: synth, train, enhance, decompose, eval, config.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal/numeric
failure. Existing output files are never overwritten without --force.
`UWENHANCE_THREADS` caps the worker count for per-file batch work in
`enhance` and `eval` (default 1: fully serial and deterministic; output
names do not depend on scheduling either way).
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import models, synth, trainer
from . import wavelet as wv
from .checkpoint import load_checkpoint, restore_bundle
from .config import RunConfig
from .errors import DataError, NumericsError, UsageError
from .imgio import load_image, save_image
from .metrics import colorchecker_score

REF_METRICS = {"ssim", "ciede2000"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _threads():
    try:
        return max(1, int(os.environ.get("UWENHANCE_THREADS", "1")))
    except ValueError:
        return 1


def _refuse_overwrite(path, force):
    if Path(path).exists() and not force:
        raise UsageError(f"{path} exists; pass --force to overwrite")


def _load_run_config(path):
    if path is None:
        return RunConfig()
    p = Path(path)
    if not p.exists():
        raise DataError(f"config file not found: {p}")
    return RunConfig.from_json(p.read_text())


def _bundle_from_checkpoint(path):
    ckpt = load_checkpoint(path)
    run_cfg = RunConfig.from_json(ckpt.config_text)
    bundle = models.build_bundle(run_cfg.model, seed=ckpt.seed)
    restore_bundle(bundle, ckpt)
    return bundle


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_config(args):
    text = RunConfig().to_json()
    if args.out:
        _refuse_overwrite(args.out, args.force)
        Path(args.out).write_text(text)
        print(f"wrote defaults to {args.out}", file=sys.stderr)
    else:
        sys.stdout.write(text)
    return 0


def cmd_synth(args):
    run_cfg = _load_run_config(args.config)
    spec = run_cfg.synth
    out = Path(args.out)
    _refuse_overwrite(out / synth.MANIFEST_NAME, args.force)
    summary = synth.generate_dataset(args.input, spec, out, seed=args.seed)
    print(f"wrote {summary['variants']} degraded images to {out}", file=sys.stderr)
    if summary["skipped"]:
        print(f"skipped (no depth map): {', '.join(summary['skipped'])}",
              file=sys.stderr)
    return 0


def cmd_train(args):
    out = Path(args.out)
    if args.resume is None:
        _refuse_overwrite(out / "losses.tsv", args.force)
    run_cfg = _load_run_config(args.config)
    cfg = run_cfg.train
    if args.seed is not None:
        cfg.seed = args.seed
    override = None
    if args.phase1_epochs is not None or args.phase2_epochs is not None:
        override = (args.phase1_epochs if args.phase1_epochs is not None
                    else cfg.phase1_epochs,
                    args.phase2_epochs if args.phase2_epochs is not None
                    else cfg.phase2_epochs)
        cfg.phase1_epochs, cfg.phase2_epochs = override
    _, final = trainer.train(args.manifest, cfg, out,
                             pipeline_cfg=run_cfg.model,
                             resume=args.resume, quiet=args.quiet,
                             override_epochs=override)
    print(f"final checkpoint: {final}", file=sys.stderr)
    return 0


def _enhance_one(bundle, src, dst, force):
    _refuse_overwrite(dst, force)
    save_image(dst, models.enhance(bundle, load_image(src)))


def cmd_enhance(args):
    bundle = _bundle_from_checkpoint(args.model)
    src = Path(args.input)
    dst = Path(args.output)
    if src.is_dir():
        files = sorted(src.glob("*.png"))
        if not files:
            raise DataError(f"no PNG files under {src}")
        dst.mkdir(parents=True, exist_ok=True)
        jobs = [(f, dst / f.name) for f in files]
        workers = _threads()
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(
                    lambda j: _enhance_one(bundle, j[0], j[1], args.force), jobs))
        else:
            for f, target in jobs:
                _enhance_one(bundle, f, target, args.force)
        print(f"enhanced {len(jobs)} images into {dst}", file=sys.stderr)
    else:
        _enhance_one(bundle, src, dst, args.force)
        print(f"enhanced {src} -> {dst}", file=sys.stderr)
    return 0


def cmd_decompose(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in wv.BAND_NAMES:
        _refuse_overwrite(out / f"{name}.png", args.force)
    bands = wv.dwt2(load_image(args.input))
    save_image(out / "ll.png", np.clip(bands.ll / 2.0, 0.0, 1.0))
    for name, band in (("lh", bands.lh), ("hl", bands.hl), ("hh", bands.hh)):
        save_image(out / f"{name}.png", wv.visualize_band(band))
    print(f"wrote 4 band images to {out}", file=sys.stderr)
    return 0


def _match_stems(pred_dir, ref_dir):
    pred = {p.stem: p for p in sorted(Path(pred_dir).glob("*.png"))}
    if not pred:
        raise DataError(f"no PNG files under {pred_dir}")
    if ref_dir is None:
        return [(stem, path, None) for stem, path in pred.items()]
    ref = {p.stem: p for p in sorted(Path(ref_dir).glob("*.png"))}
    missing_ref = sorted(set(pred) - set(ref))
    missing_pred = sorted(set(ref) - set(pred))
    if missing_ref or missing_pred:
        raise DataError(
            "pred/ref mismatch; no reference for: "
            f"{', '.join(missing_ref) or '-'}; no prediction for: "
            f"{', '.join(missing_pred) or '-'}")
    return [(stem, path, ref[stem]) for stem, path in pred.items()]


def cmd_eval(args):
    for m in args.metric:
        if m in REF_METRICS and args.ref is None:
            raise UsageError(f"--metric {m} requires --ref")
    if args.colorchecker is not None:
        return _eval_colorchecker(args)
    items = _match_stems(args.pred, args.ref)
    bundle = _bundle_from_checkpoint(args.model) if args.model else None
    workers = _threads()
    if bundle is not None and workers > 1:
        # parallel forward passes, deterministic report order by stem
        def work(item):
            return trainer.evaluate(bundle, [item], args.metric)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(work, items))
        report = partials[0]
        for extra in partials[1:]:
            report.rows.extend(extra.rows)
            report.skipped.extend(extra.skipped)
    else:
        report = trainer.evaluate(bundle, items, args.metric,
                                  time_enhancement=bundle is not None)
    text = report.to_tsv()
    if args.out:
        _refuse_overwrite(args.out, args.force)
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _eval_colorchecker(args):
    import json

    layout_doc = json.loads(Path(args.colorchecker).read_text())
    patches = [tuple(p) for p in layout_doc["patches"]]
    refs = [tuple(c) for c in layout_doc["reference_lab"]]
    bundle = _bundle_from_checkpoint(args.model) if args.model else None
    lines = ["image\tcolorchecker_de2000"]
    for path in sorted(Path(args.pred).glob("*.png")):
        img = load_image(path)
        if bundle is not None:
            img = models.enhance(bundle, img)
        lines.append(f"{path.stem}\t{colorchecker_score(img, patches, refs):.6f}")
    text = "\n".join(lines) + "\n"
    if args.out:
        _refuse_overwrite(args.out, args.force)
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# wiring
# ---------------------------------------------------------------------------

def build_parser():
    parser = _Parser(prog="uwenhance",
                     description="Wavelet dual-stream underwater image "
                                 "enhancement toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("config", help="configuration utilities")
    p.add_argument("action", choices=["init"])
    p.add_argument("--out", help="write defaults to this file instead of stdout")
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_config)

    p = sub.add_parser("synth", help="generate paired training data")
    p.add_argument("--input", required=True, help="directory of RGB-D sources")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="run configuration JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train", help="train the dual-stream model")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--config", help="run configuration JSON")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--seed", type=int)
    p.add_argument("--phase1-epochs", type=int, dest="phase1_epochs")
    p.add_argument("--phase2-epochs", type=int, dest="phase2_epochs")
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("enhance", help="run the model on images")
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--input", required=True, help="PNG file or directory")
    p.add_argument("--output", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_enhance)

    p = sub.add_parser("decompose", help="write the four wavelet bands")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_decompose)

    p = sub.add_parser("eval", help="score images with quality metrics")
    p.add_argument("--metric", nargs="+", default=["uiqm", "uciqe"],
                   choices=["ssim", "uiqm", "uciqe", "ciede2000"])
    p.add_argument("--pred", required=True, help="directory of images to score")
    p.add_argument("--ref", help="directory of reference images")
    p.add_argument("--model", help="enhance with this checkpoint before scoring")
    p.add_argument("--colorchecker",
                   help="JSON with patch layout and reference Lab values")
    p.add_argument("--out", help="write the TSV here instead of stdout")
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_eval)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # pragma: no cover - safety net
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

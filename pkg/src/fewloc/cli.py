"""Command line: ``fewloc {synth,train,eval,predict,verify}``.

Every config key is also a flag (``sq_residual`` -> ``--sq-residual``).
Precedence: built-in defaults < ``--config FILE`` < flags.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields
from pathlib import Path

import numpy as np
from PIL import Image

from .checkpoint import load_into, save_checkpoint
from .config import RunConfig, load_config
from .data import Episode, load_annotations, split_episodes, synth_dataset
from .locmap import decode_peaks, read_pgm16, write_pgm16
from .metrics import evaluate, write_points_csv
from .model import LocalizationModel
from .train import fit, predict_map

log = logging.getLogger("fewloc")


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", name)


def _classes(s: str) -> list[str]:
    return [c.strip() for c in s.split(",") if c.strip()]


def load_splits(cfg: RunConfig) -> dict[str, list[Episode]]:
    if cfg.data_root:
        report = load_annotations(cfg.data_root, resolution=cfg.canvas)
        if report.skipped:
            log.warning("%d annotation records skipped", len(report.skipped))
        if cfg.split_protocol == "class":
            classes = {
                "train": _classes(cfg.train_classes),
                "val": _classes(cfg.val_classes),
                "test": _classes(cfg.test_classes),
            }
            present = {e.label for e in report.episodes}
            if not set().union(*classes.values()) & present:
                return split_episodes(report.episodes, "class", seed=cfg.seed)
            classes = {k: [c for c in v if c in present] for k, v in classes.items()}
            return split_episodes(report.episodes, "class", seed=cfg.seed, classes=classes)
        return split_episodes(report.episodes, "image", parts=(0.6, 0.2, 0.2), seed=cfg.seed)
    if cfg.synth != "default":
        raise ValueError(f"unknown synthetic preset {cfg.synth!r}; only 'default' exists")
    kw = dict(canvas=cfg.canvas)
    return {
        "train": synth_dataset(_classes(cfg.train_classes), cfg.per_class, cfg.seed, **kw),
        "val": synth_dataset(_classes(cfg.val_classes), cfg.eval_per_class, cfg.seed + 1, **kw),
        "test": synth_dataset(_classes(cfg.test_classes), cfg.eval_per_class, cfg.seed + 2, **kw),
    }


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.txt").write_text(cfg.to_text())
    return out


def _load_model(cfg: RunConfig) -> LocalizationModel:
    model = LocalizationModel(cfg.model_config(), seed=cfg.seed)
    ckpt = Path(cfg.checkpoint) if cfg.checkpoint else Path(cfg.out) / "checkpoint.bin"
    load_into(model.parameters(), ckpt)
    return model


# --------------------------------------------------------------------------
# commands


def cmd_synth(cfg: RunConfig, args) -> int:
    """Write the synthetic splits as PNGs plus an annotation document."""
    out = _out_dir(cfg)
    splits = load_splits(cfg.updated({"data_root": ""}))
    doc = {}
    for split, eps in splits.items():
        for ep in eps:
            name = f"{split}-{_safe(ep.image_id)}.png"
            pix = np.round(ep.image.transpose(1, 2, 0) * 255).astype(np.uint8)
            Image.fromarray(pix).save(out / name)
            doc[name] = {
                "points": [[float(x), float(y)] for x, y in ep.points],
                "boxes": [[float(v) for v in ep.box]],
                "class": ep.label,
            }
    (out / "annotations.json").write_text(json.dumps(doc, indent=1, sort_keys=True))
    print(f"wrote {len(doc)} images to {out}")
    return 0


def cmd_train(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg)
    splits = load_splits(cfg)
    model = LocalizationModel(cfg.model_config(), seed=cfg.seed)
    sigma_l = max(cfg.sigma_list())
    log_path = out / "loss_log.txt"
    log_path.write_text("")

    def on_epoch(rec):
        val = "nan" if rec.val_f1 is None else f"{rec.val_f1:.6f}"
        with open(log_path, "a") as fh:
            fh.write(f"epoch={rec.epoch} lr={rec.lr:.6g} loss={rec.loss:.10f} val_f1={val}\n")

    result = fit(
        model,
        splits["train"],
        cfg.train_config(),
        val_eps=splits["val"],
        val_sigma=sigma_l,
        decoder=cfg.decoder_config(),
        on_epoch=on_epoch,
    )
    params = model.parameters()
    if result.best_state is not None:
        for k, p in params.items():
            p.data[...] = result.best_state[k]
    save_checkpoint(out / "checkpoint.bin", params)
    print(f"trained {result.steps} steps; best epoch {result.best_epoch}; checkpoint {out / 'checkpoint.bin'}")
    return 0


def cmd_eval(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg)
    eps = load_splits(cfg)["test"]
    if not eps:
        raise ValueError("evaluation split is empty")
    decoder = cfg.decoder_config()
    if cfg.maps:
        maps_dir = Path(cfg.maps)

        def one(ep):
            m = read_pgm16(maps_dir / f"{_safe(ep.image_id)}.pgm")
            return m, decode_peaks(m, decoder)

    else:
        model = _load_model(cfg)

        def one(ep):
            m = predict_map(model, ep)
            return m, decode_peaks(m, decoder)

    with ThreadPoolExecutor(max_workers=max(1, cfg.jobs)) as pool:
        results = list(pool.map(one, eps))

    preds = [pts for _, pts in results]
    report = evaluate(preds, [ep.points for ep in eps], cfg.sigma_list(), [ep.image_id for ep in eps])
    (out / "metrics.txt").write_text(report.to_text())
    (out / "metrics.tsv").write_text(report.to_tsv())
    (out / "points").mkdir(exist_ok=True)
    if cfg.dump_maps:
        (out / "maps").mkdir(exist_ok=True)
    for ep, (m, pts) in zip(eps, results):
        write_points_csv(out / "points" / f"{_safe(ep.image_id)}.csv", ep.image_id, pts)
        if cfg.dump_maps:
            write_pgm16(out / "maps" / f"{_safe(ep.image_id)}.pgm", np.clip(m, 0, 1))
    print(report.to_text(), end="")
    return 0


def cmd_predict(cfg: RunConfig, args) -> int:
    if not args.image or not args.box:
        raise ValueError("predict needs --image and --box x1,y1,x2,y2")
    out = _out_dir(cfg)
    model = _load_model(cfg)
    with Image.open(args.image) as im:
        w, h = im.size
        im = im.convert("RGB").resize((cfg.canvas, cfg.canvas), Image.BILINEAR)
        image = np.asarray(im, dtype=np.float64).transpose(2, 0, 1) / 255.0
    sx, sy = cfg.canvas / w, cfg.canvas / h
    x1, y1, x2, y2 = (float(v) for v in args.box.split(","))
    ep = Episode(image, (x1 * sx, y1 * sy, x2 * sx, y2 * sy), [], "query", Path(args.image).stem)
    m = predict_map(model, ep)
    pts = decode_peaks(m, cfg.decoder_config())
    # report points in the caller's pixel frame
    pts_orig = [(x / sx, y / sy) for x, y in pts]
    write_points_csv(out / f"{_safe(ep.image_id)}.csv", ep.image_id, pts_orig)
    write_pgm16(out / f"{_safe(ep.image_id)}.pgm", np.clip(m, 0, 1))
    print(f"{len(pts)} objects")
    return 0


def cmd_verify(cfg: RunConfig, args) -> int:
    from .verify.suites import run_all

    results = run_all(seed=cfg.seed, quick=args.quick)
    for r in results:
        print(r.line())
        for k, v in r.details.items():
            print(f"    {k}: {v:.3e}" if isinstance(v, float) else f"    {k}: {v}")
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} suites passed")
    return 1 if failed else 0


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fewloc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value config file")
        p.add_argument("-v", "--verbose", action="store_true")
        for f in fields(RunConfig):
            flag = "--" + f.name.replace("_", "-")
            if f.type in (bool, "bool"):
                p.add_argument(flag, dest=f.name, action="store_const", const=True, default=argparse.SUPPRESS)
            else:
                p.add_argument(flag, dest=f.name, default=argparse.SUPPRESS, metavar=f.name.upper())
        if name == "predict":
            p.add_argument("--image")
            p.add_argument("--box", help="x1,y1,x2,y2 in image pixels")
        if name == "verify":
            p.add_argument("--quick", action="store_true", help="fewer random cases per suite")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    names = {f.name for f in fields(RunConfig)}
    overrides = {k: v for k, v in vars(args).items() if k in names}
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        cfg = cfg.updated(overrides)
        return COMMANDS[args.command](cfg, args)
    except (KeyError, ValueError, OSError) as err:
        print(f"fewloc {args.command}: {err}", file=sys.stderr)
        return 2
    except FloatingPointError as err:
        print(f"fewloc {args.command}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

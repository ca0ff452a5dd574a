"""``lesionpipe`` command line.

Every subcommand resolves one scenario config: ``--config FILE`` if given,
otherwise the bundled preset for ``--scenario`` at the scale picked by
``--profile`` or $LESIONPIPE_PROFILE. ``--seed`` and ``--jobs`` override the
config. Exit codes: 0 ok, 2 bad configuration or usage, 3 bad data,
4 numeric failure.
"""

import argparse
import json
import logging
import shutil
import sys
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import __version__, imaging
from .config import PROFILE_ENV, SCENARIOS, load_config, preset, save_config
from .errors import ConfigError, DataError, LesionPipeError, StageError
from .evaluation import evaluate_batches
from .pipeline import (
    _MASK_RE, Entry, build_arrays, compare_scenarios, ingest, prepare_entry, run_scenario,
    stage_plan, synth_dataset,
)
from .postprocess import postprocess
from .preprocess import preprocess_image
from .transforms import build_input_stack, write_feature_stack
from .unet import load_weights, predict, save_weights, train

log = logging.getLogger("lesionpipe")


def resolve_config(args, scenario=None):
    if args.config and scenario is None:
        cfg = load_config(args.config)
    else:
        cfg = preset(scenario or args.scenario, args.profile)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.jobs is not None:
        changes["jobs"] = args.jobs
    return cfg.replace(**changes) if changes else cfg


def _image_files(folder):
    """Non-mask PNGs directly inside ``folder``, sorted by name."""
    folder = Path(folder)
    if not folder.is_dir():
        raise DataError(f"{folder} is not a directory")
    return sorted(p for p in folder.iterdir()
                  if p.suffix.lower() == ".png" and not _MASK_RE.match(p.name))


def _split_dirs(root):
    """(sub-directory, relative name) pairs holding images under a dataset root."""
    root = Path(root)
    dirs = [(root, Path("."))]
    dirs += [(p, Path(p.name)) for p in sorted(root.iterdir()) if p.is_dir()]
    return dirs


def _progress(every):
    def report(epoch, it, loss):
        if it % every == 0:
            log.info("epoch %d iteration %d loss %.5f", epoch, it, loss)
    return report


def contour_overlay(rgb, mask):
    """Copy of ``rgb`` with the one-pixel outline of ``mask`` painted red."""
    if rgb.ndim == 2:
        rgb = np.repeat(rgb[..., None], 3, axis=2)
    m = mask.astype(bool)
    edge = m & ~ndimage.binary_erosion(m, structure=np.ones((3, 3), bool), border_value=0)
    out = rgb.copy()
    out[edge] = (255, 0, 0)
    return out


# --- subcommands -------------------------------------------------------------

def cmd_synth(args):
    manifest = synth_dataset(args.n, args.seed or 0, args.size, n_test=args.n_test, root=args.out)
    counts = manifest.counts
    print(f"wrote {counts['train']} train / {counts['test']} test pairs to {args.out}")


def cmd_prepare(args):
    cfg = resolve_config(args)
    manifest = ingest(args.input)
    out = Path(args.out)
    for entry in manifest.entries:
        try:
            img, mask = entry.load()
            gray = imaging.prepare_image(img, cfg.image_size, cfg.border)
            target = imaging.prepare_mask(mask, cfg.image_size)
        except LesionPipeError as exc:
            raise StageError("prepare", entry.id, exc) from exc
        imaging.write_image(out / entry.split / f"{entry.id}.png", gray)
        imaging.write_mask(out / entry.split / f"{entry.id}_mask.png", target)
    for path, reason in manifest.rejected:
        print(f"skipped {path}: {reason}", file=sys.stderr)
    print(f"prepared {len(manifest.entries)} images "
          f"({cfg.image_size}px + {cfg.border}px border) into {out}")


def cmd_preprocess(args):
    cfg = resolve_config(args)
    out = Path(args.out)
    n = 0
    for folder, rel in _split_dirs(args.input):
        for path in sorted(folder.glob("*.png")):
            target = out / rel / path.name
            if _MASK_RE.match(path.name):
                target.parent.mkdir(parents=True, exist_ok=True)
                shutil.copyfile(path, target)
                continue
            img = imaging.read_image(path)
            if img.ndim == 3:
                img = imaging.to_grayscale(img)
            try:
                pre, info = preprocess_image(img, cfg.contrast, cfg.vignette, return_info=True)
            except LesionPipeError as exc:
                raise StageError("preprocess", path.stem, exc) from exc
            imaging.write_image(target, pre)
            target.with_suffix(".json").write_text(json.dumps(info, indent=2) + "\n")
            n += 1
    print(f"pre-processed {n} images into {out}")


def cmd_transform(args):
    cfg = resolve_config(args)
    out = Path(args.out)
    n = 0
    for folder, rel in _split_dirs(args.input):
        for path in _image_files(folder):
            img = imaging.read_image(path)
            if img.ndim == 3:
                img = imaging.to_grayscale(img)
            try:
                stack = build_input_stack(img, cfg)
            except LesionPipeError as exc:
                raise StageError("transform", path.stem, exc) from exc
            write_feature_stack(out / rel / f"{path.stem}.lpfs", stack)
            if not args.no_preview:
                for k, ch in enumerate(stack):
                    preview = np.floor(ch * 255.0 + 0.5).astype(np.uint8)
                    imaging.write_image(out / rel / f"{path.stem}_ch{k}.png", preview)
            n += 1
    print(f"wrote {n} {cfg.in_channels}-channel stacks to {out}")


def cmd_train(args):
    cfg = resolve_config(args).with_train_seed()
    manifest = ingest(args.data or cfg.data_root)
    entries = manifest.split("train")
    if not entries:
        raise DataError("dataset has no training images")
    x, y, _ = build_arrays(entries, cfg)
    log.info("training scenario %s on %d samples", cfg.scenario, len(x))
    params, history = train(x, y, cfg.unet_config, cfg.train, border=cfg.border,
                            tau=cfg.eval.tau, select=cfg.postprocess,
                            progress=_progress(cfg.train.iterations_per_epoch))
    out = Path(args.out)
    save_weights(out / "weights.lpwt", params)
    history.write_csv(out / "history.csv")
    save_config(out / "config.toml", cfg)
    print(f"final training Jaccard {history.epoch_jaccard[-1]:.4f}; weights in {out / 'weights.lpwt'}")


def cmd_predict(args):
    cfg = resolve_config(args)
    params = load_weights(args.weights)
    if params.config.in_channels != cfg.in_channels:
        raise ConfigError(f"weights expect {params.config.in_channels} channels but scenario "
                          f"{cfg.scenario} builds {cfg.in_channels}")
    select = cfg.postprocess and not args.no_postprocess
    out = Path(args.out)
    paths = _image_files(args.input)
    if not paths:
        raise DataError(f"no images found in {args.input}")
    for path in paths:
        rgb = imaging.read_image(path)
        dummy = np.zeros(rgb.shape[:2], np.uint8)
        stack, _ = prepare_entry(Entry(path.stem, "test", image=rgb, mask=dummy), cfg)
        try:
            b, s = cfg.border, cfg.image_size
            prob = predict(params, stack)[:, b:b + s, b:b + s]
            mask = postprocess(prob, args.tau, select=select)
        except LesionPipeError as exc:
            raise StageError("predict", path.stem, exc) from exc
        h, w = rgb.shape[:2]
        full = imaging.resize_nearest(mask, w, h)
        imaging.write_mask(out / f"{path.stem}.png", full)
        if args.overlay:
            imaging.write_image(out / "overlay" / f"{path.stem}.png", contour_overlay(rgb, full))
    print(f"wrote {len(paths)} masks to {out}")


def _truth_path(folder, stem):
    for name in (f"{stem}_mask.png", f"{stem}.png"):
        p = Path(folder) / name
        if p.is_file():
            return p
    return None


def cmd_evaluate(args):
    preds, truths, ids = [], [], []
    for path in _image_files(args.pred):
        truth = _truth_path(args.truth, path.stem)
        if truth is None:
            print(f"no ground truth for {path.name}, skipped", file=sys.stderr)
            continue
        p, t = imaging.read_mask(path), imaging.read_mask(truth)
        if p.shape != t.shape:
            raise DataError(f"{path.name}: prediction {p.shape} and truth {t.shape} differ in size")
        preds.append(p)
        truths.append(t)
        ids.append(path.stem)
    if not preds:
        raise DataError("no prediction/truth pairs found")
    report = evaluate_batches(preds, truths, args.batch_size, args.batches,
                              rng_seed=args.seed or 0, ids=ids)
    report.write_csv(args.out)
    print(f"mu {report.mean:.4f} sigma {report.std:.4f} over {args.batches} batches "
          f"of {args.batch_size}; report in {args.out}")


def _run_config(args):
    cfg = resolve_config(args)
    if args.data:
        cfg = cfg.replace(data_root=str(args.data))
    if args.out:
        cfg = cfg.replace(out_dir=str(args.out))
    return cfg


def cmd_run(args):
    cfg = _run_config(args)
    if args.dry_run:
        print(f"scenario {cfg.scenario}: " + " -> ".join(stage_plan(cfg)))
        return
    result = run_scenario(cfg, progress=_progress(cfg.train.iterations_per_epoch))
    r = result.report
    print(f"scenario {cfg.scenario}: training {100 * r.train_jaccard:.2f}  "
          f"testing mu {100 * r.mean:.2f}  sigma {100 * r.std:.2f}")


def cmd_compare(args):
    if args.configs:
        cfgs = [load_config(p) for p in args.configs]
    else:
        cfgs = [resolve_config(args, s) for s in args.scenarios]
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.jobs is not None:
        changes["jobs"] = args.jobs
    if args.data:
        changes["data_root"] = str(args.data)
    cfgs = [c.replace(**changes) for c in cfgs]
    table, _ = compare_scenarios(cfgs, out_dir=args.out,
                                 progress=_progress(cfgs[0].train.iterations_per_epoch))
    print(table)


# --- argument parsing --------------------------------------------------------

def _common_flags(suppress):
    """Global flags; subcommand copies use SUPPRESS so they never reset a value
    given before the subcommand name."""
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=d(None), help="scenario TOML file")
    common.add_argument("--scenario", choices=SCENARIOS, default=d("A"),
                        help="bundled preset to use when no --config is given (default A)")
    common.add_argument("--profile", choices=("paper", "toy"), default=d(None),
                        help=f"preset scale; defaults to ${PROFILE_ENV} or 'toy'")
    common.add_argument("--seed", type=int, default=d(None), help="override the config seed")
    common.add_argument("--jobs", type=int, default=d(None),
                        help="worker threads for per-image stages")
    common.add_argument("-v", "--verbose", action="count", default=d(0))
    return common


def build_parser():
    common = _common_flags(suppress=True)
    parser = argparse.ArgumentParser(prog="lesionpipe", description=__doc__.splitlines()[0],
                                     parents=[_common_flags(suppress=False)])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_, parents=[common])
        p.set_defaults(func=fn)
        return p

    p = add("synth", cmd_synth, "write a seeded synthetic dataset")
    p.add_argument("--n", type=int, default=80)
    p.add_argument("--n-test", type=int, default=20)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--out", type=Path, required=True)

    p = add("prepare", cmd_prepare, "resize, border and gray-convert a dataset")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = add("preprocess", cmd_preprocess, "contrast, hair and vignette correction")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = add("transform", cmd_transform, "build network input stacks (.lpfs) with PNG previews")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--no-preview", action="store_true")

    p = add("train", cmd_train, "train a U-Net on the training split of a dataset")
    p.add_argument("--data", type=Path, help="dataset root (default: data_root from the config)")
    p.add_argument("--out", type=Path, required=True)

    p = add("predict", cmd_predict, "segment images with trained weights")
    p.add_argument("--weights", type=Path, required=True)
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--no-postprocess", action="store_true", help="threshold only, no object selection")
    p.add_argument("--overlay", action="store_true", help="also write red-contour overlays")

    p = add("evaluate", cmd_evaluate, "batch Jaccard evaluation of predicted masks")
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--truth", type=Path, required=True)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--batches", type=int, default=72)
    p.add_argument("--out", type=Path, required=True)

    p = add("run", cmd_run, "full scenario: prepare through evaluation")
    p.add_argument("--data", type=Path)
    p.add_argument("--out", type=Path)
    p.add_argument("--dry-run", action="store_true", help="print the stage plan and exit")

    p = add("compare", cmd_compare, "run several scenarios on one dataset and tabulate")
    p.add_argument("--scenarios", default="AD", help="preset letters, e.g. ABCD (default AD)")
    p.add_argument("--configs", nargs="+", type=Path, help="config files instead of presets")
    p.add_argument("--data", type=Path)
    p.add_argument("--out", type=Path)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except LesionPipeError as exc:
        print(f"lesionpipe: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Dataset manifests and the end-to-end scenario driver.

Stage order for one scenario: prepare -> preprocess -> transform -> augment
-> train -> predict -> postprocess -> evaluate. Stages switched off by the
scenario are skipped; thresholding always runs.
"""

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imaging
from .config import save_config
from .errors import ConfigError, DataError, LesionPipeError, StageError
from .evaluation import EvalReport, evaluate_batches
from .postprocess import postprocess
from .preprocess import preprocess_image
from .synth import synth_samples
from .transforms import build_input_stack
from .unet import predict, save_weights, train

log = logging.getLogger(__name__)

AUGMENT_FACTOR = 6
SPLIT_DIRS = {"train": "train", "val": "train", "validation": "train", "test": "test"}
_MASK_RE = re.compile(r"^(?P<id>.+)_mask\.png$", re.IGNORECASE)


@dataclass
class Entry:
    id: str
    split: str
    image_path: Path = None
    mask_path: Path = None
    image: np.ndarray = None
    mask: np.ndarray = None

    def load(self):
        img = self.image if self.image is not None else imaging.read_image(self.image_path)
        mask = self.mask if self.mask is not None else imaging.read_mask(self.mask_path)
        return img, mask


@dataclass
class DatasetManifest:
    entries: list = field(default_factory=list)
    rejected: list = field(default_factory=list)   # (path, reason)
    augmentation: int = AUGMENT_FACTOR
    source: str = None

    def split(self, name):
        return [e for e in self.entries if e.split == name]

    @property
    def counts(self):
        return {s: len(self.split(s)) for s in ("train", "test")}

    @property
    def augmented_counts(self):
        return {s: n * self.augmentation for s, n in self.counts.items()}


def ingest(root):
    """Collect ``<id>.png`` / ``<id>_mask.png`` pairs under ``root``.

    Pairs in ``val``/``validation`` sub-directories are folded into the
    training split; ``test`` holds the test split and files directly under
    ``root`` count as training data. Unpaired files are skipped and listed in
    ``rejected``; the same id appearing twice is an error.
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset root {root} is not a directory")
    dirs = [(root, "train")]
    dirs += [(p, SPLIT_DIRS[p.name.lower()]) for p in sorted(root.iterdir())
             if p.is_dir() and p.name.lower() in SPLIT_DIRS]
    manifest = DatasetManifest(source=str(root))
    seen = {}
    for folder, split in dirs:
        pngs = sorted(p for p in folder.iterdir() if p.is_file() and p.suffix.lower() == ".png")
        masks = {}
        images = {}
        for p in pngs:
            m = _MASK_RE.match(p.name)
            if m:
                masks[m["id"]] = p
            else:
                images[p.stem] = p
        for img_id, path in images.items():
            if img_id not in masks:
                manifest.rejected.append((str(path), "no matching mask"))
                continue
            seen.setdefault(img_id, []).append(str(path))
            manifest.entries.append(Entry(img_id, split, path, masks[img_id]))
        for mask_id, path in masks.items():
            if mask_id not in images:
                manifest.rejected.append((str(path), "mask without image"))
    dupes = {k: v for k, v in seen.items() if len(v) > 1}
    if dupes:
        listing = "; ".join(f"{k}: {', '.join(v)}" for k, v in sorted(dupes.items()))
        raise DataError(f"ambiguous pairing, ids used more than once: {listing}")
    if not manifest.entries:
        raise DataError(f"no image/mask pairs found under {root}")
    return manifest


def synth_dataset(n, seed=0, size=64, n_test=0, root=None, options=None):
    """Synthetic manifest of ``n`` images, the last ``n_test`` tagged as test.

    With ``root`` the pairs are also written as PNGs under ``root/train`` and
    ``root/test``; the returned entries always carry the arrays in memory.
    """
    if n < 1:
        raise DataError("synthetic dataset needs at least one image")
    if not 0 <= n_test <= n:
        raise DataError("n_test must lie in [0, n]")
    manifest = DatasetManifest(source=f"synth(n={n}, seed={seed}, size={size})")
    for i, s in enumerate(synth_samples(n, seed, size, options)):
        split = "test" if i >= n - n_test else "train"
        entry = Entry(s["id"], split, image=s["image"], mask=s["mask"])
        if root is not None:
            entry.image_path = Path(root) / split / f"{s['id']}.png"
            entry.mask_path = Path(root) / split / f"{s['id']}_mask.png"
            imaging.write_image(entry.image_path, s["image"])
            imaging.write_mask(entry.mask_path, s["mask"])
        manifest.entries.append(entry)
    return manifest


def stage_plan(cfg):
    stages = ["prepare"]
    if cfg.preprocess:
        stages.append("preprocess")
    if cfg.lbp:
        stages.append("transform:lbp")
    if cfg.wavelet_levels:
        stages.append(f"transform:wavelet{cfg.wavelet_levels}")
    stages += ["augment", "train", "predict", "threshold"]
    if cfg.postprocess:
        stages.append("select_object")
    stages.append("evaluate")
    return stages


def _parallel_map(fn, items, jobs):
    if jobs and jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def prepare_entry(entry, cfg):
    """Gray network input (bordered) and border-free target mask for one entry."""
    stage = "load"
    try:
        img, mask = entry.load()
        stage = "prepare"
        gray = imaging.prepare_image(img, cfg.image_size, cfg.border)
        target = imaging.prepare_mask(mask, cfg.image_size)
        if cfg.preprocess:
            stage = "preprocess"
            gray = preprocess_image(gray, cfg.contrast, cfg.vignette)
        stage = "transform"
        stack = build_input_stack(gray, cfg)
    except LesionPipeError as exc:
        raise StageError(stage, entry.id, exc) from exc
    return stack, target


def build_arrays(entries, cfg, augment=True):
    """Stacked inputs, targets and per-sample ids, augmented six-fold by default."""
    prepared = _parallel_map(lambda e: prepare_entry(e, cfg), entries, cfg.jobs)
    xs, ys, ids = [], [], []
    for entry, (stack, target) in zip(entries, prepared):
        if augment:
            # the target lacks the border but shares the centre, so the same
            # dihedral transforms apply to both
            variants = list(zip(imaging.dihedral_six(stack), imaging.dihedral_six(target)))
            names = imaging.AUGMENT_NAMES
        else:
            variants, names = [(stack, target)], ("orig",)
        for name, (s, t) in zip(names, variants):
            xs.append(s)
            ys.append(t)
            ids.append(f"{entry.id}_{name}" if augment else entry.id)
    if not xs:
        return np.zeros((0, cfg.in_channels, cfg.input_size, cfg.input_size), np.float32), \
            np.zeros((0, cfg.image_size, cfg.image_size), np.uint8), []
    return np.stack(xs), np.stack(ys), ids


@dataclass
class RunResult:
    config: object
    report: EvalReport
    history: object
    params: object
    predictions: list
    ids: list


def run_scenario(cfg, manifest=None, out_dir=None, progress=None):
    """Train and evaluate one scenario; artifacts go to ``out_dir`` when given.

    Training uses ``cfg.seed`` for parameter init and batch sampling;
    evaluation batches are drawn with the same seed.
    """
    cfg = cfg.with_train_seed()
    if manifest is None:
        if not cfg.data_root:
            raise ConfigError("no dataset: pass a manifest or set data_root")
        manifest = ingest(cfg.data_root)
    out_dir = out_dir or cfg.out_dir
    train_entries = manifest.split("train")
    test_entries = manifest.split("test")
    if not train_entries:
        raise DataError("dataset has no training images")
    if not test_entries:
        raise DataError("dataset has no test images")

    log.info("scenario %s: stages %s", cfg.scenario, " -> ".join(stage_plan(cfg)))
    x_train, y_train, _ = build_arrays(train_entries, cfg)
    x_test, y_test, test_ids = build_arrays(test_entries, cfg)

    params, history = train(
        x_train, y_train, cfg.unet_config, cfg.train, border=cfg.border,
        tau=cfg.eval.tau, select=cfg.postprocess, progress=progress)

    predictions = []
    for sample_id, x in zip(test_ids, x_test):
        try:
            prob = predict(params, x)[:, cfg.border:cfg.border + cfg.image_size,
                                      cfg.border:cfg.border + cfg.image_size]
            predictions.append(postprocess(prob, cfg.eval.tau, select=cfg.postprocess))
        except LesionPipeError as exc:
            raise StageError("predict", sample_id, exc) from exc

    batch_size = min(cfg.eval.batch_size, len(predictions))
    report = evaluate_batches(predictions, list(y_test), batch_size, cfg.eval.batches,
                              rng_seed=cfg.seed, scenario=cfg.scenario, ids=test_ids)
    report.train_jaccard = history.epoch_jaccard[-1]

    if out_dir is not None:
        write_artifacts(Path(out_dir), cfg, params, history, report, predictions, test_ids)
    return RunResult(cfg, report, history, params, predictions, test_ids)


def write_artifacts(out, cfg, params, history, report, predictions, ids):
    out.mkdir(parents=True, exist_ok=True)
    save_config(out / "config.toml", cfg)
    save_weights(out / "weights.lpwt", params)
    history.write_csv(out / "history.csv")
    report.write_csv(out / "report.csv")
    for sample_id, mask in zip(ids, predictions):
        imaging.write_mask(out / "masks" / f"{sample_id}.png", mask)


def compare_scenarios(cfgs, manifest=None, out_dir=None, progress=None):
    """Run every config on the same data and seed; returns (table text, results)."""
    from .evaluation import scenario_table

    if len(cfgs) < 2:
        raise ConfigError("comparison needs at least two scenario configs")
    roots = {c.data_root for c in cfgs}
    seeds = {c.seed for c in cfgs}
    if manifest is None and len(roots) != 1:
        raise ConfigError(f"configs point at different datasets: {sorted(map(str, roots))}")
    if len(seeds) != 1:
        raise ConfigError(f"configs use different seeds: {sorted(seeds)}")
    if manifest is None:
        manifest = ingest(next(iter(roots)))
    results = []
    for i, cfg in enumerate(cfgs):
        sub = None if out_dir is None else Path(out_dir) / f"{i}_{cfg.scenario}"
        results.append(run_scenario(cfg, manifest, sub, progress))
    table = scenario_table([r.report for r in results])
    if out_dir is not None:
        (Path(out_dir) / "table.txt").write_text(table + "\n")
    return table, results

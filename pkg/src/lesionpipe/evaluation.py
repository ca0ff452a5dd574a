"""Jaccard scoring and the random-batch test protocol.

The reported spread is the population standard deviation of the batch means.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

SIGMA_NOTE = "sigma is the population standard deviation over batch means"


def jaccard(a, b):
    """|A and B| / |A or B|; two empty masks score 1.0."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise DataError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


@dataclass
class EvalReport:
    scenario: str
    image_ids: list = field(default_factory=list)      # one entry per evaluated sample
    batch_ids: list = field(default_factory=list)
    scores: list = field(default_factory=list)
    batch_means: list = field(default_factory=list)
    mean: float = float("nan")
    std: float = float("nan")
    train_jaccard: float = float("nan")

    def write_csv(self, path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["image_id", "jaccard", "batch_id"])
            for img, score, batch in zip(self.image_ids, self.scores, self.batch_ids):
                w.writerow([img, f"{score:.10f}", batch])
            w.writerow(["mu", f"{self.mean:.10f}", "all"])
            w.writerow(["sigma_population", f"{self.std:.10f}", "all"])


def evaluate_batches(predictions, truths, batch_size=16, n_batches=72, rng_seed=0,
                     scenario="", ids=None):
    """Score ``n_batches`` random batches of ``batch_size`` prediction/truth pairs.

    Images are drawn without replacement inside a batch; batches are drawn
    independently. Per-image Jaccard values are computed once and reused.
    """
    if len(predictions) != len(truths):
        raise DataError("predictions and truths are not aligned")
    if batch_size < 1 or n_batches < 1:
        raise DataError("batch_size and n_batches must be positive")
    if len(predictions) < batch_size:
        raise DataError(f"need at least {batch_size} pairs, got {len(predictions)}")
    ids = list(range(len(predictions))) if ids is None else list(ids)
    per_image = np.array([jaccard(p, t) for p, t in zip(predictions, truths)])
    rng = np.random.default_rng(rng_seed)
    report = EvalReport(scenario)
    for b in range(n_batches):
        pick = rng.choice(len(per_image), size=batch_size, replace=False)
        report.image_ids.extend(ids[i] for i in pick)
        report.batch_ids.extend([b] * batch_size)
        report.scores.extend(float(s) for s in per_image[pick])
        report.batch_means.append(float(per_image[pick].mean()))
    report.mean = float(np.mean(report.batch_means))
    report.std = float(np.std(report.batch_means))
    return report


def scenario_table(reports):
    """Plain-text summary: rows Training / Testing mu / Testing sigma, one column per scenario."""
    if not reports:
        raise DataError("no reports to tabulate")
    head = [""] + [r.scenario for r in reports]
    rows = [
        ["Training"] + [_pct(r.train_jaccard) for r in reports],
        ["Testing μ"] + [_pct(r.mean) for r in reports],
        ["Testing σ"] + [_pct(r.std) for r in reports],
    ]
    widths = [max(len(row[i]) for row in [head] + rows) for i in range(len(head))]
    lines = ["  ".join(cell.rjust(wd) if i else cell.ljust(wd)
                       for i, (cell, wd) in enumerate(zip(row, widths)))
             for row in [head] + rows]
    return "\n".join(lines)


def _pct(x):
    if x is None or np.isnan(x):
        return "-"
    return f"{100 * x:.2f}"

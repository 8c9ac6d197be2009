"""Answer parsing, classification/regression metrics, and run aggregation.

The parsers normalize model output text into a closed label vocabulary or a
(value, unit) pair; anything else is counted as unparsed, never silently
dropped. F1 is macro-averaged over classes present in the ground truth for
multiclass tasks and the positive-class F1 for binary tasks.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, UndefinedCorrelationError

UNPARSED = None
_UNITS = ("steps/min", "m/s", "s")
_NUMERIC_RE = re.compile(r"[+-]?\d+(?:\.\d+)?\s*(steps/min|m/s|s)\b")
_VALUE_RE = re.compile(r"[+-]?\d+(?:\.\d+)?")


def _normalize(text: str) -> str:
    return text.strip().rstrip(".,;:!?").strip().casefold()


def parse_class_answer(text: str, vocabulary) -> str | None:
    """Match text against the vocabulary after normalization; None if no match.

    Normalization is trim, strip terminal punctuation, case-fold. No fuzzy
    matching: the vocabulary is closed.
    """
    vocabulary = tuple(vocabulary)
    if not vocabulary:
        raise ContractViolation("vocabulary must be non-empty")
    norm = _normalize(text)
    for label in vocabulary:
        if norm == _normalize(label):
            return label
    return UNPARSED


def parse_numeric_answer(text: str) -> tuple[float, str] | None:
    """Extract (value, unit) with unit in {steps/min, m/s, s}; first match wins."""
    m = _NUMERIC_RE.search(text)
    if m is None:
        return UNPARSED
    value = float(_VALUE_RE.match(text[m.start():]).group(0))
    return value, m.group(1)


@dataclass
class ConfusionMatrix:
    """Rows are truth, columns are predictions, plus a dedicated unparsed column."""

    vocabulary: tuple[str, ...]
    counts: np.ndarray  # (V, V+1) ints; last column counts unparsed predictions

    def __post_init__(self):
        v = len(self.vocabulary)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (v, v + 1):
            raise ContractViolation(f"counts must be {v} x {v + 1}")
        if (self.counts < 0).any():
            raise ContractViolation("counts must be non-negative")

    @property
    def unparsed_count(self) -> int:
        return int(self.counts[:, -1].sum())

    @property
    def n_samples(self) -> int:
        return int(self.counts.sum())

    @property
    def parsed(self) -> np.ndarray:
        """The square truth x prediction block, unparsed column excluded."""
        return self.counts[:, :-1]

    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)


def _per_class_f1(cm: ConfusionMatrix) -> np.ndarray:
    v = len(cm.vocabulary)
    f1 = np.zeros(v)
    for c in range(v):
        tp = cm.counts[c, c]
        predicted = cm.parsed[:, c].sum()  # unparsed never enters precision
        truth = cm.counts[c, :].sum()  # unparsed rows still count against recall
        precision = tp / predicted if predicted > 0 else 0.0
        recall = tp / truth if truth > 0 else 0.0
        f1[c] = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return f1


def f1_from_matrix(cm: ConfusionMatrix, positive_label: str | None = None) -> float:
    """Positive-class F1 when a positive label is named, else macro F1 over
    classes present in the ground truth."""
    per_class = _per_class_f1(cm)
    if positive_label is not None:
        return float(per_class[cm.vocabulary.index(positive_label)])
    present = cm.row_sums() > 0
    if not present.any():
        raise ContractViolation("no ground-truth samples")
    return float(per_class[present].mean())


def classification_report(predictions, ground_truth, vocabulary,
                          positive_label: str | None = None) -> tuple[ConfusionMatrix, float]:
    """Score raw prediction texts against ground-truth labels.

    Unparsed predictions land in the dedicated last column: they count as
    errors for recall but never inflate any real label's precision
    denominator.
    """
    vocabulary = tuple(vocabulary)
    if len(predictions) != len(ground_truth):
        raise ContractViolation("predictions and ground truth must have equal length")
    if not predictions:
        raise ContractViolation("nothing to score")
    v = len(vocabulary)
    counts = np.zeros((v, v + 1), dtype=np.int64)
    for pred_text, truth in zip(predictions, ground_truth):
        if truth not in vocabulary:
            raise ContractViolation(f"ground-truth label {truth!r} not in vocabulary")
        row = vocabulary.index(truth)
        parsed = parse_class_answer(pred_text, vocabulary)
        col = v if parsed is UNPARSED else vocabulary.index(parsed)
        counts[row, col] += 1
    cm = ConfusionMatrix(vocabulary=vocabulary, counts=counts)
    return cm, f1_from_matrix(cm, positive_label)


@dataclass
class RegressionReport:
    n: int
    pearson_r: float
    slope: float
    intercept: float
    p_value: float
    excluded_unparsed: int = 0


def pearson_r(x: np.ndarray, y: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xc = x - x.mean()
    yc = y - y.mean()
    sx = float(np.sqrt((xc ** 2).sum()))
    sy = float(np.sqrt((yc ** 2).sum()))
    if sx == 0.0 or sy == 0.0:
        raise UndefinedCorrelationError("zero variance; correlation undefined")
    return float((xc * yc).sum() / (sx * sy))


def regression_report(predicted, truth, *, excluded_unparsed: int = 0,
                      n_permutations: int = 10000, seed: int = 0) -> RegressionReport:
    """Pearson r, least-squares slope/intercept of predicted on truth, and a
    two-sided permutation p-value on |r| (>= 10000 permutations of truth)."""
    predicted = np.asarray(predicted, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if predicted.shape != truth.shape or predicted.ndim != 1:
        raise ContractViolation("predicted and truth must be matching 1-D vectors")
    n = predicted.size
    if n < 3:
        raise ContractViolation("need at least 3 parsed pairs")
    r_obs = pearson_r(predicted, truth)

    tc = truth - truth.mean()
    var_t = float((tc ** 2).sum())
    slope = float((tc * (predicted - predicted.mean())).sum() / var_t)
    intercept = float(predicted.mean() - slope * truth.mean())

    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x9E]))
    pc = predicted - predicted.mean()
    sp = np.sqrt((pc ** 2).sum())
    st = np.sqrt(var_t)
    hits = 0
    chunk = 2000
    done = 0
    while done < n_permutations:
        m = min(chunk, n_permutations - done)
        keys = rng.random((m, n))
        perm = np.argsort(keys, axis=1)
        r_perm = (tc[perm] @ pc) / (sp * st)
        hits += int(np.sum(np.abs(r_perm) >= abs(r_obs)))
        done += m
    p_value = (1 + hits) / (1 + n_permutations)
    return RegressionReport(n=n, pearson_r=r_obs, slope=slope, intercept=intercept,
                            p_value=float(p_value), excluded_unparsed=excluded_unparsed)


@dataclass
class RunAggregate:
    per_task_mean: dict[str, float]
    per_task_std: dict[str, float]
    run_count: int
    single_run: bool = False


def aggregate_runs(per_run_metrics: list[dict[str, float]]) -> RunAggregate:
    """Mean and sample (n-1) standard deviation of each task's metric over runs."""
    if not per_run_metrics:
        raise ContractViolation("need at least one run")
    tasks = list(per_run_metrics[0].keys())
    for run in per_run_metrics[1:]:
        if list(run.keys()) != tasks:
            raise ContractViolation("runs report inconsistent task sets")
    n_runs = len(per_run_metrics)
    means, stds = {}, {}
    for task in tasks:
        vals = np.array([run[task] for run in per_run_metrics], dtype=np.float64)
        means[task] = float(vals.mean())
        stds[task] = float(vals.std(ddof=1)) if n_runs > 1 else 0.0
    return RunAggregate(per_task_mean=means, per_task_std=stds,
                        run_count=n_runs, single_run=n_runs == 1)


def render_aggregate_table(agg: RunAggregate) -> str:
    """Task columns with mean/std pairs, one header row."""
    tasks = list(agg.per_task_mean.keys())
    width = max(12, max((len(t) for t in tasks), default=12) + 2)
    header = "Metric".ljust(10) + "".join(t.rjust(width) for t in tasks)
    mean_row = "Mean".ljust(10) + "".join(f"{agg.per_task_mean[t]:.3f}".rjust(width) for t in tasks)
    std_row = "Std".ljust(10) + "".join(f"{agg.per_task_std[t]:.3f}".rjust(width) for t in tasks)
    note = f"(over {agg.run_count} run{'s' if agg.run_count != 1 else ''})"
    return "\n".join([header, mean_row, std_row, note])


# ---------------------------------------------------------------------------
# Per-task reports and rendering


@dataclass
class TaskReport:
    """One evaluated task: confusion matrix + F1, or correlation + slope + p."""

    task: str
    n_evaluated: int
    f1: float | None = None
    chance_f1: float | None = None
    confusion: ConfusionMatrix | None = None
    regression: RegressionReport | None = None

    @property
    def primary_metric(self) -> float:
        return self.f1 if self.f1 is not None else self.regression.pearson_r


def _render_confusion(cm: ConfusionMatrix) -> list[str]:
    width = max(12, max(len(v) for v in cm.vocabulary) + 2)
    cols = list(cm.vocabulary) + ["<unparsed>"]
    lines = ["".ljust(width) + "".join(c.rjust(width) for c in cols)]
    for i, row_label in enumerate(cm.vocabulary):
        lines.append(row_label.ljust(width)
                     + "".join(str(int(c)).rjust(width) for c in cm.counts[i]))
    return lines


def render_task_block(report: TaskReport) -> str:
    lines = [f"== {report.task} ==", f"samples evaluated: {report.n_evaluated}"]
    if report.confusion is not None:
        lines.extend(_render_confusion(report.confusion))
        lines.append(f"unparsed predictions: {report.confusion.unparsed_count}")
        lines.append(f"f1: {report.f1:.6f}")
        if report.chance_f1 is not None:
            lines.append(f"chance_f1: {report.chance_f1:.6f}")
    elif report.regression is not None:
        r = report.regression
        lines.append(f"pearson_r: {r.pearson_r:.6f}")
        lines.append(f"slope: {r.slope:.6f}")
        lines.append(f"intercept: {r.intercept:.6f}")
        lines.append(f"p_value: {r.p_value:.6g}")
        lines.append(f"excluded_unparsed: {r.excluded_unparsed}")
    else:
        lines.append("no test samples")
    return "\n".join(lines)


def render_text_report(reports: dict[str, TaskReport]) -> str:
    blocks = [render_task_block(r) for r in reports.values()]
    summary = ["== summary =="]
    for name, r in reports.items():
        if r.f1 is not None:
            summary.append(f"{name}\tf1\t{r.f1:.6f}")
        elif r.regression is not None:
            summary.append(f"{name}\tpearson_r\t{r.regression.pearson_r:.6f}")
        else:
            summary.append(f"{name}\tn/a\tn/a")
    return "\n\n".join(blocks + ["\n".join(summary)]) + "\n"


def render_csv_report(reports: dict[str, TaskReport]) -> str:
    lines = ["task,metric,value,chance_f1,n,unparsed,slope,p_value"]
    for name, r in reports.items():
        if r.f1 is not None:
            chance = f"{r.chance_f1:.6f}" if r.chance_f1 is not None else ""
            lines.append(f"{name},f1,{r.f1:.6f},{chance},{r.n_evaluated},"
                         f"{r.confusion.unparsed_count},,")
        elif r.regression is not None:
            reg = r.regression
            lines.append(f"{name},pearson_r,{reg.pearson_r:.6f},,{r.n_evaluated},"
                         f"{reg.excluded_unparsed},{reg.slope:.6f},{reg.p_value:.6g}")
        else:
            lines.append(f"{name},n/a,,,0,,,")
    return "\n".join(lines) + "\n"

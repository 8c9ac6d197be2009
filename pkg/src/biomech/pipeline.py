"""Workspace layout and end-to-end pipeline stages.

Every stage is a plain function over a Workspace so the CLI, the ablation
experiment, and the test suite all share one code path. Artifacts live in a
fixed directory convention under the workspace root:

    cohort/    profiles.ndjson, index.json, <participant>/<trial>.json
    models/    tokenizer.bin, tokenizer_metrics.json, baselines/<task>.json
    tokens/    tokens.ndjson
    datasets/  dataset.ndjson, finetune_manifest.json
    reports/   eval.txt, eval.csv, ablate.txt
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import synth
from .baselines import SearchSpace, chance_baseline, randomized_search_cv, token_histogram
from .errors import EmptyInputError, MissingArtifactError
from .evalmetrics import (
    TaskReport,
    classification_report,
    parse_numeric_answer,
    regression_report,
    render_text_report,
)
from .gbdt import GBDTConfig, TreeEnsemble, fit_gbdt, load_ensemble, save_ensemble
from .motion import (
    FRAME_RATE_HZ,
    ChannelMask,
    Trajectory,
    apply_channel_mask,
    strip_to_joint_matrix,
)
from .splits import split_participants
from .tokenizer import (
    TokenSequence,
    codebook_stats,
    evaluate_rmse,
    fit_from_matrices,
    load_model,
    profile_config,
    read_token_corpus,
    save_model,
    tokenize_trial,
    write_token_corpus,
)

# Per-stage seed salts so stages draw independent streams from one CLI seed.
_SALT_SEARCH = 0x51
_SALT_CHANCE = 0x52


@dataclass(frozen=True)
class Workspace:
    root: Path

    @property
    def cohort_dir(self) -> Path:
        return self.root / "cohort"

    @property
    def profiles_path(self) -> Path:
        return self.cohort_dir / "profiles.ndjson"

    @property
    def index_path(self) -> Path:
        return self.cohort_dir / "index.json"

    @property
    def models_dir(self) -> Path:
        return self.root / "models"

    @property
    def tokenizer_path(self) -> Path:
        return self.models_dir / "tokenizer.bin"

    @property
    def tokenizer_metrics_path(self) -> Path:
        return self.models_dir / "tokenizer_metrics.json"

    @property
    def baselines_dir(self) -> Path:
        return self.models_dir / "baselines"

    @property
    def tokens_path(self) -> Path:
        return self.root / "tokens" / "tokens.ndjson"

    @property
    def dataset_path(self) -> Path:
        return self.root / "datasets" / "dataset.ndjson"

    @property
    def reports_dir(self) -> Path:
        return self.root / "reports"

    def require(self, path: Path, producer: str) -> Path:
        if not path.exists():
            raise MissingArtifactError(path, producer)
        return path


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Stage: synth


def _fmt_matrix(arr: np.ndarray) -> str:
    return "[" + ",".join(
        "[" + ",".join(f"{v:.9g}" for v in row) + "]" for row in arr
    ) + "]"


def _write_trial_compact(traj: Trajectory, path: Path) -> None:
    # Same schema as motion.write_trial, but floats at 9 significant digits;
    # full-cohort trial files dominate the workspace size.
    head = {
        "participant_id": traj.participant_id,
        "trial_id": traj.trial_id,
        "frame_rate_hz": traj.frame_rate_hz,
        "ground_truth": synth.ground_truth_to_dict(traj.ground_truth),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(head, sort_keys=True)
    with open(path, "w") as fh:
        fh.write(text[:-1] + ',"q":' + _fmt_matrix(traj.q)
                 + ',"qdot":' + _fmt_matrix(traj.qdot) + "}")


def run_synth(ws: Workspace, seed: int, participants: int,
              trials_per_participant: int = 12,
              cohort_config: synth.CohortConfig | None = None) -> dict:
    """Generate the cohort: profiles, trial files, and the trial index."""
    profiles = synth.sample_cohort(seed, participants, cohort_config)
    synth.write_cohort(profiles, ws.profiles_path)
    index: dict[str, dict] = {}
    for profile in profiles:
        for trial_id, activity, duration, trial_seed in synth.plan_trials(
                profile, seed, trials_per_participant):
            traj = synth.generate_trial(profile, trial_id, activity, duration, trial_seed)
            _write_trial_compact(traj, ws.cohort_dir / profile.participant_id / f"{trial_id}.json")
            index[trial_id] = {
                "participant_id": profile.participant_id,
                "activity": activity.value,
                "duration_s": traj.n_frames / FRAME_RATE_HZ,
                "n_frames": traj.n_frames,
                "ground_truth": synth.ground_truth_to_dict(traj.ground_truth),
            }
    _write_json(ws.index_path, index)
    return index


def read_index(ws: Workspace) -> dict[str, dict]:
    ws.require(ws.index_path, "synth")
    with open(ws.index_path) as fh:
        return json.load(fh)


def _iter_trial_paths(ws: Workspace):
    yield from sorted(ws.cohort_dir.glob("P*/*.json"))


# ---------------------------------------------------------------------------
# Stage: train-tokenizer


def run_train_tokenizer(ws: Workspace, seed: int, profile: str = "desk",
                        train_steps: int | None = None,
                        log_every: int | None = None) -> dict:
    """Fit the tokenizer on training participants; report RMSE on both splits."""
    from .motion import read_trial

    ws.require(ws.index_path, "synth")
    config = profile_config(profile, seed=seed, train_steps=train_steps)
    mask = ChannelMask()

    train_mats: list[np.ndarray] = []
    train_trials: list[Trajectory] = []
    val_trials: list[Trajectory] = []
    index = read_index(ws)
    ids = sorted({meta["participant_id"] for meta in index.values()})
    train_ids, _ = split_participants(ids, 0.9, seed)
    for path in _iter_trial_paths(ws):
        traj = read_trial(path)
        if traj.participant_id in train_ids:
            train_mats.append(strip_to_joint_matrix(apply_channel_mask(traj, mask)))
            if len(train_trials) < 60:
                train_trials.append(traj)
        else:
            val_trials.append(traj)
    if not train_mats:
        raise EmptyInputError(f"no trials under {ws.cohort_dir}")

    model, curve = fit_from_matrices(train_mats, config, mask=mask, log_every=log_every)
    fingerprint = save_model(model, ws.tokenizer_path)

    val_rmse, _ = evaluate_rmse(model, val_trials)
    train_rmse, _ = evaluate_rmse(model, train_trials)
    val_tokens = [tokenize_trial(model, t) for t in val_trials]
    _, entropy_bits, perplexity = codebook_stats(val_tokens, config.codebook_size_k)
    metrics = {
        "profile": profile,
        "fingerprint": fingerprint,
        "train_steps": config.train_steps,
        "final_recon_loss": curve[-1].recon,
        "train_rmse_deg": train_rmse,
        "validation_rmse_deg": val_rmse,
        "validation_entropy_bits": entropy_bits,
        "validation_perplexity": perplexity,
    }
    _write_json(ws.tokenizer_metrics_path, metrics)
    return metrics


# ---------------------------------------------------------------------------
# Stage: tokenize


def run_tokenize(ws: Workspace) -> list[TokenSequence]:
    from .motion import read_trial

    ws.require(ws.tokenizer_path, "train-tokenizer")
    model = load_model(ws.tokenizer_path)
    sequences = [tokenize_trial(model, read_trial(path)) for path in _iter_trial_paths(ws)]
    if not sequences:
        raise EmptyInputError(f"no trials under {ws.cohort_dir}")
    write_token_corpus(sequences, ws.tokens_path)
    return sequences


# ---------------------------------------------------------------------------
# Stage: build-dataset


def _load_records(ws: Workspace) -> list[ds.TrialRecord]:
    ws.require(ws.tokens_path, "tokenize")
    index = read_index(ws)
    records = []
    for seq in read_token_corpus(ws.tokens_path):
        meta = index[seq.trial_id]
        records.append(ds.TrialRecord(
            participant_id=meta["participant_id"],
            trial_id=seq.trial_id,
            tokens=seq,
            ground_truth=synth.ground_truth_from_dict(meta["ground_truth"]),
        ))
    return records


def _tokenizer_fingerprint(ws: Workspace) -> str:
    import hashlib

    ws.require(ws.tokenizer_path, "train-tokenizer")
    return hashlib.sha256(ws.tokenizer_path.read_bytes()).hexdigest()


def run_build_dataset(ws: Workspace, seed: int,
                      task_filter: set[ds.TaskKind] | None = None,
                      split_ratio: float = 0.9,
                      output: Path | None = None) -> ds.DatasetManifest:
    records = _load_records(ws)
    manifest = ds.build_dataset(records, seed, task_filter, split_ratio,
                                tokenizer_fingerprint=_tokenizer_fingerprint(ws))
    ds.write_dataset(manifest, output or ws.dataset_path)
    return manifest


# ---------------------------------------------------------------------------
# Stage: train-baselines


def _task_xy(manifest: ds.DatasetManifest, tokens_by_trial: dict[str, TokenSequence],
             k: int, kind: ds.TaskKind, split: str):
    spec = ds.TASK_SPECS[kind]
    feats, labels, trial_ids = [], [], []
    for s in manifest.samples:
        if s.task_kind != kind or s.split != split:
            continue
        feats.append(token_histogram(tokens_by_trial[s.trial_id], k))
        if spec.is_regression:
            value, _ = parse_numeric_answer(s.answer_text)
            labels.append(value)
        else:
            labels.append(s.answer_text)
        trial_ids.append(s.trial_id)
    x = np.asarray(feats) if feats else np.zeros((0, k))
    return x, labels, trial_ids


def train_all_baselines(manifest: ds.DatasetManifest,
                        tokens_by_trial: dict[str, TokenSequence], k: int, seed: int,
                        search_iters: int = 8,
                        tasks: set[ds.TaskKind] | None = None,
                        ) -> tuple[dict[ds.TaskKind, TreeEnsemble], dict]:
    """Train one model per present task; returns (models, summary).

    Classification tasks get a randomized search + a chance floor; regression
    tasks use a fixed configuration.
    """
    present = {s.task_kind for s in manifest.samples}
    if tasks is not None:
        present &= tasks
    models: dict[ds.TaskKind, TreeEnsemble] = {}
    summary: dict[str, dict] = {}

    for kind in ds.CLASSIFICATION_TASKS:
        if kind not in present:
            continue
        spec = ds.TASK_SPECS[kind]
        train_x, train_y, _ = _task_xy(manifest, tokens_by_trial, k, kind, "train")
        test_x, test_y, _ = _task_xy(manifest, tokens_by_trial, k, kind, "test")
        task_ord = list(ds.TaskKind).index(kind)  # stable across processes
        task_seed = int(np.random.SeedSequence(
            [seed, _SALT_SEARCH, task_ord]).generate_state(1)[0])
        space = SearchSpace(n_iterations=search_iters, seed=task_seed)
        best_config, cv_score = randomized_search_cv(
            train_x, train_y, space, vocabulary=spec.vocabulary,
            positive_label=spec.positive_label)
        model = fit_gbdt(train_x, train_y, best_config, "multiclass", spec.vocabulary)
        models[kind] = model
        chance = None
        if len(test_y) > 0:
            chance = chance_baseline(
                train_x, train_y, test_x, test_y, best_config,
                seed=int(np.random.SeedSequence(
                    [seed, _SALT_CHANCE, task_ord]).generate_state(1)[0]),
                vocabulary=spec.vocabulary, positive_label=spec.positive_label)
        summary[kind.value] = {
            "cv_f1": cv_score,
            "chance_f1": chance,
            "config": {f: getattr(best_config, f) for f in GBDTConfig.__dataclass_fields__},
        }

    for kind in ds.REGRESSION_TASKS:
        if kind not in present:
            continue
        train_x, train_y, _ = _task_xy(manifest, tokens_by_trial, k, kind, "train")
        if len(train_y) < 2:
            continue
        config = GBDTConfig(rounds=400, max_depth=4, shrinkage=0.08,
                            min_samples_leaf=3, seed=seed)
        models[kind] = fit_gbdt(train_x, train_y, config, "regression")
        summary[kind.value] = {
            "config": {f: getattr(config, f) for f in GBDTConfig.__dataclass_fields__},
        }
    return models, summary


def run_train_baselines(ws: Workspace, seed: int, search_iters: int = 8,
                        tasks: set[ds.TaskKind] | None = None) -> dict:
    ws.require(ws.dataset_path, "build-dataset")
    manifest = ds.read_dataset(ws.dataset_path)
    tokens_by_trial = {t.trial_id: t for t in read_token_corpus(ws.require(ws.tokens_path, "tokenize"))}
    k = load_model(ws.tokenizer_path).config.codebook_size_k
    models, summary = train_all_baselines(manifest, tokens_by_trial, k, seed, search_iters, tasks)
    for kind, model in models.items():
        save_ensemble(model, ws.baselines_dir / f"{kind.value}.json")
    _write_json(ws.baselines_dir / "summary.json", summary)
    return summary


def load_baselines(baselines_dir: Path) -> tuple[dict[ds.TaskKind, TreeEnsemble], dict]:
    summary_path = Path(baselines_dir) / "summary.json"
    if not summary_path.exists():
        raise MissingArtifactError(summary_path, "train-baselines")
    with open(summary_path) as fh:
        summary = json.load(fh)
    models = {}
    for kind in ds.TaskKind:
        path = Path(baselines_dir) / f"{kind.value}.json"
        if path.exists():
            models[kind] = load_ensemble(path)
    return models, summary


# ---------------------------------------------------------------------------
# Stage: eval


def evaluate_baselines(manifest: ds.DatasetManifest,
                       tokens_by_trial: dict[str, TokenSequence],
                       gt_by_trial: dict[str, synth.TrialGroundTruth],
                       models: dict[ds.TaskKind, TreeEnsemble],
                       summary: dict, k: int, seed: int) -> dict[str, TaskReport]:
    """Score every trained task on the test split.

    Predictions go through the same text rendering an LLM reply would: labels
    are emitted as answer text and parsed back; regression outputs are
    formatted with the task's unit and re-extracted numerically. Regression
    truth comes from the unrounded ground-truth measurements.
    """
    reports: dict[str, TaskReport] = {}
    for kind in list(ds.CLASSIFICATION_TASKS) + list(ds.REGRESSION_TASKS):
        if kind not in models:
            continue
        spec = ds.TASK_SPECS[kind]
        test_x, test_y, trial_ids = _task_xy(manifest, tokens_by_trial, k, kind, "test")
        if len(trial_ids) == 0:
            reports[kind.value] = TaskReport(task=kind.value, n_evaluated=0)
            continue
        if not spec.is_regression:
            pred_texts = models[kind].predict_label(test_x)
            cm, f1 = classification_report(pred_texts, test_y, spec.vocabulary,
                                           spec.positive_label)
            chance = summary.get(kind.value, {}).get("chance_f1")
            reports[kind.value] = TaskReport(task=kind.value, n_evaluated=len(test_y),
                                             f1=f1, chance_f1=chance, confusion=cm)
        else:
            pred_texts = [spec.format_value(v) for v in models[kind].predict_value(test_x)]
            parsed, truths = [], []
            excluded = 0
            for text, trial_id in zip(pred_texts, trial_ids):
                hit = parse_numeric_answer(text)
                if hit is None:
                    excluded += 1
                    continue
                parsed.append(hit[0])
                truths.append(ds.TASK_SPECS[kind].truth_value(gt_by_trial[trial_id]))
            if len(parsed) < 3:
                reports[kind.value] = TaskReport(task=kind.value, n_evaluated=len(trial_ids))
                continue
            reg = regression_report(parsed, truths, excluded_unparsed=excluded, seed=seed)
            reports[kind.value] = TaskReport(task=kind.value, n_evaluated=len(trial_ids),
                                             regression=reg)
    return reports


def _gt_by_trial(index: dict[str, dict]) -> dict[str, synth.TrialGroundTruth]:
    return {tid: synth.ground_truth_from_dict(meta["ground_truth"])
            for tid, meta in index.items()}


def run_eval(ws: Workspace, fmt: str = "text") -> dict[str, TaskReport]:
    """Evaluate the on-disk dataset + baselines; write reports/eval.{txt,csv}."""
    from .evalmetrics import render_csv_report

    manifest = ds.read_dataset(ws.require(ws.dataset_path, "build-dataset"))
    tokens_by_trial = {t.trial_id: t for t in read_token_corpus(ws.require(ws.tokens_path, "tokenize"))}
    gt_map = _gt_by_trial(read_index(ws))
    models, summary = load_baselines(ws.baselines_dir)
    k = load_model(ws.tokenizer_path).config.codebook_size_k
    reports = evaluate_baselines(manifest, tokens_by_trial, gt_map, models, summary,
                                 k, manifest.seed)
    ws.reports_dir.mkdir(parents=True, exist_ok=True)
    (ws.reports_dir / "eval.txt").write_text(render_text_report(reports))
    if fmt == "csv":
        (ws.reports_dir / "eval.csv").write_text(render_csv_report(reports))
    return reports


def run_experiment(ws: Workspace, seed: int,
                   task_filter: set[ds.TaskKind] | None = None,
                   search_iters: int = 8) -> dict[str, TaskReport]:
    """In-memory build-dataset + train-baselines + eval, identical code path
    to the on-disk stages (used by --runs and ablate)."""
    records = _load_records(ws)
    manifest = ds.build_dataset(records, seed, task_filter,
                                tokenizer_fingerprint=_tokenizer_fingerprint(ws))
    tokens_by_trial = {r.trial_id: r.tokens for r in records}
    gt_map = {r.trial_id: r.ground_truth for r in records}
    k = load_model(ws.tokenizer_path).config.codebook_size_k
    models, summary = train_all_baselines(manifest, tokens_by_trial, k, seed, search_iters)
    return evaluate_baselines(manifest, tokens_by_trial, gt_map, models, summary, k, seed)


def run_eval_runs(ws: Workspace, seed: int, runs: int, search_iters: int = 8) -> str:
    """Repeat dataset build + baseline training with derived seeds; aggregate."""
    from .evalmetrics import aggregate_runs, render_aggregate_table

    per_run = []
    for i in range(runs):
        reports = run_experiment(ws, seed + i, search_iters=search_iters)
        per_run.append({name: r.primary_metric for name, r in reports.items()
                        if r.f1 is not None or r.regression is not None})
    # Small cohorts can lose a task's test samples under some split seeds;
    # aggregate over the tasks every run scored.
    common = set.intersection(*(set(d) for d in per_run))
    ordered = [k.value for k in list(ds.CLASSIFICATION_TASKS) + list(ds.REGRESSION_TASKS)
               if k.value in common]
    per_run = [{t: d[t] for t in ordered} for d in per_run]
    table = render_aggregate_table(aggregate_runs(per_run))
    ws.reports_dir.mkdir(parents=True, exist_ok=True)
    (ws.reports_dir / "eval_runs.txt").write_text(table + "\n")
    return table


def run_ablate(ws: Workspace, seed: int, subsets: list[tuple[str, set[ds.TaskKind] | None]],
               search_iters: int = 8) -> str:
    """Run the experiment once per task subset and emit a comparison table.

    A subset of None means the full task set; its block reproduces the default
    eval report for the same seed exactly.
    """
    blocks = []
    metrics: list[tuple[str, dict[str, TaskReport]]] = []
    for name, subset in subsets:
        reports = run_experiment(ws, seed, task_filter=subset, search_iters=search_iters)
        metrics.append((name, reports))
        blocks.append(f"### subset: {name}\n\n{render_text_report(reports)}")

    all_tasks = [k.value for k in list(ds.CLASSIFICATION_TASKS) + list(ds.REGRESSION_TASKS)]
    seen = [t for t in all_tasks if any(t in reps for _, reps in metrics)]
    width = max(16, max(len(t) for t in seen) + 2)
    head = "subset".ljust(20) + "".join(t.rjust(width) for t in seen)
    rows = [head]
    for name, reps in metrics:
        cells = []
        for t in seen:
            r = reps.get(t)
            cells.append(f"{r.primary_metric:.4f}".rjust(width)
                         if r is not None and (r.f1 is not None or r.regression is not None)
                         else "-".rjust(width))
        rows.append(name.ljust(20) + "".join(cells))
    table = "\n".join(rows)

    text = "\n\n".join(blocks + ["### comparison\n\n" + table]) + "\n"
    ws.reports_dir.mkdir(parents=True, exist_ok=True)
    (ws.reports_dir / "ablate.txt").write_text(text)
    return text

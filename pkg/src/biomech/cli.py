"""Command-line entry point orchestrating the full pipeline.

Workspace layout (created on demand):
    cohort/    profiles + trial files + index
    models/    tokenizer + baselines
    tokens/    token corpus
    datasets/  multimodal dataset + fine-tune manifest
    reports/   evaluation and ablation reports

Exit codes: 0 success, 1 runtime error, 2 usage error. Logs go to stderr,
artifacts to the workspace.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import dataset as ds
from . import pipeline


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _workspace(args) -> pipeline.Workspace:
    return pipeline.Workspace(root=Path(args.workspace))


def _parse_task_filter(text: str | None) -> set[ds.TaskKind] | None:
    if text is None:
        return None
    by_name = {k.value.casefold(): k for k in ds.TaskKind}
    out = set()
    for raw in text.split(","):
        name = raw.strip().casefold()
        if not name:
            continue
        if name not in by_name:
            raise argparse.ArgumentTypeError(
                f"unknown task {raw!r}; choose from {[k.value for k in ds.TaskKind]}")
        out.add(by_name[name])
    if not out:
        raise argparse.ArgumentTypeError("task filter is empty")
    return out


def _parse_subsets(text: str) -> list[tuple[str, set[ds.TaskKind] | None]]:
    subsets = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        if part.casefold() == "all":
            subsets.append(("all", None))
        else:
            subsets.append((part, _parse_task_filter(part)))
    if not subsets:
        raise argparse.ArgumentTypeError("no subsets given")
    return subsets


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="biomech", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_ws(p):
        p.add_argument("--workspace", required=True, help="workspace directory")

    p = sub.add_parser("synth", help="generate the synthetic cohort")
    add_ws(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--participants", type=int, default=120)
    p.add_argument("--trials-per-participant", type=int, default=12)

    p = sub.add_parser("train-tokenizer", help="fit the motion tokenizer")
    add_ws(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--profile", choices=("desk", "paper"), default="desk")
    p.add_argument("--steps", type=int, default=None, help="override train steps")
    p.add_argument("--log-every", type=int, default=None)

    p = sub.add_parser("tokenize", help="convert every trial to motion tokens")
    add_ws(p)

    p = sub.add_parser("build-dataset", help="render the multimodal QA dataset")
    add_ws(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--task-filter", type=str, default=None,
                   help="comma-separated task kinds to keep")
    p.add_argument("--split-ratio", type=float, default=0.9)
    p.add_argument("--output", type=str, default=None)

    p = sub.add_parser("train-baselines", help="fit boosted-tree baselines per task")
    add_ws(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--search-iters", type=int, default=8)
    p.add_argument("--task", type=str, default=None, help="restrict to one task kind")

    p = sub.add_parser("eval", help="evaluate baselines on the test split")
    add_ws(p)
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.add_argument("--runs", type=int, default=1,
                   help="repeat build+train+eval with derived seeds and aggregate")
    p.add_argument("--seed", type=int, default=0, help="base seed for --runs > 1")
    p.add_argument("--search-iters", type=int, default=8)

    p = sub.add_parser("ablate", help="compare task subsets (build+train+eval each)")
    add_ws(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--subsets", type=str, required=True,
                   help="semicolon-separated subsets, e.g. 'activity,impaired;all'")
    p.add_argument("--search-iters", type=int, default=8)

    p = sub.add_parser("export-manifest", help="write the fine-tune configuration manifest")
    p.add_argument("--output", type=str, required=True)
    p.add_argument("--variant", choices=tuple(ds.FINETUNE_VARIANTS), default="default")
    p.add_argument("--base-model", type=str, default="google/gemma-3-1b-it")

    p = sub.add_parser("serve", help="serve the chat API")
    add_ws(p)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", type=str, default="127.0.0.1")
    p.add_argument("--backend", choices=("mock", "external"), default="mock")
    p.add_argument("--model-dir", type=str, default=None,
                   help="override the models directory")
    p.add_argument("--ui-dir", type=str, default=None,
                   help="serve a static frontend from this directory")
    return parser


def _cmd_synth(args) -> int:
    index = pipeline.run_synth(_workspace(args), args.seed, args.participants,
                               args.trials_per_participant)
    _log(f"wrote {args.participants} profiles, {len(index)} trials")
    return 0


def _cmd_train_tokenizer(args) -> int:
    metrics = pipeline.run_train_tokenizer(_workspace(args), args.seed, args.profile,
                                           args.steps, args.log_every)
    _log(f"tokenizer trained: validation RMSE {metrics['validation_rmse_deg']:.2f} deg, "
         f"perplexity {metrics['validation_perplexity']:.1f}")
    return 0


def _cmd_tokenize(args) -> int:
    sequences = pipeline.run_tokenize(_workspace(args))
    _log(f"tokenized {len(sequences)} trials")
    return 0


def _cmd_build_dataset(args) -> int:
    manifest = pipeline.run_build_dataset(
        _workspace(args), args.seed, _parse_task_filter(args.task_filter),
        args.split_ratio, Path(args.output) if args.output else None)
    _log(f"dataset: {len(manifest.samples)} samples over {len(manifest.task_counts)} tasks")
    return 0


def _cmd_train_baselines(args) -> int:
    tasks = _parse_task_filter(args.task)
    summary = pipeline.run_train_baselines(_workspace(args), args.seed,
                                           args.search_iters, tasks)
    for task, info in summary.items():
        if "cv_f1" in info:
            _log(f"{task}: cv f1 {info['cv_f1']:.3f}, chance {info.get('chance_f1')}")
    return 0


def _cmd_eval(args) -> int:
    ws = _workspace(args)
    if args.runs > 1:
        table = pipeline.run_eval_runs(ws, args.seed, args.runs, args.search_iters)
        _log(table)
    else:
        reports = pipeline.run_eval(ws, args.format)
        _log(f"evaluated {len(reports)} tasks -> {ws.reports_dir / 'eval.txt'}")
    return 0


def _cmd_ablate(args) -> int:
    text = pipeline.run_ablate(_workspace(args), args.seed,
                               _parse_subsets(args.subsets), args.search_iters)
    _log(text.rsplit("### comparison", 1)[-1])
    return 0


def _cmd_export_manifest(args) -> int:
    manifest = ds.export_finetune_manifest(Path(args.output), args.variant, args.base_model)
    _log(f"wrote fine-tune manifest (rank {manifest['adapter_rank']}) to {args.output}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .external import ExternalConfig
    from .server import create_app, load_assets

    ws = _workspace(args)
    assets = load_assets(ws, Path(args.model_dir) if args.model_dir else None)
    external_config = None
    if args.backend == "external":
        base_url = os.environ.get("BIOMECH_EXTERNAL_BASE_URL")
        if not base_url:
            _log("BIOMECH_EXTERNAL_BASE_URL must be set for the external backend")
            return 2
        external_config = ExternalConfig(base_url=base_url,
                                         api_key=os.environ.get("BIOMECH_EXTERNAL_API_KEY"))
    app = create_app(assets, args.backend, external_config,
                     Path(args.ui_dir) if args.ui_dir else None)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "train-tokenizer": _cmd_train_tokenizer,
    "tokenize": _cmd_tokenize,
    "build-dataset": _cmd_build_dataset,
    "train-baselines": _cmd_train_baselines,
    "eval": _cmd_eval,
    "ablate": _cmd_ablate,
    "export-manifest": _cmd_export_manifest,
    "serve": _cmd_serve,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except argparse.ArgumentTypeError as exc:
        _log(f"error: {exc}")
        return 2
    try:
        return _COMMANDS[args.command](args)
    except argparse.ArgumentTypeError as exc:
        _log(f"usage error: {exc}")
        return 2
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        _log(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())

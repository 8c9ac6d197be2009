"""Shared fixtures: a small end-to-end workspace reused by server/CLI tests."""

from __future__ import annotations

from pathlib import Path

import pytest

from biomech import pipeline

MINI_SEED = 11
MINI_PARTICIPANTS = 14
MINI_TRIALS = 8
MINI_TOKENIZER_STEPS = 220
MINI_SEARCH_ITERS = 2

GOLDEN_DIR = Path(__file__).parent / "golden"


@pytest.fixture(scope="session")
def mini_workspace(tmp_path_factory) -> pipeline.Workspace:
    """A fully populated small workspace: cohort, tokenizer, tokens, dataset,
    baselines, eval report."""
    ws = pipeline.Workspace(root=tmp_path_factory.mktemp("mini_ws"))
    pipeline.run_synth(ws, seed=MINI_SEED, participants=MINI_PARTICIPANTS,
                       trials_per_participant=MINI_TRIALS)
    pipeline.run_train_tokenizer(ws, seed=MINI_SEED, profile="desk",
                                 train_steps=MINI_TOKENIZER_STEPS)
    pipeline.run_tokenize(ws)
    pipeline.run_build_dataset(ws, seed=MINI_SEED)
    pipeline.run_train_baselines(ws, seed=MINI_SEED, search_iters=MINI_SEARCH_ITERS)
    pipeline.run_eval(ws, "csv")
    return ws

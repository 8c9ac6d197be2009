import json

import pytest

from biomech.cli import main
from biomech.pipeline import Workspace

from conftest import MINI_SEED, MINI_SEARCH_ITERS


class TestUsageErrors:
    def test_missing_subcommand_exits_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2

    def test_unknown_flag_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["synth", "--workspace", "/tmp/x", "--bogus"])
        assert exc.value.code == 2

    def test_bad_task_filter_is_usage_error(self, tmp_path):
        code = main(["build-dataset", "--workspace", str(tmp_path),
                     "--task-filter", "NotATask"])
        assert code == 2


class TestMissingArtifacts:
    def test_tokenize_before_training_names_producer(self, tmp_path, capsys):
        code = main(["tokenize", "--workspace", str(tmp_path)])
        assert code == 1
        err = capsys.readouterr().err
        assert "train-tokenizer" in err

    def test_eval_before_dataset(self, tmp_path, capsys):
        code = main(["eval", "--workspace", str(tmp_path)])
        assert code == 1
        assert "build-dataset" in capsys.readouterr().err


class TestSynth:
    def test_participant_count_contract(self, tmp_path, capsys):
        code = main(["synth", "--workspace", str(tmp_path), "--seed", "7",
                     "--participants", "5", "--trials-per-participant", "3"])
        assert code == 0
        ws = Workspace(root=tmp_path)
        profiles = ws.profiles_path.read_text().strip().splitlines()
        assert len(profiles) == 5
        assert len(list(ws.cohort_dir.glob("P*/*.json"))) == 15

    def test_synth_deterministic_bytes(self, tmp_path):
        a_root, b_root = tmp_path / "a", tmp_path / "b"
        for root in (a_root, b_root):
            assert main(["synth", "--workspace", str(root), "--seed", "3",
                         "--participants", "3", "--trials-per-participant", "2"]) == 0
        a_files = sorted(a_root.rglob("*.json"))
        b_files = sorted(b_root.rglob("*.json"))
        assert [f.name for f in a_files] == [f.name for f in b_files]
        for fa, fb in zip(a_files, b_files):
            assert fa.read_bytes() == fb.read_bytes()


class TestExportManifest:
    def test_default_and_small(self, tmp_path):
        out = tmp_path / "ft.json"
        assert main(["export-manifest", "--output", str(out)]) == 0
        manifest = json.loads(out.read_text())
        assert manifest["adapter_rank"] == 32
        assert main(["export-manifest", "--output", str(out), "--variant", "small"]) == 0
        assert json.loads(out.read_text())["adapter_rank"] == 16


class TestPipelineOnMiniWorkspace:
    """Heavier CLI checks against the prebuilt session workspace."""

    def test_artifacts_exist(self, mini_workspace):
        assert mini_workspace.tokenizer_path.exists()
        assert mini_workspace.tokens_path.exists()
        assert mini_workspace.dataset_path.exists()
        assert (mini_workspace.baselines_dir / "summary.json").exists()
        assert (mini_workspace.reports_dir / "eval.txt").exists()
        assert (mini_workspace.reports_dir / "eval.csv").exists()

    def test_eval_report_has_block_per_active_task(self, mini_workspace):
        text = (mini_workspace.reports_dir / "eval.txt").read_text()
        manifest_header = json.loads(
            mini_workspace.dataset_path.read_text().splitlines()[0])
        for task in manifest_header["task_counts"]:
            assert f"== {task} ==" in text

    def test_tokenize_idempotent_bytes(self, mini_workspace):
        before = mini_workspace.tokens_path.read_bytes()
        assert main(["tokenize", "--workspace", str(mini_workspace.root)]) == 0
        assert mini_workspace.tokens_path.read_bytes() == before

    def test_build_dataset_idempotent_bytes(self, mini_workspace):
        before = mini_workspace.dataset_path.read_bytes()
        assert main(["build-dataset", "--workspace", str(mini_workspace.root),
                     "--seed", str(MINI_SEED)]) == 0
        assert mini_workspace.dataset_path.read_bytes() == before

    def test_eval_idempotent_bytes(self, mini_workspace):
        report = mini_workspace.reports_dir / "eval.txt"
        before = report.read_bytes()
        assert main(["eval", "--workspace", str(mini_workspace.root)]) == 0
        assert report.read_bytes() == before

    def test_task_filtered_dataset(self, mini_workspace, tmp_path):
        out = tmp_path / "filtered.ndjson"
        assert main(["build-dataset", "--workspace", str(mini_workspace.root),
                     "--seed", "5", "--task-filter", "activity,impaired",
                     "--output", str(out)]) == 0
        header = json.loads(out.read_text().splitlines()[0])
        assert set(header["task_counts"]) == {"Activity", "Impaired"}

    def test_ablate_full_subset_reproduces_eval_report(self, mini_workspace):
        assert main(["ablate", "--workspace", str(mini_workspace.root),
                     "--seed", str(MINI_SEED), "--subsets", "activity,impaired;all",
                     "--search-iters", str(MINI_SEARCH_ITERS)]) == 0
        ablate_text = (mini_workspace.reports_dir / "ablate.txt").read_text()
        eval_text = (mini_workspace.reports_dir / "eval.txt").read_text()
        assert "### subset: activity,impaired" in ablate_text
        assert "### subset: all" in ablate_text
        assert "### comparison" in ablate_text
        # the full-task-set block reproduces the standalone eval report
        full_block = ablate_text.split("### subset: all\n\n", 1)[1].split("\n\n### comparison")[0]
        assert full_block.strip() == eval_text.strip()

    def test_eval_runs_aggregate(self, mini_workspace):
        assert main(["eval", "--workspace", str(mini_workspace.root), "--runs", "2",
                     "--seed", str(MINI_SEED), "--search-iters", "1"]) == 0
        table = (mini_workspace.reports_dir / "eval_runs.txt").read_text()
        assert table.splitlines()[1].startswith("Mean")
        assert "(over 2 runs)" in table

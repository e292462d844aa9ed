"""End-to-end tests of the command-line interface."""

import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

from dgcca.cli import cli
from dgcca.dataset import save_matrix


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def view_files(tmp_path, single_factor):
    _, dataset, _ = single_factor
    paths = []
    for name, view in zip(dataset.names, dataset.views):
        path = tmp_path / f"{name}.csv"
        save_matrix(view, path)
        paths.append(str(path))
    return ",".join(paths)


def last_json(text: str) -> dict:
    return json.loads(text.strip().splitlines()[-1])


def decompose_args(view_files: str, out: Path, *extra: str) -> list[str]:
    return ["decompose", "--views", view_files, "--seed", "5", "--threads", "1", "--out", str(out), *extra]


class TestDecompose:
    def test_writes_manifest_and_matrices(self, runner, tmp_path, view_files):
        out = tmp_path / "out"
        result = runner.invoke(cli, decompose_args(view_files, out, "--ranks", "1,1,1", "--bootstrap", "100"))
        assert result.exit_code == 0, result.output
        manifest_path = Path(result.stdout.strip().splitlines()[-1])
        assert manifest_path == out / "manifest.json"
        manifest = json.loads(manifest_path.read_text())
        assert manifest["schema_version"] == "1"
        assert manifest["seed"] == 5
        assert manifest["params"]["ranks"] == [1, 1, 1]
        assert manifest["params"]["provenance"] == "selected"
        assert (out / "selection.json").exists()
        for names in manifest["files"].values():
            for name in names.values():
                assert (out / name).exists()
        table = pd.read_csv(out / manifest["files"]["view1"]["pve"])
        assert list(table.columns) == ["variable", "pve_c", "pve_d"]

    def test_same_seed_same_manifest(self, runner, tmp_path, view_files):
        args = ("--ranks", "1,1,1", "--bootstrap", "100")
        first = runner.invoke(cli, decompose_args(view_files, tmp_path / "a", *args))
        second = runner.invoke(cli, decompose_args(view_files, tmp_path / "b", *args))
        assert first.exit_code == second.exit_code == 0
        assert (tmp_path / "a" / "manifest.json").read_text() == (tmp_path / "b" / "manifest.json").read_text()
        np.testing.assert_array_equal(
            pd.read_csv(tmp_path / "a" / "view2_c_hat.csv", header=None).to_numpy(),
            pd.read_csv(tmp_path / "b" / "view2_c_hat.csv", header=None).to_numpy(),
        )

    def test_user_params(self, runner, tmp_path, view_files, single_factor):
        _, _, truth = single_factor
        params_path = tmp_path / "params.json"
        params_path.write_text(json.dumps(truth.params.to_dict()))
        out = tmp_path / "out"
        result = runner.invoke(cli, decompose_args(view_files, out, "--params", str(params_path), "--format", "binary"))
        assert result.exit_code == 0, result.output
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["params"]["provenance"] == "user"
        assert "selection_report" not in manifest
        assert (out / "view3_d_hat.bin").exists()

    def test_hierarchy(self, runner, tmp_path, view_files, single_factor):
        _, _, truth = single_factor
        params_path = tmp_path / "params.json"
        params_path.write_text(json.dumps(truth.params.to_dict()))
        out = tmp_path / "out"
        result = runner.invoke(cli, decompose_args(view_files, out, "--params", str(params_path), "--levels", "2"))
        assert result.exit_code == 0, result.output
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["stop_reason"] in {"max_levels", "empty_I0", "pve_floor"}
        assert 1 <= len(manifest["levels"]) <= 2
        assert (out / "level0" / "view1_c_hat.csv").exists()

    def test_config_file_supplies_defaults(self, runner, tmp_path, view_files):
        config = tmp_path / "dgcca.yaml"
        config.write_text("decompose:\n  ranks: [1, 1, 1]\n  bootstrap: 100\n  seed: 9\n")
        out = tmp_path / "out"
        result = runner.invoke(
            cli, ["--config", str(config), "decompose", "--views", view_files, "--threads", "1", "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
        assert json.loads((out / "manifest.json").read_text())["seed"] == 9

    def test_ranks_and_params_conflict(self, runner, tmp_path, view_files):
        params_path = tmp_path / "params.json"
        params_path.write_text("{}")
        result = runner.invoke(cli, decompose_args(view_files, tmp_path / "out", "--ranks", "1,1,1", "--params", str(params_path)))
        assert result.exit_code == 1
        assert last_json(result.stderr)["error"] == "config_error"

    @pytest.mark.parametrize(
        "extra,code",
        [
            (("--significance", "1.5"), "config_error"),
            (("--ranks", "1,x,1"), "config_error"),
            (("--ranks", "1,1"), "arity_error"),
            (("--ranks", "500,1,1"), "rank_error"),
        ],
    )
    def test_bad_flags(self, runner, tmp_path, view_files, extra, code):
        result = runner.invoke(cli, decompose_args(view_files, tmp_path / "out", *extra))
        assert result.exit_code == 1
        assert last_json(result.stderr)["error"] == code

    def test_missing_view_file(self, runner, tmp_path):
        result = runner.invoke(cli, decompose_args(str(tmp_path / "nope.csv") + "," + str(tmp_path / "b.csv"), tmp_path / "out"))
        assert result.exit_code == 1
        assert last_json(result.stderr)["error"] == "config_error"

    def test_views_required(self, runner, tmp_path):
        result = runner.invoke(cli, ["decompose", "--out", str(tmp_path / "out")])
        assert result.exit_code == 1
        assert "--views" in last_json(result.stderr)["message"]


class TestSimulate:
    def test_writes_study(self, runner, tmp_path):
        out = tmp_path / "study"
        result = runner.invoke(
            cli,
            ["simulate", "--setup", "1.1", "--p1", "30", "--n", "80", "--reps", "2", "--seed", "1",
             "--threads", "1", "--out", str(out), "--per-rep-csv"],
        )
        assert result.exit_code == 0, result.output
        study = json.loads((out / "study.json").read_text())
        assert study["reps"] == 2
        assert study["setup"]["p"] == [30, 30, 30]
        assert (out / "replications.csv").exists()
        assert len(pd.read_csv(out / "replications_views.csv")) == 6

    def test_setup_required(self, runner, tmp_path):
        result = runner.invoke(cli, ["simulate", "--out", str(tmp_path)])
        assert result.exit_code == 1
        assert last_json(result.stderr)["error"] == "config_error"

    def test_unknown_yaml_key(self, runner, tmp_path):
        config = tmp_path / "dgcca.yaml"
        config.write_text("simulate:\n  setup: '1.1'\n  replicates: 3\n")
        result = runner.invoke(cli, ["--config", str(config), "simulate", "--out", str(tmp_path / "out")])
        assert result.exit_code == 1
        assert "replicates" in last_json(result.stderr)["message"]


class TestEvaluate:
    def test_swiss(self, runner, tmp_path):
        (tmp_path / "m.csv").write_text("1,1,3,3\n0,2,0,2\n")
        (tmp_path / "labels.txt").write_text("A\nA\nB\nB\n")
        result = runner.invoke(
            cli, ["evaluate", "swiss", "--matrix", str(tmp_path / "m.csv"), "--labels", str(tmp_path / "labels.txt")]
        )
        assert result.exit_code == 0, result.output
        payload = json.loads(result.stdout)
        assert payload["metric"] == "swiss"
        assert payload["value"] == pytest.approx(0.5)

    def test_swiss_label_mismatch(self, runner, tmp_path):
        (tmp_path / "m.csv").write_text("1,1,3,3\n0,2,0,2\n")
        (tmp_path / "labels.txt").write_text("A,A,B\n")
        result = runner.invoke(
            cli, ["evaluate", "swiss", "--matrix", str(tmp_path / "m.csv"), "--labels", str(tmp_path / "labels.txt")]
        )
        assert result.exit_code == 1
        assert last_json(result.stderr)["error"] == "shape_error"

    def test_unexpected_failure_reported_as_json(self, runner, tmp_path, monkeypatch):
        def broken(_):
            raise ValueError("array must not contain infs or NaNs")

        monkeypatch.setattr("dgcca.cli.swiss", broken)
        (tmp_path / "m.csv").write_text("1,1,3,3\n0,2,0,2\n")
        (tmp_path / "labels.txt").write_text("A\nA\nB\nB\n")
        result = runner.invoke(
            cli, ["evaluate", "swiss", "--matrix", str(tmp_path / "m.csv"), "--labels", str(tmp_path / "labels.txt")]
        )
        assert result.exit_code == 1
        payload = last_json(result.stderr)
        assert payload["error"] == "internal_error"
        assert payload["message"].startswith("ValueError")

    def test_rho1_of_identical_views(self, runner, tmp_path, rng):
        x = np.outer(rng.standard_normal(4), rng.standard_normal(30))
        save_matrix(x - x.mean(axis=1, keepdims=True), tmp_path / "d.csv")
        paths = ",".join([str(tmp_path / "d.csv")] * 3)
        result = runner.invoke(cli, ["evaluate", "rho1", "--matrices", paths])
        assert result.exit_code == 0, result.output
        assert json.loads(result.stdout)["value"] == pytest.approx(3.0)

    def test_orthogonality(self, runner, tmp_path, rng):
        paths = []
        for k in range(3):
            x = rng.standard_normal((6, 1)) @ rng.standard_normal((1, 200))
            save_matrix(x - x.mean(axis=1, keepdims=True), tmp_path / f"d{k}.csv")
            paths.append(str(tmp_path / f"d{k}.csv"))
        result = runner.invoke(cli, ["evaluate", "orthogonality", "--matrices", ",".join(paths), "--fdr", "0.1"])
        assert result.exit_code == 0, result.output
        payload = json.loads(result.stdout)
        assert payload["fdr_level"] == 0.1
        assert len(payload["pairs"]) == 3

    def test_orthogonality_bad_fdr(self, runner, tmp_path):
        result = runner.invoke(cli, ["evaluate", "orthogonality", "--matrices", "a.csv,b.csv", "--fdr", "2"])
        assert result.exit_code == 1
        assert last_json(result.stderr)["error"] == "config_error"

    def test_rank_quality(self, runner, tmp_path):
        pd.DataFrame({"variable": list("abcd"), "pve_c": [0.9, 0.1, 0.5, 0.3]}).to_csv(tmp_path / "true.csv", index=False)
        pd.DataFrame({"variable": list("abcd"), "pve_c": [0.8, 0.2, 0.6, 0.4]}).to_csv(tmp_path / "est.csv", index=False)
        result = runner.invoke(
            cli,
            ["evaluate", "rank-quality", "--true", str(tmp_path / "true.csv"), "--estimated", str(tmp_path / "est.csv"),
             "--column", "pve_c"],
        )
        assert result.exit_code == 0, result.output
        payload = json.loads(result.stdout)
        assert payload["spearman"] == pytest.approx(1.0)
        assert payload["ndcg"] == pytest.approx(1.0)

    def test_rank_quality_missing_column(self, runner, tmp_path):
        pd.DataFrame({"pve_c": [0.9, 0.1]}).to_csv(tmp_path / "t.csv", index=False)
        result = runner.invoke(
            cli, ["evaluate", "rank-quality", "--true", str(tmp_path / "t.csv"), "--estimated", str(tmp_path / "t.csv"),
                  "--column", "pve_d"],
        )
        assert result.exit_code == 1
        assert last_json(result.stderr)["error"] == "config_error"

import os

import pytest

import tibcad
import tibcad.cli as cli
from tibcad import phantom
from tibcad.exceptions import (EXIT_CONFIG, EXIT_DATA, EXIT_DEGENERATE,
                               EXIT_OK, DegenerateStatisticsError,
                               SchemaError, StageError, exit_code_for)
from tibcad.volio import read_mask, read_volume

print(tibcad.__path__)

__author__ = "tibcad contributors"
__copyright__ = "tibcad contributors"
__license__ = "mit"


@pytest.fixture
def fixture_config(tmp_path):
    path = tmp_path / "tibcad.txt"
    path.write_text("svm.epochs: 10\nevaluation.runs: 2\n")

    yield str(path)


@pytest.fixture
def fixture_spec(tmp_path, small_spec):
    path = tmp_path / "phantom.txt"
    phantom.write_phantom_spec(path, small_spec)

    yield str(path)


class TestArguments(object):
    def test_flags_become_overrides(self):
        args = cli.parse_args(["segment", "--in", "ct.hdr", "--out", "m.hdr",
                               "--theta", "0.4", "--no-gating"])
        actual = cli.overrides_from_args(args)

        assert actual == {"input": "ct.hdr", "segmentation.theta": "0.4",
                          "gating": "false"}

    def test_command_required(self):
        with pytest.raises(SystemExit):
            cli.parse_args([])

    def test_exit_codes(self):
        assert exit_code_for(DegenerateStatisticsError("zero")) == \
            EXIT_DEGENERATE
        assert exit_code_for(StageError("score", SchemaError("x"))) == \
            EXIT_DATA


class TestExitCodes(object):
    def test_even_patch_size(self, tmp_path, small_suite):
        manifest, _ = small_suite
        code = cli.main(["features", "--manifest", manifest,
                         "--patch-size", "10",
                         "--out", str(tmp_path / "f.csv")])

        assert code == EXIT_CONFIG
        assert not (tmp_path / "f.csv").exists()

    def test_missing_flag(self, tmp_path):
        assert cli.main(["segment", "--out", str(tmp_path / "m.hdr")]) \
            == EXIT_CONFIG

    def test_unknown_config_key(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("bscale.radius: 3\n")

        assert cli.main(["--config", str(path), "segment", "--in", "x.hdr",
                         "--out", "m.hdr"]) == EXIT_CONFIG

    def test_missing_volume(self, tmp_path):
        code = cli.main(["segment", "--in", str(tmp_path / "absent.hdr"),
                         "--out", str(tmp_path / "m.hdr")])

        assert code == EXIT_DATA


class TestCommands(object):
    def test_phantom(self, tmp_path, fixture_spec, small_spec):
        prefix = str(tmp_path / "p")
        code = cli.main(["phantom", "--spec", fixture_spec,
                         "--out-prefix", prefix, "--seed", "3",
                         "--tib-clusters", "2"])
        volume = read_volume(prefix + ".hdr")
        tib = read_mask(prefix + "_tib.hdr")

        assert code == EXIT_OK
        assert volume.dims == small_spec.dims
        assert tib.count() > 0
        assert os.path.exists(prefix + "_lungs.hdr")

    def test_segment_and_candidates(self, tmp_path, small_suite):
        _, scans = small_suite
        lungs = str(tmp_path / "lungs.hdr")
        scale = str(tmp_path / "scale.hdr")
        cand = str(tmp_path / "cand.hdr")

        assert cli.main(["segment", "--in", scans[0].volume,
                         "--out", lungs]) == EXIT_OK
        assert cli.main(["candidates", "--in", scans[0].volume,
                         "--lungs", lungs, "--out", scale,
                         "--candidates", cand]) == EXIT_OK
        assert read_mask(cand).count() <= read_mask(lungs).count()

    def test_features_train_evaluate_run(self, tmp_path, small_suite,
                                         fixture_config, capsys):
        manifest, scans = small_suite
        features = str(tmp_path / "shape.csv")
        model = str(tmp_path / "model.txt")
        prefix = str(tmp_path / "out" / "case001")
        common = ["--config", fixture_config]

        assert cli.main(common + ["features", "--manifest", manifest,
                                  "--mode", "shape",
                                  "--out", features]) == EXIT_OK
        assert cli.main(common + ["train", "--features", features,
                                  "--out", model]) == EXIT_OK
        assert cli.main(common + ["evaluate", "--features", features,
                                  "--out", str(tmp_path / "eval.txt"),
                                  "--roc", str(tmp_path / "roc.csv")]) \
            == EXIT_OK
        capsys.readouterr()
        assert cli.main(common + ["run", "--in", scans[0].volume,
                                  "--model", model,
                                  "--out-prefix", prefix]) == EXIT_OK

        out = capsys.readouterr().out
        assert "feature_mode: shape" in out
        assert "tib_burden:" in out
        assert os.path.exists(prefix + "_overlay.hdr")
        assert os.path.exists(tmp_path / "roc.svg")

    def test_evaluate_from_manifest(self, tmp_path, small_suite,
                                    fixture_config):
        manifest, _ = small_suite
        report = tmp_path / "eval.txt"

        assert cli.main(["--config", fixture_config, "evaluate",
                         "--manifest", manifest, "--mode", "shape",
                         "--out", str(report)]) == EXIT_OK
        assert "fold_az:" in report.read_text()

    def test_repeated_runs_are_byte_identical(self, tmp_path, small_suite,
                                              fixture_config):
        manifest, scans = small_suite
        outputs = []
        for run in ("first", "second"):
            directory = tmp_path / run
            features = str(directory / "shape.csv")
            model = str(directory / "model.txt")
            common = ["--config", fixture_config]
            assert cli.main(common + ["features", "--manifest", manifest,
                                      "--mode", "shape",
                                      "--out", features]) == EXIT_OK
            assert cli.main(common + ["train", "--features", features,
                                      "--out", model]) == EXIT_OK
            assert cli.main(common + ["evaluate", "--features", features,
                                      "--out",
                                      str(directory / "eval.txt")]) \
                == EXIT_OK
            assert cli.main(common + ["run", "--in", scans[0].volume,
                                      "--model", model, "--out-prefix",
                                      str(directory / "case001")]) \
                == EXIT_OK
            outputs.append(directory)

        first, second = outputs
        for name in ("shape.csv", "shape.schema", "model.txt", "eval.txt",
                     "case001_scores.csv", "case001_report.txt",
                     "case001_overlay.raw"):
            assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_train_rejects_mismatched_columns(self, tmp_path, small_suite,
                                              fixture_config):
        manifest, _ = small_suite
        features = str(tmp_path / "shape.csv")
        cli.main(["--config", fixture_config, "features",
                  "--manifest", manifest, "--mode", "shape",
                  "--out", features])
        schema = tmp_path / "shape.schema"
        schema.write_text(schema.read_text().replace("# mode: shape",
                                                     "# mode: glcm"))

        assert cli.main(["train", "--features", features,
                         "--out", str(tmp_path / "m.txt")]) == EXIT_DATA

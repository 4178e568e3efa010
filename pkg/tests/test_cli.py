import json

import pytest

from forecast_audit.cli import main
from forecast_audit.critic import verdict_response, write_script
from forecast_audit.harness import ExperimentConfig, plan_perturbation_cases
from forecast_audit.metrics import REASONABLE
from forecast_audit.render import PlotStyle


def run_cli(*argv):
    return main(list(argv))


FAST_STYLE_ARGS = [
    "--set", "style.width_px=160",
    "--set", "style.height_px=100",
    "--set", "style.test_mode=true",
]


class TestGenerateCommand:
    def test_deterministic_output(self, tmp_path):
        a = tmp_path / "a.jsonl"
        b = tmp_path / "b.jsonl"
        assert run_cli("generate", "--seed", "7", "--count", "5", "--out", str(a)) == 0
        assert run_cli("generate", "--seed", "7", "--count", "5", "--out", str(b)) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_schema(self, tmp_path):
        out = tmp_path / "s.jsonl"
        run_cli("generate", "--seed", "1", "--count", "2", "--out", str(out))
        rows = [json.loads(l) for l in out.read_text().splitlines()]
        assert len(rows) == 2
        for row in rows:
            assert set(row) == {"id", "spec", "series"}
            assert set(row["series"]) == {"t0", "dt", "split_index", "values"}


class TestPerturbCommand:
    def test_round_trip(self, tmp_path):
        src = tmp_path / "s.jsonl"
        dst = tmp_path / "p.jsonl"
        run_cli("generate", "--seed", "2", "--count", "3", "--out", str(src))
        assert run_cli(
            "perturb", "--in", str(src), "--out", str(dst),
            "--kind", "vertical_shift", "--omega", "0.5",
        ) == 0
        rows = [json.loads(l) for l in dst.read_text().splitlines()]
        assert all(r["perturbation"] == "vertical_shift" for r in rows)

    def test_time_stretch_uses_spec(self, tmp_path):
        src = tmp_path / "s.jsonl"
        dst = tmp_path / "p.jsonl"
        run_cli("generate", "--seed", "3", "--count", "2", "--out", str(src))
        assert run_cli(
            "perturb", "--in", str(src), "--out", str(dst),
            "--kind", "time_stretch", "--alpha", "3.0",
        ) == 0


class TestScenarioCommand:
    def test_writes_schema(self, tmp_path):
        out = tmp_path / "scen.jsonl"
        assert run_cli(
            "scenario", "--kind", "C", "--count", "3", "--seed", "4",
            "--out", str(out),
        ) == 0
        rows = [json.loads(l) for l in out.read_text().splitlines()]
        assert len(rows) == 3
        for row in rows:
            assert row["kind"] == "C"
            assert row["label"] == "unreasonable"
            for key in ("hist_holiday_t", "fcst_holiday_t", "spec", "series"):
                assert key in row


class TestRenderCommand:
    def test_renders_pngs(self, tmp_path):
        src = tmp_path / "s.jsonl"
        out_dir = tmp_path / "imgs"
        run_cli("generate", "--seed", "5", "--count", "2", "--out", str(src))
        assert run_cli(
            "render", "--in", str(src), "--out", str(out_dir), "--test-mode"
        ) == 0
        pngs = sorted(out_dir.glob("*.png"))
        assert len(pngs) == 2
        assert pngs[0].read_bytes().startswith(b"\x89PNG")


class TestCritiqueCommand:
    def test_mock_verdict(self, tmp_path, capsys):
        src = tmp_path / "s.jsonl"
        img_dir = tmp_path / "imgs"
        run_cli("generate", "--seed", "6", "--count", "1", "--out", str(src))
        run_cli("render", "--in", str(src), "--out", str(img_dir), "--test-mode")
        script = tmp_path / "script.jsonl"
        write_script(script, {}, default=verdict_response(REASONABLE))
        code = run_cli(
            "critique", "--image", str(img_dir / "gen-0000.png"),
            "--backend", "mock", "--script", str(script),
        )
        assert code == 0
        out = json.loads(capsys.readouterr().out)
        assert out["label"] == "reasonable"

    def test_mock_without_script_is_config_error(self, tmp_path):
        assert run_cli(
            "critique", "--image", str(tmp_path / "missing.png"), "--backend", "mock"
        ) == 2


def make_oracle_script(tmp_path, cfg):
    cases = plan_perturbation_cases(cfg)
    script = tmp_path / "oracle.jsonl"
    write_script(script, {c.case_id: verdict_response(c.label) for c in cases})
    return script


class TestRunCommand:
    def test_perturbation_run(self, tmp_path, capsys):
        cfg = ExperimentConfig(
            seed=3, generated=5, clean=3, kinds=("vertical_shift",),
            style=PlotStyle(width_px=160, height_px=100, test_mode=True),
        )
        script = make_oracle_script(tmp_path, cfg)
        run_dir = tmp_path / "run"
        code = run_cli(
            "run", "--experiment", "perturbation", "--seed", "3",
            "--set", "generated=5", "--set", "clean=3",
            "--set", 'kinds=["vertical_shift"]',
            *FAST_STYLE_ARGS,
            "--backend", "mock", "--script", str(script),
            "--out", str(run_dir),
        )
        assert code == 0
        report = json.loads((run_dir / "report.json").read_text())
        assert report["groups"]["vertical_shift"]["weighted_f1"] == 1.0

    def test_realworld_without_input_exits_2(self, tmp_path, capsys):
        code = run_cli(
            "run", "--experiment", "realworld", "--backend", "mock",
            "--script", str(tmp_path / "s.jsonl"), "--out", str(tmp_path / "run"),
        )
        assert code == 2
        assert "input" in capsys.readouterr().err.lower()

    def test_processing_errors_exit_1(self, tmp_path):
        cfg = ExperimentConfig(
            seed=3, generated=5, clean=3, kinds=("vertical_shift",),
            style=PlotStyle(width_px=160, height_px=100, test_mode=True),
        )
        cases = plan_perturbation_cases(cfg)
        script = tmp_path / "partial.jsonl"
        write_script(
            script,
            {c.case_id: verdict_response(c.label) for c in cases[:-1]},
        )
        code = run_cli(
            "run", "--experiment", "perturbation", "--seed", "3",
            "--set", "generated=5", "--set", "clean=3",
            "--set", 'kinds=["vertical_shift"]',
            *FAST_STYLE_ARGS,
            "--backend", "mock", "--script", str(script),
            "--out", str(tmp_path / "run"),
        )
        assert code == 1

    def test_bad_override_exits_2(self, tmp_path):
        assert run_cli(
            "run", "--experiment", "perturbation",
            "--set", "bogus_key=1",
            "--backend", "mock", "--script", str(tmp_path / "s.jsonl"),
            "--out", str(tmp_path / "run"),
        ) == 2


class TestReportCommand:
    def test_rebuild_from_records(self, tmp_path):
        cfg = ExperimentConfig(
            seed=3, generated=4, clean=2, kinds=("vertical_shift",),
            style=PlotStyle(width_px=160, height_px=100, test_mode=True),
        )
        script = make_oracle_script(tmp_path, cfg)
        run_dir = tmp_path / "run"
        run_cli(
            "run", "--experiment", "perturbation", "--seed", "3",
            "--set", "generated=4", "--set", "clean=2",
            "--set", 'kinds=["vertical_shift"]',
            *FAST_STYLE_ARGS,
            "--backend", "mock", "--script", str(script),
            "--out", str(run_dir),
        )
        before = (run_dir / "report.json").read_bytes()
        assert run_cli("report", "--run", str(run_dir)) == 0
        assert (run_dir / "report.json").read_bytes() == before


class TestParser:
    def test_unknown_subcommand_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_missing_required_flag_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["generate"])  # --out is required
        assert exc.value.code == 2

    @pytest.mark.parametrize(
        "command", ["generate", "perturb", "scenario", "render", "critique",
                     "run", "annotate", "report"]
    )
    def test_help_available(self, command, capsys):
        with pytest.raises(SystemExit) as exc:
            main([command, "--help"])
        assert exc.value.code == 0
        assert "--" in capsys.readouterr().out

    def test_run_help_documents_schemas(self, capsys):
        with pytest.raises(SystemExit):
            main(["run", "--help"])
        text = capsys.readouterr().out
        assert "quantiles" in text
        assert "case_id" in text

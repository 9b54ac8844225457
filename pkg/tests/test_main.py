import json
import re
from pathlib import Path

import pytest

import main
from src.errors import NumericalBlowup
from src.metrics import CriterionResult, SummaryReport
from src.scenarios import case2_config
from src.simulator import SimulationResult

EXAMPLE_CONFIG = Path(__file__).resolve().parent.parent / "config" / "scenario_example.json"


def _outcome(config, passed=True, freq_pct=0.05):
    report = SummaryReport(
        scenario=config.name,
        criteria=[CriterionResult("dc_bus_band", passed, "max 0.1 %")],
        max_frequency_deviation_pct=freq_pct,
    )
    return SimulationResult(config=config), report


@pytest.fixture
def fake_evaluate(mocker):
    return mocker.patch("main.evaluate", side_effect=lambda config: _outcome(config))


class TestCommandLine:
    def test_no_command_prints_help(self, capsys):
        """Running without a command shows usage"""
        assert main.main([]) == main.EXIT_OK
        assert "usage" in capsys.readouterr().out

    def test_invalid_settings(self, mocker, capsys):
        """Bad environment settings are a configuration error"""
        mocker.patch("main.Settings.validate", side_effect=ValueError("Invalid settings: MAX_WORKERS"))
        assert main.main(["oracle", "mpp", "--irradiance", "1000"]) == main.EXIT_CONFIG_ERROR
        assert "MAX_WORKERS" in capsys.readouterr().err


class TestValidate:
    def test_example_is_valid(self, capsys):
        """The shipped example passes the schema"""
        assert main.main(["validate", "--config", str(EXAMPLE_CONFIG)]) == main.EXIT_OK
        assert "is valid" in capsys.readouterr().out

    def test_bad_value_names_key(self, tmp_path, capsys):
        """A rejected field is reported with its key path"""
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"vsis": [{"L_F": -1.0}, {}]}, indent=2))
        assert main.main(["validate", "--config", str(path)]) == main.EXIT_CONFIG_ERROR
        assert "vsis.0.L_F" in capsys.readouterr().err

    def test_missing_file(self, tmp_path, capsys):
        """An unreadable path is a configuration error"""
        assert main.main(["validate", "--config", str(tmp_path / "nope.json")]) == main.EXIT_CONFIG_ERROR
        assert "cannot read" in capsys.readouterr().err


class TestOracle:
    def test_mpp_at_reference_irradiance(self, capsys):
        """The default array delivers 35 kW at 1000 W/m^2"""
        assert main.main(["oracle", "mpp", "--irradiance", "1000"]) == main.EXIT_OK
        power = float(re.search(r"P_mpp = ([\d.]+) kW", capsys.readouterr().out).group(1))
        assert power == pytest.approx(35.0, rel=0.01)

    def test_negative_irradiance(self, capsys):
        """Out-of-range inputs are rejected"""
        assert main.main(["oracle", "mpp", "--irradiance", "-5"]) == main.EXIT_CONFIG_ERROR


class TestScenarioCommands:
    def test_case_writes_outputs(self, fake_evaluate, tmp_path, capsys):
        """A passing case writes trace and summary and exits 0"""
        out = tmp_path / "case3"
        assert main.main(["case3", "--out", str(out)]) == main.EXIT_OK
        assert fake_evaluate.call_args[0][0].name == "case3"
        header = (out / "trace.csv").read_text().splitlines()[0]
        assert header.startswith("t,v_dc,")
        assert "Overall: PASS" in (out / "summary.txt").read_text()
        assert "All criteria passed" in capsys.readouterr().out

    def test_failed_criterion_exits_1(self, mocker, tmp_path):
        """Any failed criterion gives exit code 1"""
        mocker.patch("main.evaluate", side_effect=lambda config: _outcome(config, passed=False))
        assert main.main(["case2", "--out", str(tmp_path)]) == main.EXIT_CRITERIA_FAILED
        assert "Overall: FAIL" in (tmp_path / "summary.txt").read_text()

    def test_run_config_file(self, fake_evaluate, tmp_path):
        """The run command simulates the loaded document"""
        assert main.main(["run", "--config", str(EXAMPLE_CONFIG), "--out", str(tmp_path)]) == main.EXIT_OK
        assert fake_evaluate.call_args[0][0].name == "example-case2"
        assert (tmp_path / "trace.csv").exists()

    def test_blowup_exits_1(self, mocker, tmp_path, capsys):
        """A simulator failure is reported and exits 1"""
        mocker.patch("main.evaluate", side_effect=NumericalBlowup("v_dc out of range", time=0.25))
        assert main.main(["case1", "--out", str(tmp_path)]) == main.EXIT_CRITERIA_FAILED
        assert "t=0.250000" in capsys.readouterr().err


class TestEmptyRun:
    def test_run_shorter_than_one_trace_interval(self, tmp_path, capsys):
        """A run that records no rows is reported as such and exits 1, not as a configuration error"""
        document = json.loads(EXAMPLE_CONFIG.read_text())
        document["duration"] = 0.0001
        path = tmp_path / "short.json"
        path.write_text(json.dumps(document))
        out = tmp_path / "out"
        assert main.main(["run", "--config", str(path), "--out", str(out)]) == main.EXIT_CRITERIA_FAILED
        captured = capsys.readouterr()
        assert "Configuration error" not in captured.err
        assert "no trace rows" in captured.out
        assert (out / "trace.csv").read_text().count("\n") == 1
        assert "❌ trace_rows: FAIL" in (out / "summary.txt").read_text()

    def test_evaluate_skips_metrics_for_an_empty_trace(self, mocker):
        """The metrics layer is not asked to judge an empty trace"""
        config = case2_config()
        mocker.patch("main.run", return_value=SimulationResult(config=config, controller_calls=3))
        compute = mocker.patch("main.compute_metrics")
        _, report = main.evaluate(config)
        compute.assert_not_called()
        assert not report.passed
        assert report.controller_calls == 3
        assert [c.name for c in report.criteria] == ["trace_rows"]


class TestDroopCompare:
    def test_writes_both_runs_and_comparison(self, mocker, tmp_path):
        """Both traces are written and the comparison decides the exit code"""
        mocker.patch("main.evaluate", side_effect=lambda config: _outcome(
            config, freq_pct=0.4 if config.droop.enabled else 0.05))
        assert main.main(["droop-compare", "--out", str(tmp_path)]) == main.EXIT_OK
        assert (tmp_path / "mpc" / "trace.csv").exists()
        assert (tmp_path / "droop" / "trace.csv").exists()
        summary = (tmp_path / "summary.txt").read_text()
        assert "Frequency comparison" in summary
        assert "✅ droop_exceeds_mpc: PASS" in summary

    def test_droop_better_than_mpc_fails(self, mocker, tmp_path):
        """Droop deviating less than FCS-MPC fails the comparison"""
        mocker.patch("main.evaluate", side_effect=lambda config: _outcome(
            config, freq_pct=0.01 if config.droop.enabled else 0.05))
        assert main.main(["droop-compare", "--out", str(tmp_path)]) == main.EXIT_CRITERIA_FAILED


class TestEvaluate:
    def test_uses_scenario_references(self, mocker):
        """Metrics are computed with the references of the scenario"""
        config = case2_config()
        result = SimulationResult(config=config, controller_calls=7)
        mocker.patch("main.run", return_value=result)
        compute = mocker.patch("main.compute_metrics", return_value=SummaryReport("case2"))
        assert main.evaluate(config) == (result, compute.return_value)
        kwargs = compute.call_args.kwargs
        assert kwargs["controller_calls"] == 7
        assert kwargs["references"].window_powers[0] == {"p_vsi1": 7500.0, "p_vsi2": 15000.0}

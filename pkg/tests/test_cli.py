"""Command-line interface: subcommands, exit codes, config files."""

import json

import pytest

from qnncheck.cli import (EXIT_FALSIFIED, EXIT_IO, EXIT_SAFE, EXIT_UNKNOWN,
                          EXIT_USAGE, load_network, main)
from qnncheck.network import serialize_nnet
from qnncheck.zoo import two_input_relu_net

POINT_PROP_JSON = ('{"input": [{"lo": 0.749, "hi": 0.749}, '
                   '{"lo": 0.498, "hi": 0.498}], "assert": "y_0 >= 2.7"}')
UNIT_PROP_JSON = ('{"input": [{"lo": 0, "hi": 1}, {"lo": 0, "hi": 1}], '
                  '"assert": "y_0 <= 2 && y_1 <= 5 && y_2 <= 4"}')


class TestNetworkLoading:
    def test_builtin_names(self):
        assert load_network("two-input-relu").input_dim == 2
        assert load_network("boolean-toy").output_dim == 3
        assert load_network("iris-like").input_dim == 4

    def test_random_spec(self):
        net = load_network("random:42:3x5x2")
        assert net.input_dim == 3 and net.output_dim == 2
        again = load_network("random:42:3x5x2")
        assert net.layers[0].weights == again.layers[0].weights

    def test_file(self, tmp_path):
        p = tmp_path / "n.nnet"
        p.write_text(serialize_nnet(two_input_relu_net()))
        assert load_network(str(p)).input_dim == 2

    def test_missing_file_is_io_error(self, capsys):
        code = main(["verify", "/no/such/file.nnet",
                     "--prop-json", POINT_PROP_JSON, "--real"])
        assert code == EXIT_IO


class TestUsageErrors:
    def test_unknown_flag(self):
        assert main(["verify", "two-input-relu", "--bogus"]) == EXIT_USAGE

    def test_missing_property(self):
        assert main(["verify", "two-input-relu", "--real"]) == EXIT_USAGE

    def test_conflicting_modes(self):
        code = main(["verify", "two-input-relu", "--real", "--fxp", "Q4.6",
                     "--prop-json", POINT_PROP_JSON])
        assert code == EXIT_USAGE

    def test_bad_width_range(self):
        code = main(["sweep", "two-input-relu", "--widths", "9..3",
                     "--prop-json", POINT_PROP_JSON])
        assert code == EXIT_USAGE


@pytest.mark.solver
class TestVerifyCommand:
    def test_real_safe_exit_zero(self, capsys):
        code = main(["verify", "two-input-relu", "--real",
                     "--prop-json", POINT_PROP_JSON])
        assert code == EXIT_SAFE
        assert "verdict: Safe" in capsys.readouterr().out

    def test_fxp_falsified_exit_one(self, capsys, tmp_path):
        out = tmp_path / "report.json"
        code = main(["verify", "two-input-relu", "--fxp", "Q4.6",
                     "--prop-json", POINT_PROP_JSON, "--json", str(out)])
        assert code == EXIT_FALSIFIED
        captured = capsys.readouterr().out
        assert "verdict: Falsified" in captured
        doc = json.loads(out.read_text())
        assert doc["counterexample"]["inputs_real"] == [0.734375, 0.484375]

    def test_unknown_solver_exit_two(self, capsys):
        code = main(["verify", "two-input-relu", "--fxp", "Q4.6",
                     "--prop-json", POINT_PROP_JSON,
                     "--solver", "/no/such/solver"])
        assert code == EXIT_UNKNOWN

    def test_config_file_fills_flags(self, capsys, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"fxp": "Q4.6", "timeout": 60}))
        code = main(["--config", str(cfg), "verify", "two-input-relu",
                     "--prop-json", POINT_PROP_JSON])
        assert code == EXIT_FALSIFIED

    def test_explicit_flag_beats_config(self, capsys, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"fxp": "Q4.6"}))
        code = main(["--config", str(cfg), "verify", "two-input-relu",
                     "--real", "--prop-json", POINT_PROP_JSON])
        assert code == EXIT_SAFE  # the real relaxation holds at this point


@pytest.mark.solver
class TestSweepCommand:
    def test_csv_written(self, capsys, tmp_path):
        out = tmp_path / "rows.csv"
        code = main(["sweep", "two-input-relu", "--widths", "8,10",
                     "--prop-json", POINT_PROP_JSON, "--csv", str(out),
                     "--workers", "2"])
        assert code == EXIT_FALSIFIED
        lines = out.read_text().strip().splitlines()
        assert len(lines) == 3 and lines[0].startswith("total_bits")


class TestIntervalsCommand:
    def test_prints_bounds(self, capsys):
        code = main(["intervals", "boolean-toy", "--fxp", "Q8.0",
                     "--prop-json", UNIT_PROP_JSON])
        assert code == EXIT_SAFE
        out = capsys.readouterr().out
        assert "u/0/0: [-3, 2]" in out
        assert "u/0/1: [0, 5]" in out

    def test_report_flag(self, capsys):
        code = main(["intervals", "boolean-toy", "--fxp", "Q3.2",
                     "--prop-json", UNIT_PROP_JSON, "--report"])
        assert code == EXIT_SAFE
        assert "recommended" in capsys.readouterr().out.lower()


class TestReplayCommand:
    def test_fxp_trace(self, capsys):
        code = main(["replay", "two-input-relu", "--fxp", "Q4.6",
                     "--input", "0.749,0.498", "--trace"])
        assert code == EXIT_SAFE
        out = capsys.readouterr().out
        assert "outputs (raw): [172]" in out
        assert "layer 0 pre:" in out

    def test_property_verdict_sets_exit(self, capsys):
        code = main(["replay", "two-input-relu", "--fxp", "Q4.6",
                     "--input", "0.749,0.498",
                     "--prop-json", POINT_PROP_JSON])
        assert code == EXIT_FALSIFIED
        assert "Violated" in capsys.readouterr().out

    def test_real_mode(self, capsys):
        code = main(["replay", "two-input-relu", "--real",
                     "--input", "0.749,0.498"])
        assert code == EXIT_SAFE
        assert "2.745" in capsys.readouterr().out


class TestLutCommand:
    def test_reference_sample_counts(self, capsys):
        code = main(["lut", "--activation", "sigmoid", "--epsilon", "0.01",
                     "--cutoff", "20"])
        assert code == EXIT_SAFE
        out = capsys.readouterr().out
        assert "1001 samples" in out

    def test_coarse_budget(self, capsys):
        main(["lut", "--activation", "sigmoid", "--epsilon", "1.0",
              "--cutoff", "20"])
        assert "11 samples" in capsys.readouterr().out


class TestEmitSmtCommand:
    def test_writes_script(self, capsys, tmp_path):
        out = tmp_path / "q.smt2"
        code = main(["emit-smt", "boolean-toy", "--fxp", "Q8.0",
                     "--prop-json", UNIT_PROP_JSON, "-o", str(out)])
        assert code == EXIT_SAFE
        text = out.read_text()
        assert "(set-logic QF_BV)" in text
        assert "(check-sat)" in text

    def test_stdout_default(self, capsys):
        main(["emit-smt", "two-input-relu", "--real",
              "--prop-json", POINT_PROP_JSON])
        assert "(set-logic QF_LRA)" in capsys.readouterr().out


@pytest.mark.solver
class TestExportCeAndReplayRoundTrip:
    def test_round_trip(self, capsys, tmp_path):
        ce = tmp_path / "ce.json"
        pgm = tmp_path / "ce.pgm"
        code = main(["export-ce", "two-input-relu", "--fxp", "Q4.6",
                     "--prop-json", POINT_PROP_JSON, "--json", str(ce),
                     "--pgm", str(pgm), "--shape", "1x2"])
        assert code == EXIT_FALSIFIED
        assert pgm.read_bytes().startswith(b"P5\n2 1\n255\n")
        capsys.readouterr()
        code = main(["replay", "two-input-relu", "--fxp", "Q4.6",
                     "--from-ce", str(ce), "--prop-json", POINT_PROP_JSON])
        assert code == EXIT_FALSIFIED
        assert "outputs (real): [2.6875]" in capsys.readouterr().out

    def test_safe_verdict_no_export(self, capsys, tmp_path):
        code = main(["export-ce", "two-input-relu", "--real",
                     "--prop-json", POINT_PROP_JSON,
                     "--json", str(tmp_path / "ce.json")])
        assert code == EXIT_SAFE
        assert not (tmp_path / "ce.json").exists()

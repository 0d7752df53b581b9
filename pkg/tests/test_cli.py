import csv
import json

import numpy as np
import pytest

from wcsr.cli import FIGURE_CONFIGS, canned_config, main
from wcsr.harness import load_config
from wcsr.sensing import load_matrix


def write_cfg(tmp_path, **kw):
    raw = json.loads(canned_config("fig1_error_vs_snr.json").read_text())
    raw.update(kw)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(raw))
    return p


@pytest.mark.parametrize("name", list(FIGURE_CONFIGS) + ["lowrank_pipeline.json"])
def test_validate_canned_configs(name, capsys):
    assert main(["validate", str(canned_config(name))]) == 0
    assert capsys.readouterr().out.startswith("ok:")


def test_run_with_zero_trials_fails(tmp_path, capsys):
    assert main(["run", str(write_cfg(tmp_path, trials=0))]) == 1
    assert "trials" in capsys.readouterr().err


def test_missing_config_fails(tmp_path, capsys):
    assert main(["validate", str(tmp_path / "nope.json")]) == 1
    assert "nope.json" in capsys.readouterr().err


def test_unknown_subcommand_is_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_run_to_stdout_and_file(tmp_path, capsys):
    cfg = write_cfg(tmp_path, sweep=[10, 20], trials=1, solvers=["omp"])
    assert main(["run", str(cfg)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "sweep,solver,nmse,nmse_se,pd,pd_se,pfa,pfa_se,trials" and len(lines) == 3
    out = tmp_path / "r.json"
    assert main(["run", str(cfg), "--format", "json", "--out", str(out), "--seed", "3", "--threads", "2"]) == 0
    assert len(json.loads(out.read_text())) == 2


def test_seed_flag_overrides(tmp_path, capsys):
    cfg = write_cfg(tmp_path, sweep=[10], trials=2, solvers=["lasso"])
    main(["run", str(cfg), "--seed", "1"])
    a = capsys.readouterr().out
    main(["run", str(cfg), "--seed", "2"])
    b = capsys.readouterr().out
    main(["run", str(cfg), "--seed", "1"])
    assert capsys.readouterr().out == a != b


def test_trace_output(tmp_path):
    raw = json.loads(canned_config("fig3_coop_vs_gap.json").read_text())
    raw.update(sweep=[0.0], trials=1)
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(raw))
    trace = tmp_path / "trace.json"
    assert main(["run", str(cfg), "--out", str(tmp_path / "o.csv"), "--trace", str(trace)]) == 0
    recs = json.loads(trace.read_text())
    assert {"node_id", "row_indices", "y"} == set(recs[0]["scans"][0])


@pytest.mark.slow
def test_figures_row_counts(tmp_path):
    assert main(["figures", "--out", str(tmp_path), "--trials", "2"]) == 0
    for name in FIGURE_CONFIGS:
        cfg = load_config(canned_config(name))
        expected = len(cfg.sweep) * len(cfg.solver_names())
        with open(tmp_path / name.replace(".json", ".csv")) as fh:
            assert len(list(csv.DictReader(fh))) == expected
    assert [len(load_config(canned_config(n)).sweep) * len(load_config(canned_config(n)).solver_names())
            for n in FIGURE_CONFIGS] == [28, 44, 12]


def test_figures_rejects_bad_trials(tmp_path):
    assert main(["figures", "--out", str(tmp_path), "--trials", "0"]) == 1


@pytest.mark.parametrize("fmt", ["csv", "npy"])
def test_matrix_dump(tmp_path, fmt):
    out = tmp_path / f"A.{fmt}"
    assert main(["matrix", "dump", "--m", "5", "--bands", "12", "--seed", "4", "--out", str(out), "--format", fmt]) == 0
    A = load_matrix(out)
    assert A.shape == (5, 12)
    again = tmp_path / f"B.{fmt}"
    main(["matrix", "dump", "--m", "5", "--bands", "12", "--seed", "4", "--out", str(again), "--format", fmt])
    np.testing.assert_array_equal(load_matrix(again), A)


def test_matrix_dump_from_config(tmp_path):
    out = tmp_path / "A.csv"
    cfg = canned_config("fig1_error_vs_snr.json")
    assert main(["matrix", "dump", "--config", str(cfg), "--m", "4", "--design", "nonuniform", "--out", str(out)]) == 0
    assert load_matrix(out).shape == (4, 200)


def test_matrix_dump_bad_path(tmp_path, capsys):
    assert main(["matrix", "dump", "--m", "3", "--out", str(tmp_path / "x" / "y.csv")]) == 1
    assert "y.csv" in capsys.readouterr().err

from __future__ import annotations

import csv
import io

import pytest

from mgs.cli import main
from mgs.experiments import ExperimentConfig, ConfigError, read_config_file


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_dump_table(capsys):
    code, out, _ = run(capsys, "dump-table")
    assert code == 0 and out.startswith("pattern,sign,biased_exp,mantissa,value,class\r\n")
    r = rows(out)
    assert len(r) == 256
    assert r[0]["value"] == "0" and r[0]["class"] == "zero"
    assert max(float(x["value"]) for x in r if x["class"] != "nan") == 448.0


def test_skip_census(capsys):
    code, out, _ = run(capsys, "skip-census")
    r = {x["convention"]: x for x in rows(out)}
    assert code == 0
    assert r["exact/unordered-distinct"]["pairs"] == "32640"
    assert r["exponent/ordered-halved"]["deviation"] == "0"
    assert all(x["note"] for x in r.values())


def test_overflow_prob_columns_and_monotone(capsys):
    code, out, _ = run(capsys, "overflow-prob", "--trials", "2000", "--set", "ks=10",
                       "--set", "acc_bits=8:17")
    r = rows(out)
    assert code == 0 and [int(x["acc_bits"]) for x in r] == list(range(8, 18))
    clt = [float(x["clt_prob"]) for x in r]
    assert all(a >= b for a, b in zip(clt, clt[1:]))
    assert clt[-1] < 1e-6


def test_markov_validate_point_masses_agree(capsys):
    code, out, _ = run(capsys, "markov-validate", "--trials", "20", "--set", "weight_point=3",
                       "--set", "act_point=5", "--set", "samples=10")
    assert code == 0
    for x in rows(out):
        assert float(x["chain_length"]) == pytest.approx(float(x["simulated_length"]), abs=1e-9)


def test_error_curve_mgs_matches_rounded_oracle(capsys):
    code, out, _ = run(capsys, "error-curve", "--trials", "3", "--set", "lengths=10,300",
                       "--strategies", "mgs,sequential")
    assert code == 0
    r = rows(out)
    assert [x["strategy"] for x in r] == ["mgs", "mgs", "sequential", "sequential"]
    assert all(x["rounded_sum_mismatches"] == "0" for x in r if x["strategy"] == "mgs")


def test_mlp_roundtrip(capsys, tmp_path):
    model = str(tmp_path / "m")
    assert run(capsys, "make-mlp", "--model", model, "--set", "n_inputs=12",
               "--set", "hidden=8", "--set", "inputs_dim=40")[0] == 0
    code, out, _ = run(capsys, "mlp-infer", "--model", model, "--strategies", "wide,mgs,clip",
                       "--narrow-bits", "12")
    r = {x["strategy"]: x for x in rows(out)}
    assert code == 0
    assert float(r["wide"]["top1_agreement"]) == 1.0
    assert float(r["mgs"]["logits_equal_wide"]) == 1.0


def test_errors_are_single_line(capsys, tmp_path):
    for argv, code in ((["error-curve", "--trials", "0"], 2),
                       (["nope"], 2),
                       (["error-curve", "--strategies", "bogus"], 2),
                       (["mlp-infer"], 2),
                       (["mlp-infer", "--model", str(tmp_path)], 1)):
        got, out, err = run(capsys, *argv)
        assert got == code and out == ""
        assert err.count("\n") == 1 and err.startswith("mgs-error kind=")


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# sweep\nks = 5\nacc_bits = 9,10\ntrials = 500\nseed=4\n")
    out_path = tmp_path / "o.csv"
    code, out, _ = run(capsys, "overflow-prob", "--config", str(cfg), "--trials", "100",
                       "--out", str(out_path))
    assert code == 0 and out == ""
    r = rows(out_path.read_text())
    assert [x["trials"] for x in r] == ["100", "100"]
    assert read_config_file(cfg)["acc_bits"] == "9,10"
    with pytest.raises(ConfigError):
        ExperimentConfig.from_mapping("error-curve", {"colour": "blue"})

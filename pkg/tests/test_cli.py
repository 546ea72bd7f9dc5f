import csv
import io
import json

import numpy as np

from factdual import cli
from factdual.duality import IdentityReport
from factdual.sieve import factor_record


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def _csv(text):
    return list(csv.reader(io.StringIO(text)))


def test_sieve_dump(tmp_path, capsys):
    path = tmp_path / "dump.bin"
    code, _, err = run(["sieve", "--limit", "1000", "--block-size", "97", "--out", str(path)], capsys)
    assert code == 0 and "M(1000) = 2" in err
    raw = path.read_bytes()
    assert raw[:8] == b"FDUAL001"
    assert cli.RECORD_DTYPE.itemsize == 27
    assert len(raw) == 8 + 999 * 27
    rec = np.frombuffer(raw[8:], dtype=cli.RECORD_DTYPE)
    for row in rec:
        r = factor_record(int(row["n"]))
        got = (int(row["mu"]), int(row["omega"]), int(row["big_omega"]),
               int(row["spf"]), int(row["lpf"]), int(row["p2_strict"]), int(row["p2_mult"]))
        want = (r.mu, r.omega, r.big_omega, r.spf or 0, r.lpf or 0, r.p2_strict or 0, r.p2_mult or 0)
        assert got == want
    assert rec["n"][0] == 2 and rec["n"][-1] == 1000


def test_sieve_layout_little_endian(tmp_path, capsys):
    path = tmp_path / "d.bin"
    run(["sieve", "--limit", "3", "--out", str(path)], capsys)
    raw = path.read_bytes()[8:]
    # n = 2: u64 2, mu -1, omega 1, big_omega 1, spf 2, lpf 2, p2 absent
    assert raw[:27] == (
        (2).to_bytes(8, "little") + bytes([0xFF, 1, 1]) + (2).to_bytes(4, "little") * 2 + bytes(8)
    )


def test_verify_passes(capsys):
    code, out, err = run(["verify", "--identity", "1.9", "--max-n", "2000", "--k", "3",
                          "--f", "id", "--f", "rand:1"], capsys)
    assert code == 0
    assert out == "identity,n,k,f,lhs,rhs\n"
    assert "6/6" in err
    code, out, _ = run(["verify", "--identity", "all", "--max-n", "500"], capsys)
    assert code == 0


def test_verify_failure_exit(monkeypatch, capsys):
    def fake(*a, **kw):
        return [IdentityReport("1.3", 2, 10, None, "id", 1, 2, False),
                IdentityReport("1.3", 6, 6, None, "id", 5, 3, False, True)]

    monkeypatch.setattr(cli, "verify_identities", fake)
    code, out, _ = run(["verify", "--identity", "1.3", "--max-n", "10"], capsys)
    assert code == 1
    assert _csv(out) == [["identity", "n", "k", "f", "lhs", "rhs"], ["1.3", "6", "", "id", "5", "3"]]


def test_series_command(capsys):
    code, out, _ = run(["series", "--limit", "1000", "--mod", "3", "--residues", "1,2",
                        "--checkpoints", "list:10,1000"], capsys)
    assert code == 0
    rows = _csv(out)
    assert rows[0] == ["x", "stat", "k", "l", "value", "err_bound"]
    assert ["10", "M", "", "", "-1", "0"] in rows
    assert {(r[1], r[3]) for r in rows[1:] if r[2] == "3"} == {
        (s, l) for s in ("M_slice", "m_slice", "M_omega_slice", "m_omega_slice") for l in ("1", "2")
    }


def test_series_p2_side_has_undefined_bucket(capsys):
    code, out, _ = run(["series", "--limit", "1000", "--mod", "3", "--side", "p2"], capsys)
    assert code == 0
    assert any(r[3] == "undef" for r in _csv(out)[1:])


def test_series_bad_checkpoint(capsys):
    code, _, err = run(["series", "--limit", "100", "--checkpoints", "list:10,1000"], capsys)
    assert code == 2 and "checkpoints" in err


def test_dist_command(capsys):
    code, out, _ = run(["dist", "--limit", "10", "--stat", "psi", "--y", "3"], capsys)
    assert code == 0 and _csv(out)[1] == ["10", "psi", "3", "", "7"]
    code, out, _ = run(["dist", "--limit", "1e7", "--stat", "psi2", "--alpha", "3"], capsys)
    assert _csv(out)[1][:4] == ["10000000", "psi2", "215", "3.0"]
    code, out, _ = run(["dist", "--limit", "10", "--stat", "nrep"], capsys)
    assert _csv(out)[1] == ["10", "nrep", "", "", "3"]
    code, out, _ = run(["dist", "--limit", "10", "--stat", "rescount", "--mod", "4", "--side", "P"], capsys)
    assert ["10", "rescount_P", "4", "3", "4"] in _csv(out)
    code, _, err = run(["dist", "--limit", "10", "--stat", "rescount"], capsys)
    assert code == 2 and "mod" in err


def test_rho_command(tmp_path, capsys):
    path = tmp_path / "rho.csv"
    code, _, _ = run(["rho", "--alpha-max", "4", "--step", "2^-8", "--out", str(path)], capsys)
    assert code == 0
    rows = _csv(path.read_text())
    assert rows[0] == ["alpha", "rho"] and len(rows) == 1 + 4 * 256 + 1
    assert float(rows[1 + 512][0]) == 2.0
    assert abs(float(rows[1 + 512][1]) - 0.3068528194400547) < 1e-12
    code, _, err = run(["rho", "--step", "2^-4"], capsys)
    assert code == 2


def test_rho_compare_command(capsys):
    code, out, _ = run(["rho-compare", "--limit", "100000", "--alphas", "1,2"], capsys)
    rows = _csv(out)
    assert rows[0] == ["alpha", "psi_ratio", "rho2_alpha_times"]
    assert rows[1] == ["1.0", "1.0", "1.0"]


def test_run_and_report(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"limit": 10**5, "experiments": ["series"],
                               "slices": ["3:all"], "output_dir": str(tmp_path / "o")}))
    code, _, err = run(["run", "--config", str(cfg), "--checkpoints", "pow10"], capsys)
    assert code == 0, err
    code, _, _ = run(["report", "--in", str(tmp_path / "o"), "--out", str(tmp_path / "r.json")], capsys)
    assert code == 0
    reports = json.loads((tmp_path / "r.json").read_text())
    for r in reports:
        assert {"experiment", "paper_anchor", "checkpoints", "fitted", "verdict"} <= set(r)
        assert r["verdict"] in ("pass", "fail", "report-only")
    models = {r["model"] for r in reports}
    assert "m_omega_times_log" in models and "m_slice_limit[smallest,3,1]" in models


def test_run_flags_only(tmp_path, capsys):
    code, _, err = run(["run", "--limit", "5000", "--experiments", "sqrt-window,exceptional:5",
                        "--out-dir", str(tmp_path / "o")], capsys)
    assert code == 0, err
    assert (tmp_path / "o" / "exceptional_5.csv").exists()


def test_run_invalid_config(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"limit": 1, "experiments": ["nope"]}))
    code, _, err = run(["run", "--config", str(cfg)], capsys)
    assert code == 2
    assert "offending fields: limit, experiments" in err


def test_run_partial_failure_exit(tmp_path, capsys):
    code, _, err = run(["run", "--limit", "1000", "--experiments", "series,rho",
                        "--out-dir", str(tmp_path / "o"), "--alphas", "40"], capsys)
    assert code == 1
    assert "completed outputs: series.csv" in err


def test_report_without_series(tmp_path, capsys):
    code, _, err = run(["report", "--in", str(tmp_path)], capsys)
    assert code == 2


def test_workers_env_override(tmp_path, capsys, monkeypatch):
    outs = []
    for w in ("1", "4"):
        monkeypatch.setenv("FACTDUAL_WORKERS", w)
        path = tmp_path / f"s{w}.csv"
        run(["series", "--limit", "200000", "--block-size", "8192", "--mod", "4", "--out", str(path)], capsys)
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]

import csv
import json

import pytest

from predprob.cli import concordance_from_rows, main, ValidationError
from predprob.core import approx_pp_bayes
from predprob.shine import shine_table


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_pp_symmetry(capsys):
    code, out, _ = run(capsys, "pp", "--p", "0.5", "--r", "0.5", "--alpha", "0.025")
    assert code == 0 and out.splitlines()[0] == "0.025000"


def test_pp_bayes_matches_library(capsys):
    code, out, _ = run(capsys, "pp", "--posterior", "0.975", "--info-n", "432", "--info-N", "1400", "--eta", "0.975")
    assert code == 0
    assert out.splitlines()[0] == f"{approx_pp_bayes(0.975, 432 / 1400, 0.975):.6f}"


@pytest.mark.parametrize("argv,field", [
    (("pp", "--p", "1.2", "--r", "0.5"), "p_n"),
    (("pp", "--p", "0.2", "--r", "1.0"), "r"),
    (("pp", "--p", "0.2"), "--r"),
    (("pp", "--p", "0.2", "--posterior", "0.8", "--r", "0.5"), "--p"),
    (("pp", "--p", "0.2", "--info-n", "500", "--info-N", "400"), "info_n"),
])
def test_pp_validation(capsys, argv, field):
    code, _, err = run(capsys, *argv)
    assert code == 2 and field in err and len(err.strip().splitlines()) == 1


def test_unknown_subcommand(capsys):
    assert run(capsys, "frobnicate")[0] == 2


def test_boundary(capsys):
    code, out, _ = run(capsys, "boundary", "--grid", "9")
    assert code == 0
    lines = out.splitlines()
    rows = [l for l in lines[1:] if not l.startswith("#")]
    r = [float(x.split(",")[0]) for x in rows]
    assert len(r) == 9 and min(r) > 0 and max(r) < 1
    onsets = [float(l.split("r*=")[1]) for l in lines if l.startswith("# futility onset")]
    assert onsets == pytest.approx([0.156, 0.299, 0.413], abs=0.005)


def test_boundary_rejects_half(capsys):
    assert run(capsys, "boundary", "--threshold", "0.5")[0] == 2


def test_shine(capsys):
    code, out, _ = run(capsys, "shine")
    assert code == 0
    rows = list(csv.DictReader(l for l in out.splitlines() if not l.startswith("#")))
    assert len(rows) == 4
    assert [r["near_futility"] for r in rows] == ["false", "false", "false", "true"]
    assert float(rows[3]["direct_app"]) == pytest.approx(0.023, abs=0.001)
    assert float(rows[0]["direct_app"]) == pytest.approx(0.196, abs=0.001)


def test_shine_table_decisions():
    rows = shine_table()
    assert all(r["direct_decision"] == r["published_decision"] for r in rows)


def write_config(tmp_path, n_sims=6):
    cfg = {
        "schema_version": 1,
        "design": {"endpoint": "dichotomous", "n_max": 500, "interims": [300, 400], "follow_up": 13.0,
                   "n_imputations": 200},
        "scenario": [{"name": "effect", "accrual_rate": 5.0, "control_rate": 0.5, "treatment_rate": 0.35},
                     {"name": "null", "accrual_rate": 5.0, "control_rate": 0.5, "treatment_rate": 0.5}],
        "execution": {"n_sims": n_sims, "master_seed": 3},
    }
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return p


def test_simulate_outputs_and_determinism(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["simulate", str(cfg), "--out", str(tmp_path / "a"), "--parallelism", "1", "--full-precision"]) == 0
    assert main(["simulate", str(cfg), "--out", str(tmp_path / "b"), "--parallelism", "3"]) == 0
    a, b = tmp_path / "a", tmp_path / "b"
    for name in ("results.csv", "stops.csv", "totals.csv", "agreement.csv", "concordance.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["complete"] and manifest["master_seed"] == 3
    assert set(manifest["wall_clock_seconds"]) == {"npp", "ipp"}
    assert "numpy" in manifest["versions"]
    assert (a / "results_raw.csv").exists() and not (b / "results_raw.csv").exists()
    text = (a / "results.csv").read_bytes()
    assert b"\r\n" in text
    # decisions recompute from the raw probabilities
    for row in csv.DictReader(open(a / "results_raw.csv")):
        pp_n, pp_max = float(row["pp_n"]), float(row["pp_max"])
        want = "success" if pp_n > 0.9 else "futility" if pp_max < 0.05 else "continue"
        assert row["decision"] == want


def test_simulate_hash_changes_with_seed(tmp_path, capsys):
    cfg = write_config(tmp_path, n_sims=2)
    main(["simulate", str(cfg), "--out", str(tmp_path / "a")])
    main(["simulate", str(cfg), "--out", str(tmp_path / "b"), "--seed", "4"])
    main(["simulate", str(cfg), "--out", str(tmp_path / "c"), "--parallelism", "2"])
    h = [json.loads((tmp_path / d / "manifest.json").read_text())["config_hash"] for d in "abc"]
    assert h[0] != h[1] and h[0] == h[2]


def test_simulate_bad_config_exits_before_compute(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"schema_version": 1, "design": {}, "scenario": {}, "bogus": 1}))
    out = tmp_path / "out"
    assert main(["simulate", str(p), "--out", str(out)]) == 2
    assert not out.exists()
    assert main(["simulate", str(tmp_path / "missing.json")]) == 2


def test_simulate_runtime_failure_marks_manifest(tmp_path, capsys, monkeypatch):
    import predprob.cli as cli

    def boom(*a, **k):
        raise RuntimeError("worker died")

    monkeypatch.setattr(cli, "run_batch", boom)
    cfg = write_config(tmp_path, n_sims=1)
    assert main(["simulate", str(cfg), "--out", str(tmp_path / "x")]) == 3
    manifest = json.loads((tmp_path / "x" / "manifest.json").read_text())
    assert manifest["complete"] is False and "worker died" in manifest["error"]


def test_concordance_command(tmp_path, capsys):
    cfg = write_config(tmp_path)
    main(["simulate", str(cfg), "--out", str(tmp_path / "a")])
    capsys.readouterr()
    code, out, _ = run(capsys, "concordance", str(tmp_path / "a" / "results.csv"), "--out", str(tmp_path / "c"),
                       "--thresholds", "0.05,0.9")
    assert code == 0 and "agreement" in out
    rows = list(csv.DictReader(open(tmp_path / "c" / "concordance.csv")))
    assert {r["threshold"] for r in rows} == {"0.05", "0.9"}


def test_concordance_needs_two_methods(tmp_path, capsys):
    p = tmp_path / "r.csv"
    p.write_text("scenario,sim_id,interim_index,method,decision,pp_n,pp_max\ns,0,1,npp,continue,0.5,0.5\n")
    assert run(capsys, "concordance", str(p))[0] == 2
    q = tmp_path / "q.csv"
    q.write_text("scenario,sim_id,interim_index,decision\ns,0,1,continue\n")
    assert run(capsys, "concordance", str(q))[0] == 2


def test_concordance_known_disagreements():
    rows = []
    for sim, (a, b) in enumerate([(0.95, 0.5), (0.5, 0.5), (0.01, 0.2), (0.5, 0.04)]):
        for m, pp in (("npp", a), ("ipp", b)):
            d = "success" if pp > 0.9 else "futility" if pp < 0.05 else "continue"
            rows.append({"scenario": "s", "sim_id": sim, "interim_index": 1, "method": m,
                         "decision": d, "pp_n": pp, "pp_max": pp})
    agreement, curve = concordance_from_rows(rows, "ipp", (0.05, 0.9))
    assert agreement[0]["decision_agreement"] == 0.25
    by = {(r["target"], r["threshold"]): r["agreement"] for r in curve}
    assert by[("N", 0.9)] == 0.75 and by[("N", 0.05)] == 0.5
    with pytest.raises(ValidationError):
        concordance_from_rows([r for r in rows if r["method"] == "npp"])

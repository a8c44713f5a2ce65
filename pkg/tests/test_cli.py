import json
import re

import pytest
from hypothesis import given, settings, strategies as st

from hartree_lab.cli import main
from hartree_lab.reporting import RunConfig, check, dumps, write_report


@pytest.fixture(scope="module")
def shared_cache(tmp_path_factory):
    path = tmp_path_factory.mktemp("cache")
    with pytest.MonkeyPatch.context() as mp:
        mp.setenv("HARTREE_LAB_CACHE", str(path))
        yield path


def test_dimension_six_rejected(tmp_path, capsys):
    assert main(["--out", str(tmp_path), "constants", "--N", "6"]) == 1
    assert "N >= 7" in capsys.readouterr().err


def test_unknown_flag(tmp_path, capsys):
    assert main(["--out", str(tmp_path), "ode", "--bogus", "1"]) == 1
    assert "bogus" in capsys.readouterr().err


def test_unknown_suite(tmp_path):
    assert main(["--out", str(tmp_path), "verify", "--suite", "nothing"]) == 1


def test_bad_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("colour=blue\n")
    assert main(["--config", str(cfg), "ode"]) == 1


def test_ode_builds_missing_cache(shared_cache, tmp_path):
    assert not list(shared_cache.iterdir())
    assert main(["--out", str(tmp_path), "ode", "--T", "-100"]) == 0
    assert (shared_cache / "constants_N7_n2048.json").exists()
    doc = json.loads((tmp_path / "ode.json").read_text())
    assert doc["status"] == "ok" and doc["bootstrap"]["ok"]
    assert (tmp_path / "trajectory.csv").exists()


def test_ode_csv_deterministic(shared_cache, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["--out", str(out), "--seed", "3", "ode", "--T", "-50", "--a1", "1e-6"]) == 0
    assert (a / "trajectory.csv").read_bytes() == (b / "trajectory.csv").read_bytes()


def test_ode_rejects_bad_window(shared_cache, tmp_path):
    assert main(["--out", str(tmp_path), "ode", "--T", "-10", "--t-end", "-20"]) == 1


def test_config_params_used(shared_cache, tmp_path):
    cfg = RunConfig(out=str(tmp_path), params={"T": -40.0, "t_end": -20.0})
    cfg.save(tmp_path / "run.cfg")
    assert main(["--config", str(tmp_path / "run.cfg"), "ode"]) == 0
    doc = json.loads((tmp_path / "ode.json").read_text())
    assert doc["T"] == -40.0 and doc["t_end"] == -20.0


def test_json_full_precision(shared_cache, tmp_path):
    assert main(["--out", str(tmp_path), "ode", "--T", "-100"]) == 0
    text = (tmp_path / "ode.json").read_text()
    lam = re.search(r'"lambda0": ([^,\n]+)', text).group(1)
    assert len(lam.split("e")[0].replace("-", "").replace(".", "").lstrip("0")) == 17


def test_verify_passing_suite(shared_cache, tmp_path):
    assert main(["--out", str(tmp_path), "verify", "--suite", "ode"]) == 0
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["suite"] == "ode" and doc["cases"]
    for c in doc["cases"]:
        assert set(c) >= {"name", "paper_ref", "status", "margin", "tolerance"}


def test_virial_audit_exit_codes(tmp_path):
    assert main(["--out", str(tmp_path), "virial", "audit"]) == 0
    assert main(["--out", str(tmp_path), "virial", "audit", "--c", "-1"]) == 1


def test_empty_report(tmp_path):
    doc = write_report(tmp_path / "r.json", "none", [])
    assert doc == {"suite": "none", "cases": []}
    assert json.loads((tmp_path / "r.json").read_text())["cases"] == []


def test_failing_case_records_inputs(tmp_path, monkeypatch):
    import hartree_lab.acceptance as acc

    def bad(ctx):
        return [check("demo.bad", "x", 2.0, 1.0, where=[1.0, 2.0])]

    monkeypatch.setitem(acc.CRITERIA, 8, ("ode", bad))
    assert main(["--out", str(tmp_path), "verify", "--suite", "ode"]) == 2
    case = json.loads((tmp_path / "report.json").read_text())["cases"][0]
    assert case["status"] == "fail"
    saved = json.loads(open(case["inputs"]).read())
    assert saved["details"]["where"] == [1.0, 2.0]


def test_dumps_non_finite():
    assert json.loads(dumps({"a": float("nan"), "b": 0.1})) == {"a": None, "b": 0.1}
    assert "0.10000000000000001" in dumps(0.1)


keys = st.text("abcdefghij_", min_size=1, max_size=6)
scalars = st.one_of(st.integers(-10**6, 10**6), st.floats(allow_nan=False, allow_infinity=False),
                    st.booleans(), st.none(), st.text("xyz", min_size=1, max_size=4))


@settings(max_examples=60, deadline=None)
@given(N=st.integers(7, 12), points=st.integers(64, 4096), seed=st.integers(0, 2**31),
       tol=st.dictionaries(keys, st.floats(1e-16, 1.0)), params=st.dictionaries(keys, scalars))
def test_config_round_trip(N, points, seed, tol, params):
    cfg = RunConfig(N=N, points=points, seed=seed, tol=tol, params=params)
    assert RunConfig.from_text(cfg.to_text()) == cfg

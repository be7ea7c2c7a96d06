import csv
import io
import json
import subprocess
import sys

import pytest

from isoball import __version__
from isoball.cli import ConfigError, RunConfig, main, parse_eps_grid


def read_csv(path):
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


def snapshot(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


# -- parsing and validation ------------------------------------------------------


def test_eps_grid_forms():
    g = parse_eps_grid("log:1e-4:0.5:50")
    assert len(g) == 50 and g[0] == pytest.approx(1e-4) and g[-1] == 0.5
    assert parse_eps_grid("lin:0.1:0.3:3") == pytest.approx([0.1, 0.2, 0.3])
    assert parse_eps_grid("0.1, 0.2") == [0.1, 0.2]
    for bad in ("log:0:0.5:3", "cubic:0.1:0.2:3", "lin:0.1:0.2:0", "x,y"):
        with pytest.raises(ConfigError):
            parse_eps_grid(bad)


@pytest.mark.parametrize(
    "cfg",
    [
        RunConfig("profile", n=1, eps=0.1),
        RunConfig("profile", n=3),
        RunConfig("distance", n=3, eps=0.0),
        RunConfig("distance", n=3, n_range="5:2", eps=0.1),
        RunConfig("variational", n=3, eps=0.1, m=50),
        RunConfig("variational", n=3, eps=0.5),
        RunConfig("verify-lemmas", h="R/1"),
        RunConfig("verify-lemmas", bodies=-1),
        RunConfig("profile", n=3, eps=0.1, format="xml"),
    ],
)
def test_config_validation(cfg):
    with pytest.raises(ConfigError):
        cfg.validate()


def test_usage_errors_exit_2(tmp_path, capsys):
    assert main(["profile", "--n", "1", "--eps", "0.1", "--out", str(tmp_path)]) == 2
    assert "n must be >= 2" in capsys.readouterr().err
    assert main(["distance", "--eps", "0", "--n", "10", "--out", str(tmp_path)]) == 2
    assert "eps must be > 0" in capsys.readouterr().err
    assert main(["variational", "--n", "3", "--eps", "0.1", "--m", "50", "--out", str(tmp_path)]) == 2
    assert main(["no-such-command"]) == 2
    assert not any(tmp_path.iterdir())


def test_version(capsys):
    assert main(["--version"]) == 0
    assert __version__ in capsys.readouterr().out


# -- commands ----------------------------------------------------------------------


def test_profile_grid(tmp_path):
    assert main(["profile", "--n", "3", "--eps-grid", "log:1e-4:0.5:50", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "profile.csv")
    assert len(rows) == 50
    m = [float(r["M"]) for r in rows]
    assert all(b > a for a, b in zip(m, m[1:]))
    assert (tmp_path / "profile.manifest.json").exists()


def test_profile_single_value(tmp_path):
    assert main(["profile", "--n", "2", "--eps", "0.5", "--out", str(tmp_path)]) == 0
    (row,) = read_csv(tmp_path / "profile.csv")
    assert float(row["M"]) == pytest.approx(1.1283792, abs=1e-7)


def test_profile_json(tmp_path):
    assert main(["profile", "--n", "4", "--eps-grid", "lin:0.1:0.5:5", "--format", "json", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "profile.json").read_text())
    assert doc["columns"] == ["n", "eps", "M"]
    assert len(doc["rows"]) == 5


def test_distance_columns_and_zero(tmp_path):
    assert main(["distance", "--eps", "0.5", "--n", "10", "--out", str(tmp_path)]) == 0
    (row,) = read_csv(tmp_path / "distance.csv")
    assert float(row["D"]) == 0.0
    assert set(row) == {"n", "eps", "M", "D", "D_ode", "gap", "quad_error", "diff", "sup_D"}


def test_distance_range(tmp_path):
    assert main(["distance", "--eps", "0.1", "--n-range", "2:8", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "distance.csv")
    assert [int(r["n"]) for r in rows] == list(range(2, 9))
    assert all(float(r["gap"]) <= 1e-4 for r in rows)
    sup = max(float(r["D"]) for r in rows)
    assert all(float(r["sup_D"]) == sup for r in rows)
    assert rows[0]["diff"] == ""
    man = json.loads((tmp_path / "distance.manifest.json").read_text())
    assert man["summary"]["scans"][0]["sup_D"] == sup


def test_variational_example(tmp_path):
    argv = ["variational", "--n", "3", "--eps", "0.1", "--m", "2000", "--seed", "7"]
    assert main(argv + ["--out", str(tmp_path / "a")]) == 0
    man = json.loads((tmp_path / "a" / "variational.manifest.json").read_text())
    assert abs(man["summary"]["relative_gap"]) <= 5e-3
    assert man["exit_status"] == 0 and man["warning"] is False
    rows = read_csv(tmp_path / "a" / "variational.csv")
    assert list(rows[0]) == ["x", "r", "clipped"] and len(rows) == 2001
    # same command twice gives the same bytes
    assert main(argv + ["--out", str(tmp_path / "b")]) == 0
    assert snapshot(tmp_path / "a") == snapshot(tmp_path / "b")


def test_variational_nonconvergence_exit_3(tmp_path, monkeypatch):
    import isoball.cli as cli
    from isoball.variational import minimize_profile

    def stubborn(*a, **k):
        res = minimize_profile(*a, **k)
        res.converged = False
        return res

    monkeypatch.setattr(cli, "minimize_profile", stubborn)
    assert main(["variational", "--n", "2", "--eps", "0.2", "--m", "200", "--out", str(tmp_path)]) == 3
    man = json.loads((tmp_path / "variational.manifest.json").read_text())
    assert man["warning"] is True and man["exit_status"] == 3
    assert (tmp_path / "variational.csv").exists()


def test_numeric_failure_exit_1(tmp_path, monkeypatch, capsys):
    import isoball.bound as bound

    def broken(n, eps, tol=None):
        raise ArithmeticError("forced")

    monkeypatch.setattr(bound, "solve_rho_for_volume", broken)
    assert main(["profile", "--n", "3", "--eps-grid", "0.1,0.2", "--out", str(tmp_path)]) == 1
    assert "eps=0.1" in capsys.readouterr().err


def test_verify_lemmas_coarse(tmp_path):
    argv = ["verify-lemmas", "--h", "R/20", "--seed", "1", "--seed", "2", "--bodies", "4", "--bodies-3d", "1"]
    assert main(argv + ["--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "lemmas.json").read_text())
    assert rep["all_passed"] and rep["verdicts_agree_across_seeds"]
    checks = {c["name"]: c for c in rep["runs"][0]["checks"]}
    assert checks["dyadic_k5_3d"]["passed"] is None
    assert "resolution" in checks["dyadic_k5_3d"]["note"]
    assert all(c["passed"] for name, c in checks.items() if not name.startswith("dyadic_k"))


def test_verify_lemmas_failure_names_the_check(tmp_path, monkeypatch, capsys):
    import isoball.lemmas as lemmas

    monkeypatch.setitem(lemmas.TOLERANCES, "axis_halving", 0.0)
    argv = ["verify-lemmas", "--h", "R/20", "--bodies", "0", "--bodies-3d", "0", "--out", str(tmp_path)]
    assert main(argv) == 1
    assert "axis_halving" in capsys.readouterr().err


# -- manifests and replay -----------------------------------------------------------


def test_manifest_contents(tmp_path):
    assert main(["profile", "--n", "3", "--eps", "0.2", "--out", str(tmp_path)]) == 0
    man = json.loads((tmp_path / "profile.manifest.json").read_text())
    assert man["tool"] == "isoball" and man["version"] == __version__
    assert man["config"]["n"] == 3 and man["config"]["quad_tol"] == 1e-8
    assert man["outputs"] == ["profile.csv"]


def test_replay_reproduces_bytes(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["distance", "--eps-grid", "0.05,0.3", "--n-range", "2:4", "--format", "json", "--out", str(a)]) == 0
    assert main(["replay", str(a / "distance.manifest.json"), "--out", str(b)]) == 0
    assert snapshot(a) == snapshot(b)


def test_replay_rejects_foreign_manifest(tmp_path):
    bad = tmp_path / "m.json"
    bad.write_text(json.dumps({"tool": "other", "config": {}}))
    assert main(["replay", str(bad), "--out", str(tmp_path / "o")]) == 2


def test_thread_count_does_not_change_output(tmp_path):
    argv = ["-m", "isoball", "distance", "--eps", "0.2", "--n-range", "2:5"]
    env = {"PATH": "/usr/bin:/bin"}
    for threads, d in (("1", "t1"), ("2", "t2")):
        out = subprocess.run(
            [sys.executable, *argv, "--out", str(tmp_path / d)],
            env={**env, "ISOBALL_THREADS": threads}, capture_output=True, text=True,
        )
        assert out.returncode == 0, out.stderr
    assert snapshot(tmp_path / "t1") == snapshot(tmp_path / "t2")


def test_writes_only_into_out(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["profile", "--n", "3", "--eps", "0.3", "--out", "sub"]) == 0
    assert [p.name for p in tmp_path.iterdir()] == ["sub"]

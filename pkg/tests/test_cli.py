import csv
import hashlib
import io
import json
import math
from pathlib import Path

import pytest

from impact_governor.cli import (
    METRICS_CSV_COLUMNS,
    _metrics_from_row,
    _metrics_row,
    main,
)
from impact_governor.fit import load_profile, save_profile
from impact_governor.impact import ImpactMetrics, aggregate_configuration
from impact_governor.synthetic import make_campaign

from conftest import make_profile

REPO_ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture(scope="module")
def campaign_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("campaign")
    make_campaign(out, speeds=(3.0, 3.5, 4.0), trials_per_speed=2, seed=5)
    return out


@pytest.fixture(scope="module")
def analyzed_dir(campaign_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("analyzed")
    assert main(["analyze", str(campaign_dir), "--out", str(out)]) == 0
    return out


# --- plumbing ----------------------------------------------------------------


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert capsys.readouterr().out.strip()


def test_metrics_csv_row_round_trip():
    m = ImpactMetrics(
        configuration="Foo-0deg", mass_kg=0.25, angle_deg=0.0, v_in_mps=3.2,
        f_max_n=101.5, dt_j_s=0.0312, j_ns=1.07, ec_i_j=1.28, ec_r=0.14,
        v_f_mps=1.2, e_hat=0.375, v_f_impulse_mps=1.1,
        flags=["short-rebound-window"],
    )
    row = dict(zip(METRICS_CSV_COLUMNS, _metrics_row(m)))
    back = _metrics_from_row(row)
    assert back.configuration == m.configuration
    assert back.flags == m.flags
    assert back.v_in_mps == pytest.approx(m.v_in_mps, rel=1e-8)
    assert back.ec_r == pytest.approx(m.ec_r, rel=1e-8)


# --- analyze -----------------------------------------------------------------


def test_analyze_products(analyzed_dir):
    rows = list(csv.DictReader(open(analyzed_dir / "metrics.csv")))
    assert len(rows) == 6
    assert all(r["configuration"] == "Carbon-0deg" for r in rows)
    for r in rows:
        assert 0.0 < float(r["ec_r"]) < 1.0
        assert float(r["f_max_n"]) > 6.0

    summaries = sorted(analyzed_dir.glob("summary_*.json"))
    assert len(summaries) == 3  # one aggregate per nominal speed
    data = json.loads(summaries[0].read_text())
    assert data["n"] == 2

    manifest = json.loads((analyzed_dir / "run_manifest.json").read_text())
    assert manifest["subcommand"] == "analyze"
    assert "metrics.csv" in manifest["outputs"]
    assert len(manifest["inputs"]) == 6


def test_analyze_rejects_bad_input(tmp_path):
    assert main(["analyze", str(tmp_path / "nope"), "--out", str(tmp_path / "o")]) == 2
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["analyze", str(empty), "--out", str(tmp_path / "o2")]) == 2


# --- fit ---------------------------------------------------------------------


def test_fit_from_analyze_products(analyzed_dir, tmp_path):
    summaries = [str(p) for p in sorted(analyzed_dir.glob("summary_*.json"))]
    out = tmp_path / "fit"
    assert main(["fit", *summaries, "--out", str(out)]) == 0
    profile = load_profile(out / "profile_Carbon-0deg.json")
    assert profile.restitution.degree == 2
    assert not profile.downgraded
    assert 2.8 < profile.restitution.domain[0] < profile.restitution.domain[1] < 4.2
    # recovers the campaign's seeded retained-energy curve reasonably well
    truth = lambda v: 0.10 + 0.02 * v - 0.001 * v**2
    for v in (3.0, 3.5, 4.0):
        assert profile.retained_energy_at(v) == pytest.approx(truth(v), abs=0.02)
    assert (out / "run_manifest.json").exists()


def _summary_dict(v, ec_r):
    def metric():
        return ImpactMetrics(
            configuration="Bad", mass_kg=0.25, angle_deg=0.0, v_in_mps=v,
            f_max_n=100.0, dt_j_s=0.03, j_ns=1.0, ec_i_j=1.0, ec_r=ec_r,
            v_f_mps=math.sqrt(ec_r) * v, e_hat=math.sqrt(ec_r),
            v_f_impulse_mps=0.0,
        )

    return aggregate_configuration([metric(), metric()]).to_dict()


def test_fit_unphysical_model_exits_invariant(tmp_path):
    paths = []
    for v, ec in ((3.0, 0.10), (3.9, 0.02), (4.0, 0.30)):
        p = tmp_path / f"s{v}.json"
        p.write_text(json.dumps(_summary_dict(v, ec)))
        paths.append(str(p))
    assert main(["fit", *paths, "--out", str(tmp_path / "out")]) == 4


def test_fit_missing_file_exits_input_error(tmp_path):
    assert main(["fit", str(tmp_path / "ghost.json"), "--out", str(tmp_path)]) == 2


# --- govern ------------------------------------------------------------------


@pytest.fixture
def profile_path(tmp_path):
    path = tmp_path / "profile.json"
    save_profile(make_profile(), path)
    return path


def _govern_stdin(monkeypatch, capsys, messages, extra_args=(), out=None):
    text = "".join(json.dumps(m) + "\n" for m in messages)
    monkeypatch.setattr("sys.stdin", io.StringIO(text))
    code = main(["govern", "--stdin", *extra_args, "--out", str(out)])
    return code, capsys.readouterr().out


def test_govern_stdin_caps_and_logs(monkeypatch, capsys, tmp_path, profile_path):
    out = tmp_path / "gov"
    code, stdout = _govern_stdin(
        monkeypatch, capsys,
        [
            {"type": "range", "d_m": 4.0, "t_s": 0.0},
            {"type": "cmd", "vx": 20.0, "vy": 0.0, "vz": 0.0, "t_s": 0.1},
        ],
        extra_args=["--profile", str(profile_path)],
        out=out,
    )
    assert code == 0
    reply = json.loads(stdout.splitlines()[0])
    assert reply["source"] == "force"
    assert reply["cap_mps"] == pytest.approx(14.5876, abs=1e-3)

    compliance = (out / "compliance.csv").read_text().splitlines()
    assert len(compliance) == 2
    assert compliance[1].split(",")[6] == "force"
    assert json.loads((out / "run_manifest.json").read_text())["subcommand"] == "govern"


def test_govern_body_region_override(monkeypatch, capsys, tmp_path, profile_path):
    code, stdout = _govern_stdin(
        monkeypatch, capsys,
        [
            {"type": "range", "d_m": 4.0, "t_s": 0.0},
            {"type": "cmd", "vx": 20.0, "vy": 0.0, "vz": 0.0, "t_s": 0.1},
        ],
        extra_args=["--profile", str(profile_path), "--body-region", "face"],
        out=tmp_path / "gov",
    )
    assert code == 0
    reply = json.loads(stdout.splitlines()[0])
    assert reply["cap_mps"] == pytest.approx(65.0 * 0.036 / (0.25 * 1.382), abs=1e-3)


def test_govern_config_file_with_cli_precedence(
    monkeypatch, capsys, tmp_path, profile_path
):
    config = tmp_path / "governor.json"
    config.write_text(
        json.dumps(
            {
                "body_region": "face",
                "profile": profile_path.name,  # resolved next to the config
                "compliance_log": "audit.csv",
                "mode": "binary",
            }
        )
    )
    msgs = [
        {"type": "range", "d_m": 4.0, "t_s": 0.0},
        {"type": "cmd", "vx": 20.0, "vy": 0.0, "vz": 0.0, "t_s": 0.1},
    ]
    code, stdout = _govern_stdin(
        monkeypatch, capsys, msgs,
        extra_args=["--config", str(config)], out=tmp_path / "g1",
    )
    assert code == 0
    assert json.loads(stdout.splitlines()[0])["cap_mps"] == pytest.approx(6.77, abs=0.01)
    assert (tmp_path / "audit.csv").exists()  # compliance_log from the config

    # --f-star outranks the config's body region
    code, stdout = _govern_stdin(
        monkeypatch, capsys, msgs,
        extra_args=["--config", str(config), "--f-star", "140"],
        out=tmp_path / "g2",
    )
    assert code == 0
    assert json.loads(stdout.splitlines()[0])["cap_mps"] == pytest.approx(14.59, abs=0.01)


def test_govern_malformed_stream_exits_protocol(
    monkeypatch, capsys, tmp_path, profile_path
):
    monkeypatch.setattr("sys.stdin", io.StringIO("{not json\n"))
    code = main(
        ["govern", "--stdin", "--profile", str(profile_path), "--out", str(tmp_path)]
    )
    assert code == 3
    assert json.loads(capsys.readouterr().out.splitlines()[0])["type"] == "error"


def test_govern_requires_profile(monkeypatch, tmp_path):
    monkeypatch.setattr("sys.stdin", io.StringIO(""))
    assert main(["govern", "--stdin", "--out", str(tmp_path)]) == 2


# --- simulate ----------------------------------------------------------------


def test_simulate_is_deterministic_across_runs(tmp_path):
    scenario = str(REPO_ROOT / "scenarios" / "three_humans_face.json")
    digests = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["simulate", scenario, "--out", str(out)]) == 0
        digests.append(hashlib.sha256((out / "trajectory.csv").read_bytes()).hexdigest())
        summary = json.loads((out / "summary.json").read_text())
        assert summary["violations"] == 0
    assert digests[0] == digests[1]


def test_simulate_emit_gnuplot_and_overrides(tmp_path):
    scenario = str(REPO_ROOT / "scenarios" / "three_humans_chest.json")
    out = tmp_path / "sim"
    assert (
        main(
            ["simulate", scenario, "--out", str(out), "--emit-gnuplot",
             "--body-region", "face", "--mode", "ramp"]
        )
        == 0
    )
    assert (out / "trajectory.dat").exists()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["v_force_mps"] == pytest.approx(6.77, abs=0.01)
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert manifest["subcommand"] == "simulate"


def test_simulate_missing_scenario_exits_input_error(tmp_path):
    assert main(["simulate", str(tmp_path / "no.json"), "--out", str(tmp_path)]) == 2


def test_simulate_bad_scenario_exits_input_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"name": "x", "goals": [[1, 1]]}))
    assert main(["simulate", str(bad), "--out", str(tmp_path / "o")]) == 2


# --- report ------------------------------------------------------------------


def test_report_renders_markdown(analyzed_dir, tmp_path, profile_path):
    out = tmp_path / "report"
    inputs = [str(analyzed_dir / "metrics.csv")]
    inputs += [str(p) for p in sorted(analyzed_dir.glob("summary_*.json"))]
    inputs += [str(profile_path)]
    assert main(["report", *inputs, "--out", str(out)]) == 0
    text = (out / "report.md").read_text()
    assert "Carbon-0deg" in text
    assert "|" in text  # tables made it in
    assert "F_max" in text

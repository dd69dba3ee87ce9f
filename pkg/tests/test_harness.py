import csv
import json

import numpy as np
import pytest

from ldaho import cli, harness
from ldaho.config import ConfigError, parse_config, parse_seeds
from ldaho.scenarios import TraceParseError

TINY = """
[scenario]
kind = volatile
I = 2
J = 2
T = 50
seed = 3
gamma = 5

[run]
algorithms = lda, lda2, maxsinr, random, oracle
seeds = 0-1
"""

STATIC5 = """
[scenario]
kind = static
I = 4
J = 3
T = 40
seed = 1

[run]
algorithms = lda, maxsinr, random
seeds = 0-4
"""


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# --- config ----------------------------------------------------------------------


def test_config_defaults_and_overrides():
    exp = parse_config(TINY)
    assert exp.scenario.I == 2 and exp.scenario.gamma == 5.0
    assert exp.algorithms == ["lda", "lda2", "maxsinr", "random", "oracle"]
    assert exp.seeds == [0, 1]
    assert exp.format == "csv" and exp.forecaster == "none"


def test_config_all_sections():
    exp = parse_config("""
[scenario]
kind = mobility
I = 3
J = 4
T = 5
[delay]
spec = measured_table
time_varying = yes
[mobility]
randomness = 0.8
speed_range = 2, 10
[channel]
shadowing_db = 4
rat_mix = 0.5, 0.3, 0.2
[lda]
rounding = independent
grad_at = implemented
beta = 0.1
theta_scale = 2
[run]
format = json
forecaster = oracle
oracle_budget = 100
""")
    sc = exp.scenario
    assert sc.delay_time_varying and sc.randomness == 0.8 and sc.speed_range == (2.0, 10.0)
    assert sc.rat_mix == (0.5, 0.3, 0.2) and sc.shadowing_db == 4.0
    assert exp.lda.rounding == "independent" and exp.lda.beta == 0.1
    assert exp.format == "json" and exp.forecaster == "oracle" and exp.oracle_budget == 100


@pytest.mark.parametrize(
    "text, needle",
    [
        ("[scenario]\nfoo = 1\n", "foo"),
        ("[scenario]\nI = 2\n[run]\nsedes = 1\n", "sedes"),
        ("[channel]\npathloss = 3\n", "pathloss"),
        ("[weather]\nrain = 1\n", "weather"),
        ("[scenario]\nI = two\n", "i"),
        ("[scenario]\nkind = lunar\n", "kind"),
        ("[run]\nalgorithms = lda, magic\n", "magic"),
        ("[run]\nformat = xml\n", "format"),
        ("[run]\nforecaster = crystal\n", "forecaster"),
        ("[lda]\nrounding = sometimes\n", "rounding"),
        ("[lda]\nstep = 3\n", "step"),
        ("no section here\n", "section"),
    ],
)
def test_config_errors_name_the_offender(text, needle):
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert needle in str(err.value).lower()


def test_seed_lists():
    assert parse_seeds("0-3") == [0, 1, 2, 3]
    assert parse_seeds("5, 1,2-3") == [5, 1, 2, 3]
    with pytest.raises(ValueError):
        parse_seeds(" , ")


def test_out_dir_from_environment(monkeypatch):
    monkeypatch.setenv("LDAHO_OUT_DIR", "/tmp/somewhere")
    assert parse_config(TINY).out_dir == "/tmp/somewhere"
    assert parse_config(TINY + "out_dir = here\n").out_dir == "here"


def test_digest_tracks_settings():
    a = parse_config(TINY)
    b = parse_config(TINY.replace("gamma = 5", "gamma = 6"))
    assert a.digest() == parse_config(TINY).digest()
    assert a.digest() != b.digest()


# --- experiments -------------------------------------------------------------------


def test_cardinality_of_series(tmp_path):
    res = harness.run_experiment(parse_config(STATIC5), tmp_path)
    assert len(res.runs) == 15
    rows = _read_csv(tmp_path / "slots.csv")
    assert len(rows) == 40 * 3 * 5
    assert {(r["algorithm"], r["seed"]) for r in rows} == {
        (a, str(s)) for a in ("lda", "maxsinr", "random") for s in range(5)}


def test_tiny_instance_has_regret_everywhere(tmp_path):
    res = harness.run_experiment(parse_config(TINY), tmp_path)
    assert res.exit_code == 0 and res.oracle is not None
    for r in res.runs:
        assert r.regret is not None and r.regret[-1] >= -1e-9
    assert all(r.regret[-1] == 0 for r in res.by_algorithm("oracle"))
    rows = _read_csv(tmp_path / "slots.csv")
    assert all(row["regret"] != "" for row in rows)


def test_cumulative_columns_recompute(tmp_path):
    harness.run_experiment(parse_config(TINY), tmp_path)
    rows = _read_csv(tmp_path / "slots.csv")
    by_run = {}
    for row in rows:
        by_run.setdefault((row["algorithm"], row["seed"]), []).append(row)
    for series in by_run.values():
        f = np.array([float(r["f"]) for r in series])
        g = np.array([float(r["g"]) for r in series])
        h = np.array([float(r["h"]) for r in series])
        np.testing.assert_allclose(np.cumsum(f), [float(r["cum_f"]) for r in series], atol=1e-9, rtol=0)
        np.testing.assert_allclose(np.cumsum(g), [float(r["cum_g"]) for r in series], atol=1e-9, rtol=0)
        np.testing.assert_allclose(g - h, f, atol=1e-9, rtol=0)


def test_summary_consistent_with_slots(tmp_path):
    res = harness.run_experiment(parse_config(TINY), tmp_path)
    doc = json.loads((tmp_path / "summary.json").read_text())
    assert doc["schema_version"] == harness.SCHEMA_VERSION
    assert doc["config_digest"] == res.config.digest()
    assert doc["kappa_bps"] == res.kappa
    rows = _read_csv(tmp_path / "slots.csv")
    for run in doc["runs"]:
        f = [float(r["f"]) for r in rows if r["algorithm"] == run["algorithm"] and r["seed"] == str(run["seed"])]
        assert run["total_f"] == pytest.approx(sum(f), abs=1e-9)
        if run["algorithm"] in ("lda", "lda2"):
            frac = run["total_f_fractional"]
            assert run["discretization_error"] == pytest.approx((frac - run["total_f"]) / abs(frac))
            assert len(run["expert_movement"]) == run["K"]
        else:
            assert run["discretization_error"] is None
    # the summary document round-trips through JSON unchanged
    assert json.loads(json.dumps(doc)) == doc


def test_repeat_runs_are_byte_identical(tmp_path):
    exp = parse_config(TINY)
    harness.run_experiment(exp, tmp_path / "a")
    harness.run_experiment(exp, tmp_path / "b", jobs=2)
    for name in ("slots.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_json_slots_format(tmp_path):
    exp = parse_config(TINY)
    exp.format = "json"
    harness.run_experiment(exp, tmp_path)
    doc = json.loads((tmp_path / "slots.json").read_text())
    assert doc["columns"][:6] == ["slot", "algorithm", "seed", "g", "h", "f"]
    assert len(doc["rows"]) == 50 * 5 * 2
    lda_rows = [r for r in doc["rows"] if r[1] == "maxsinr"]
    assert lda_rows[0][doc["columns"].index("f_frac")] is None


def test_budget_refusal_still_runs_others(tmp_path):
    exp = parse_config(TINY.replace("I = 2", "I = 6").replace("J = 2", "J = 5"))
    res = harness.run_experiment(exp, tmp_path)
    assert res.exit_code == 2 and "budget" in res.refusal
    assert {r.algorithm for r in res.runs} == {"lda", "lda2", "maxsinr", "random"}
    assert all(r.regret is None for r in res.runs)
    assert json.loads((tmp_path / "summary.json").read_text())["refusal"].startswith("oracle refused")


def test_sweep_shares_trace_and_reports_costs(tmp_path):
    exp = parse_config(TINY)
    res = harness.gamma_sweep(exp, [0, 20], tmp_path)
    r0, r20 = res[0.0], res[20.0]
    assert r0.kappa == r20.kappa
    lda0 = r0.by_algorithm("lda")[0]
    # gamma = 0 still scores handovers with the scenario's delays
    assert lda0.score.switches.sum() > 0
    assert lda0.score.ho.sum() > 0 and lda0.score.h.sum() == 0.0
    rows = _read_csv(tmp_path / "sweep.csv")
    assert len(rows) == 2 * 5
    assert {r["gamma"] for r in rows} == {"0.0", "20.0"}
    assert (tmp_path / "gamma_0" / "slots.csv").exists()
    assert (tmp_path / "gamma_20" / "summary.json").exists()


def test_single_gamma_sweep_equals_run(tmp_path):
    exp = parse_config(TINY)
    harness.gamma_sweep(exp, [5], tmp_path / "sw")
    harness.run_experiment(exp, tmp_path / "run")
    assert (tmp_path / "sw" / "gamma_5" / "slots.csv").read_bytes() == (tmp_path / "run" / "slots.csv").read_bytes()
    with pytest.raises(ValueError):
        harness.gamma_sweep(exp, [])


def test_lda_overrides_take_effect():
    base = parse_config(TINY)
    fast = parse_config(TINY + "[lda]\ntheta_scale = 4\nbeta = 0.5\n")
    r0 = harness.run_experiment(base).by_algorithm("lda")[0]
    r1 = harness.run_experiment(fast).by_algorithm("lda")[0]
    np.testing.assert_allclose(r1.params.thetas, 4 * r0.params.thetas)
    assert r1.params.beta == 0.5


# --- forecasts ---------------------------------------------------------------------


def test_forecast_file_with_holds(tmp_path):
    p = tmp_path / "fc.csv"
    p.write_text("slot,ue_id,bs_id,x\n0,0,1,1\n0,1,0,0.25\n0,1,1,0.75\n2,0,0,1\n")
    xs = harness.load_forecast(p, 3, 2, 2)
    np.testing.assert_allclose(xs[0], [[0, 1], [0.25, 0.75]])
    np.testing.assert_allclose(xs[1], xs[0])
    np.testing.assert_allclose(xs[2], [[1, 0], [0.25, 0.75]])


def test_forecast_file_errors(tmp_path):
    p = tmp_path / "fc.csv"
    p.write_text("slot,ue_id,bs_id,x\n0,0,0,0.5\n")
    with pytest.raises(ValueError, match="sum to 1"):
        harness.load_forecast(p, 1, 1, 2)
    p.write_text("slot,ue_id,bs_id\n0,0,7\n")
    with pytest.raises(TraceParseError, match="out of range"):
        harness.load_forecast(p, 1, 1, 2)


def test_forecaster_options_in_experiment(tmp_path):
    p = tmp_path / "fc.csv"
    p.write_text("slot,ue_id,bs_id\n" + "".join(f"{t},{i},0\n" for t in range(50) for i in range(2)))
    exp = parse_config(TINY)
    exp.forecaster = f"file:{p}"
    r = harness.run_experiment(exp).by_algorithm("lda")[0]
    assert len(r.final_weights) == r.params.K + 1
    exp.forecaster = "oracle"
    exp.algorithms = ["lda"]
    res = harness.run_experiment(exp)
    assert res.oracle is not None and len(res.runs[0].final_weights) == res.runs[0].params.K + 1
    exp.forecaster = "none"
    assert len(harness.run_experiment(exp).runs[0].final_weights) == r.params.K


# --- CLI -------------------------------------------------------------------------


def _cfg_file(tmp_path, text, name="exp.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_cli_run_success(tmp_path):
    cfg = _cfg_file(tmp_path, TINY)
    code = cli.main(["run", cfg, "--out-dir", str(tmp_path / "o"), "--seeds", "4", "--algorithms", "lda,maxsinr"])
    assert code == 0
    rows = _read_csv(tmp_path / "o" / "slots.csv")
    assert {r["algorithm"] for r in rows} == {"lda", "maxsinr"} and {r["seed"] for r in rows} == {"4"}


def test_cli_config_error_exit(tmp_path, capsys):
    cfg = _cfg_file(tmp_path, TINY + "colour = blue\n")
    assert cli.main(["run", cfg, "--out-dir", str(tmp_path / "o")]) == 1
    assert "colour" in capsys.readouterr().err
    assert cli.main(["run", _cfg_file(tmp_path, TINY), "--algorithms", "nope"]) == 1
    assert cli.main(["sweep", _cfg_file(tmp_path, TINY), "--gamma", "-1"]) == 1


def test_cli_budget_exit(tmp_path, capsys):
    cfg = _cfg_file(tmp_path, TINY.replace("J = 2", "J = 5").replace("I = 2", "I = 6"))
    assert cli.main(["run", cfg, "--out-dir", str(tmp_path / "o")]) == 2
    assert "oracle refused" in capsys.readouterr().err
    assert (tmp_path / "o" / "slots.csv").exists()
    assert cli.main(["oracle", cfg, "--out-dir", str(tmp_path / "p")]) == 2


def test_cli_io_error_exit(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.main(["run", _cfg_file(tmp_path, TINY), "--out-dir", str(blocker / "sub")]) == 3
    assert cli.main(["run", str(tmp_path / "missing.ini")]) == 3


def test_cli_oracle_and_sweep(tmp_path):
    cfg = _cfg_file(tmp_path, TINY)
    assert cli.main(["oracle", cfg, "--out-dir", str(tmp_path / "o"), "--format", "json"]) == 0
    doc = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert doc["algorithms"] == ["oracle"] and doc["oracle"]["total_f"] == doc["runs"][0]["total_f"]
    assert cli.main(["sweep", cfg, "--gamma", "5,20", "--out-dir", str(tmp_path / "s")]) == 0
    assert (tmp_path / "s" / "sweep.csv").exists()


def test_cli_validate(tmp_path, capsys):
    sp = tmp_path / "sinr.csv"
    sp.write_text("slot,ue_id,bs_id,sinr_db\n0,0,0,3\n1,0,0,4\n")
    bp = tmp_path / "bs.csv"
    bp.write_text("bs_id,bandwidth_hz,tx_power_w,rat,freq_group,x_m,y_m\n0,1e7,20,G3,0,,\n")
    assert cli.main(["validate", str(sp), str(bp)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["T"] == 2 and out["observations"] == 2 and out["imputed_cells"] == 0
    sp.write_text("slot,ue_id,bs_id,sinr_db\n0,0,0,x\n")
    assert cli.main(["validate", str(sp), str(bp)]) == 1
    assert cli.main(["validate", str(tmp_path / "nope.csv"), str(bp)]) == 3

import csv
import io
import json

import jsonschema
import pytest

from osa import harness
from osa.harness import (
    REPORT_SCHEMA,
    RunConfig,
    SuiteReport,
    UsageError,
    cmd_check,
    cmd_oracle,
    cmd_rank_demo,
    cmd_sweep_alpha,
    loglog_slope,
    main,
    osa_buffer_bytes,
    read_config_file,
    render,
)
from osa.jacobian import kappa_bound
from osa.linalg import SizeCapError


def _json_out(capsys, argv):
    code = main(argv)
    return code, json.loads(capsys.readouterr().out)


def _strip_times(doc):
    for c in doc["checks"]:
        c.pop("wall_time")
    return doc


# --- RunConfig --------------------------------------------------------------


@pytest.mark.parametrize(
    "kwargs",
    [dict(n=0), dict(d=6, heads=4), dict(heads=1), dict(basis="svd"), dict(trials=-1), dict(ns_iters=-1), dict(format="xml")],
)
def test_config_rejects(kwargs):
    with pytest.raises(UsageError):
        RunConfig(**kwargs).validate()


def test_config_echo_is_plain():
    echo = RunConfig(seed=3).echo()
    assert echo["seed"] == 3
    json.dumps(echo)


# --- check ------------------------------------------------------------------------


def test_check_defaults_pass(capsys):
    code, doc = _json_out(capsys, ["check", "--trials", "2"])
    assert code == 0
    assert doc["passed"] is True
    assert {c["anchor"] for c in doc["checks"]} and all(c["anchor"] for c in doc["checks"])
    jsonschema.validate(doc, REPORT_SCHEMA)


def test_check_zero_trials_is_empty_pass():
    rep = cmd_check(RunConfig(trials=0))
    assert rep.checks == [] and rep.passed


def test_rank_suite_within_tolerance():
    rep = cmd_check(RunConfig(trials=3), ["rank"])
    assert rep.passed
    assert all(c.measured <= 1e-8 for c in rep.checks if c.name.startswith("kernel-spectrum"))


def test_orthogonality_suite_single_iteration():
    rep = cmd_check(RunConfig(trials=4, basis="ns", ns_iters=1), ["orthogonality"])
    assert rep.checks and rep.passed


def test_unknown_suite_is_usage_error(capsys):
    assert main(["check", "--suites", "nope"]) == 2


def test_failed_check_exits_one(monkeypatch, capsys, tmp_path):
    def broken(cfg):
        rep = SuiteReport("init", cfg.echo())
        rep.add("always-fails", "test anchor", 1.0, 0.0, False)
        return rep

    monkeypatch.setitem(harness.SUITE_FUNCS, "init", broken)
    out = tmp_path / "rep.json"
    assert main(["check", "--suites", "init", "--out", str(out)]) == 1
    doc = json.loads(out.read_text())
    assert doc["passed"] is False and doc["checks"][0]["status"] == "fail"


def test_invalid_config_exits_two(capsys):
    assert main(["check", "--heads", "3", "--d", "8"]) == 2
    assert "error" in capsys.readouterr().err


def test_check_is_deterministic(capsys):
    argv = ["check", "--trials", "2", "--seed", "11", "--suites", "orthogonality,bounds,init"]
    _, a = _json_out(capsys, argv)
    _, b = _json_out(capsys, argv)
    assert _strip_times(a) == _strip_times(b)


def test_schema_requires_anchor():
    doc = SuiteReport("x", {}).as_dict()
    doc["checks"] = [{"name": "a", "measured": 1.0, "bound": 1.0, "status": "pass"}]
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate(doc, REPORT_SCHEMA)


# --- config file --------------------------------------------------------------------


def test_config_file_and_flag_override(tmp_path, capsys):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\nseed = 5\nd = 16\nheads=4\nns-iters = 3\nbasis = ns\n")
    parsed = read_config_file(path)
    assert parsed["ns_iters"] == "3"
    code, doc = _json_out(capsys, ["check", "--config", str(path), "--seed", "9", "--trials", "1", "--suites", "init"])
    assert code == 0
    cfg = doc["config"]
    assert (cfg["seed"], cfg["d"], cfg["heads"], cfg["ns_iters"], cfg["basis"]) == (9, 16, 4, 3, "ns")


def test_config_file_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    with pytest.raises(UsageError):
        read_config_file(bad)
    bad.write_text("seed\n")
    with pytest.raises(UsageError):
        read_config_file(bad)


# --- sweep-alpha ----------------------------------------------------------------------


def test_sweep_sorted_and_consistent():
    rep = cmd_sweep_alpha(RunConfig(trials=1), [1e-2, 1e-4, 1e-3])
    alphas = [row["alpha"] for row in rep.table]
    assert alphas == sorted(alphas)
    for row in rep.table:
        expected = kappa_bound(row["delta_hat"], row["j1_norm"])
        assert abs(row["bound_rhs"] - expected) <= 1e-12
    assert rep.passed


def test_sweep_small_alpha_condition():
    rep = cmd_sweep_alpha(RunConfig(trials=2, n=8, d=8, heads=2), [1e-4])
    mean = sum(r["kappa_eff"] for r in rep.table) / len(rep.table)
    assert mean <= 1.01


def test_sweep_csv(capsys):
    assert main(["sweep-alpha", "--trials", "1", "--alphas", "0.1,0.001"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert [float(r["alpha"]) for r in rows] == [0.001, 0.1]
    assert {"alpha", "kappa_eff", "j1_norm", "delta_hat", "bound_rhs"} <= set(rows[0])


def test_sweep_refusals():
    with pytest.raises(SizeCapError):
        cmd_sweep_alpha(RunConfig(n=80, d=8), [0.1])
    with pytest.raises(UsageError):
        cmd_sweep_alpha(RunConfig(), [0.0])


# --- rank demo ------------------------------------------------------------------------------


def test_rank_demo_osa_rank_constant():
    rep = cmd_rank_demo(RunConfig(), depth=6, mechanism="osa")
    ranks = {row["effective_rank"] for row in rep.table}
    assert len(ranks) == 1 and rep.passed


def test_rank_demo_identical_rows_ssa():
    rep = cmd_rank_demo(RunConfig(), depth=1, mechanism="ssa", identical_rows=True)
    assert [row["effective_rank"] for row in rep.table] == [1, 1]


def test_rank_demo_both_interleaved():
    rep = cmd_rank_demo(RunConfig(), depth=3, mechanism="both")
    assert [row["mechanism"] for row in rep.table] == ["osa", "ssa"] * 4
    assert [row["layer"] for row in rep.table] == [0, 0, 1, 1, 2, 2, 3, 3]
    assert rep.table[0]["lambda_1"] == rep.table[1]["lambda_1"]


def test_rank_demo_depth_zero_rejected():
    with pytest.raises(UsageError):
        cmd_rank_demo(RunConfig(), depth=0)


# --- bench helpers ----------------------------------------------------------------------------


def test_buffer_model_is_linear():
    ns = [512, 1024, 2048, 4096]
    slope = loglog_slope(ns, [osa_buffer_bytes(n, 64, 16) for n in ns])
    assert 0.9 <= slope <= 1.1


def test_loglog_slope_exact():
    assert loglog_slope([1, 2, 4], [3, 12, 48]) == pytest.approx(2.0)


def test_bench_table_shape():
    # timings at this size are noise; only the report layout is checked
    rep = harness.cmd_bench_scaling(RunConfig(d=8, heads=2), [32, 16], reps=5)
    assert [(row["N"], row["mechanism"]) for row in rep.table] == [
        (n, m) for n in (16, 32) for m in ("osa-qr", "osa-ns", "ssa")
    ]
    assert {c.name for c in rep.checks} >= {"ssa-doubling-ratio", "osa-buffer-exponent"}


def test_bench_rejects_few_reps():
    with pytest.raises(UsageError):
        harness.cmd_bench_scaling(RunConfig(d=8, heads=2), [16, 32], reps=1)


# --- oracle ---------------------------------------------------------------------------------


@pytest.mark.parametrize("which", ["theorem1", "frechet", "jacobian"])
def test_oracles_pass(which):
    rep = cmd_oracle(RunConfig(n=6, d=4, heads=2, trials=2), which)
    assert rep.checks and rep.passed


def test_oracle_refuses_large(capsys):
    assert main(["oracle", "--which", "theorem1", "--n", "100"]) == 2


def test_render_csv_of_checks():
    rep = cmd_check(RunConfig(trials=1), ["init"])
    rows = list(csv.DictReader(io.StringIO(render(rep, "csv"))))
    assert rows and all(r["anchor"] for r in rows)

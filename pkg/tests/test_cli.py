import json
import subprocess
import sys
import textwrap

import pytest

from ghzres import __version__
from ghzres.cli import EXIT_CONFIG, EXIT_FAILED, EXIT_OK, main
from ghzres.experiments import (ConfigError, ResultCache, expand_points, mixed_fraction,
                                parse_config, run_point)

SWEEP = """\
scheme: qutrit_wave
n: [2, 3]
rates:
  kappa_p: 1
  kappa_st: {log: [1.0e3, 1.0e4], points: 2}
  kappa_c: {same_as: kappa_st}
  kappa_u: {optimal: B}
error_model: qutrit_depolarizing
"""


def write(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return p


def run(*argv):
    return main([str(a) for a in argv])


def test_unknown_key_reports_line(tmp_path, capsys):
    cfg = write(tmp_path, "scheme: qutrit_wave\nn: 2\nrates:\n  kapa_u: 3\n")
    assert run("steady", "--config", cfg) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert f"{cfg}:4" in err and "kapa_u" in err


@pytest.mark.parametrize("text,needle", [
    ("scheme: nope\nn: 2\n", "scheme"),
    ("scheme: qutrit_wave\nn: 2\nbogus: 1\n", "bogus"),
    ("scheme: qutrit_wave\nn: 1\n", "n"),
    ("scheme: qutrit_wave\nn: 2\nsolver: {method: magic}\n", "method"),
    ("scheme: qutrit_wave\nn: 2\nrates: {kappa_st: {log: [1, 0], points: 3}}\n", "kappa_st"),
    ("scheme: qutrit_wave\nn: 2\nrates: {kappa_c: {same_as: kappa_q}}\n", "kappa_q"),
    ("scheme: state_cond\nn: 3\nrates: {kappa_u: {optimal: B}}\n", "optimal"),
    ("scheme: qutrit_wave\nn: [2\n", "YAML"),
])
def test_config_errors(text, needle):
    with pytest.raises(ConfigError) as info:
        parse_config(text, "x.yaml")
    assert needle in str(info.value) and "x.yaml" in str(info.value)


def test_missing_file(tmp_path, capsys):
    assert run("steady", "--config", tmp_path / "none.yaml") == EXIT_CONFIG


def test_hash_stable_under_reordering():
    a = parse_config(SWEEP)
    lines = SWEEP.splitlines()
    b = parse_config("\n".join([lines[7], lines[1], lines[0]] + lines[2:7]) + "\n")
    assert a.config_hash() == b.config_hash()
    c = parse_config(SWEEP.replace("kappa_p: 1", "kappa_p: 2"))
    assert c.config_hash() != a.config_hash()


def test_points_expand_in_order():
    points = expand_points(parse_config(SWEEP))
    assert [(p["n"], p["rates"]["kappa_st"]) for p in points] == [
        (2, 1e3), (2, 1e4), (3, 1e3), (3, 1e4)]
    assert all(p["rates"]["kappa_c"] == p["rates"]["kappa_st"] for p in points)
    assert points[1]["rates"]["kappa_u"] == pytest.approx(100)


def test_sweep_is_deterministic(tmp_path):
    cfg = write(tmp_path, SWEEP)
    assert run("sweep", "--config", cfg, "--out", tmp_path / "a", "--workers", 2) == EXIT_OK
    assert run("sweep", "--config", cfg, "--out", tmp_path / "a", "--workers", 1) == EXIT_OK
    first = (tmp_path / "a" / "sweep.csv").read_bytes()
    assert run("sweep", "--config", cfg, "--out", tmp_path / "b", "--no-cache") == EXIT_OK
    assert (tmp_path / "b" / "sweep.csv").read_bytes() == first
    assert not (tmp_path / "b" / ".cache").exists()
    data = json.loads((tmp_path / "a" / "sweep.json").read_text())
    assert len(data["rows"]) == 4 and data["columns"][0] == "n"


def test_cache_equals_recompute(tmp_path):
    cfg = parse_config(SWEEP)
    point = expand_points(cfg)[0]
    fresh = json.loads(json.dumps(run_point(cfg, point)))
    cache = ResultCache(tmp_path, cfg)
    cache.put(point, fresh)
    again = run_point(cfg, point)
    got = cache.get(point)
    for k in ("fidelity", "error", "residual"):
        assert abs(got[k] - again[k]) <= 1e-12
    other = parse_config(SWEEP.replace("n: [2, 3]", "n: [2]"))
    assert ResultCache(tmp_path, other).get(point) is None


def test_steady_fidelity_bound(tmp_path, capsys):
    cfg = write(tmp_path, """\
        scheme: qutrit_wave
        n: 2
        rates: {kappa_u: 10, kappa_st: 1.0e4, kappa_c: 1.0e4, kappa_p: 0}
        """)
    assert run("steady", "--config", cfg, "--out", tmp_path) == EXIT_OK
    data = json.loads((tmp_path / "steady.json").read_text())
    row = data["rows"][0]
    assert row["fidelity"] >= 1 - 5 * 2 * 1e-3
    assert "est_predicted_B" in data["columns"]


def test_steady_rejects_sweep_axes(tmp_path, capsys):
    assert run("steady", "--config", write(tmp_path, SWEEP)) == EXIT_CONFIG


def test_all_points_failing(tmp_path, capsys):
    cfg = write(tmp_path, "scheme: ltv\nn: 3\nrates: {kappa_c: 1}\nerror_model: qubit_flips\n")
    assert run("steady", "--config", cfg, "--out", tmp_path) == EXIT_FAILED
    assert "KernelDegenerate" in (tmp_path / "steady.csv").read_text()


def test_partial_failure_exits_zero(tmp_path, capsys):
    cfg = write(tmp_path, """\
        scheme: qutrit_wave
        n: 2
        rates: {kappa_u: {values: [0, 10]}, kappa_st: 1000, kappa_c: 1000, kappa_p: 1}
        """)
    assert run("sweep", "--config", cfg, "--out", tmp_path) == EXIT_OK
    assert "1/2 points solved" in capsys.readouterr().out


def test_markov_prints_exact_denominator(tmp_path, capsys):
    cfg = write(tmp_path, """\
        scheme: qutrit_wave
        n: 4
        rates: {kappa_u: 10, kappa_st: 1000, kappa_c: 1000, kappa_p: 0.1}
        markov: [lattice, chains]
        """)
    assert run("markov", "--config", cfg, "--out", tmp_path) == EXIT_OK
    out = capsys.readouterr().out
    assert "lattice_denominator = 5+7/8" in out
    assert mixed_fraction(__import__("fractions").Fraction(47, 8)) == "5+7/8"
    assert list(tmp_path.glob("*.tsv"))


def test_markov_state_cond(tmp_path, capsys):
    cfg = write(tmp_path, """\
        scheme: state_cond
        n: 3
        rates: {kappa_u: 10, kappa_t: 10, kappa_d: 300, kappa_r: 1.0e4, kappa_st: 1.0e4,
                kappa_c: 300, kappa_p: 0.1}
        markov: [estimates, chains, clock, frontier]
        """)
    assert run("markov", "--config", cfg, "--out", tmp_path, "--seed", 3) == EXIT_OK
    rows = json.loads((tmp_path / "markov.json").read_text())["rows"]
    by_name = {r["quantity"]: r for r in rows}
    assert by_name["state_cond_p_ghz"]["abs_diff"] < 1e-9
    assert by_name["frontier_ok"]["value"] == 1
    assert by_name["off_principal"]["value"] <= by_name["off_principal"]["reference"]


def test_tune(tmp_path, capsys):
    cfg = write(tmp_path, """\
        scheme: qutrit_wave
        n: 3
        rates: {kappa_st: 1.0e4, kappa_c: 1.0e4, kappa_p: 1}
        tune:
          objective: markov
          free:
            kappa_u: {log: [10, 1000], points: 13}
        """)
    assert run("tune", "--config", cfg, "--out", tmp_path, "--workers", 1) == EXIT_OK
    summary = json.loads((tmp_path / "tune.json").read_text())["rows"][0]
    assert 50 <= summary["best_kappa_u"] <= 200
    assert (tmp_path / "tune_surface_n3.csv").read_text().count("\n") == 14


def test_tune_needs_section(tmp_path, capsys):
    cfg = write(tmp_path, "scheme: qutrit_wave\nn: 3\nrates: {kappa_u: 1, kappa_st: 10, kappa_c: 10}\n")
    assert run("tune", "--config", cfg) == EXIT_CONFIG


def test_flag_validation(capsys):
    assert run("steady") == EXIT_CONFIG
    assert run("validate", "--seed", -1) == EXIT_CONFIG
    assert run("validate", "--workers", 0) == EXIT_CONFIG
    with pytest.raises(SystemExit):
        run("frobnicate")


def test_validate(capsys):
    assert run("validate") == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert out[-1].startswith("22/22")
    assert not any(line.startswith("FAIL") for line in out)


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "ghzres", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and __version__ in res.stdout

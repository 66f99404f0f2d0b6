import csv
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from novipeak.cli import main
from novipeak.errors import ParseError, ValidationError
from novipeak.field import PeakonConfig, h1_distance, peakon, train
from novipeak.harness import (EXIT_AUDIT_FAILURE, EXIT_NUMERIC, EXIT_PASS, EXIT_USAGE, Audit,
                              measure_perturbation, parse_config, perturb, random_config, run,
                              make_rng)

MINIMAL_ODE = """
kind = ode-sim
[initial]
q = [0.0]
p = [1.0]
[ode]
t_end = 2
"""


def test_minimal_ode_document_gets_defaults():
    sc = parse_config(MINIMAL_ODE)
    assert sc.kind == "ode-sim" and sc.seed == 0 and sc.out == "run"
    ode = sc.block("ode")
    assert ode.t_end == 2.0 and ode.rtol == 1e-10 and ode.sample_dt == 0.1
    assert sc.block("perturb").magnitude == 0.0
    assert sc.initial == peakon(1.0)


def test_values_round_trip():
    sc = parse_config(MINIMAL_ODE.replace("t_end = 2", "t_end = 2\nrtol = 1e-10\natol=3e-13"))
    assert sc.block("ode").rtol == 1e-10 and sc.block("ode").atol == 3e-13


def test_pde_block_maps_to_settings():
    sc = parse_config("kind = pde-sim\n[initial]\nq=[0]\np=[1]\n[pde]\nt_end=1\nN=1024\n"
                      "scheme = weak\ncomoving = False\nviscosity = None\n")
    s = sc.block("pde").settings()
    assert s.N == 1024 and s.scheme == "weak" and not s.comoving and s.viscosity is None


def test_subcommand_kind_fills_in_and_must_agree():
    text = "[initial]\nq=[0, 5]\np=[1, 2]\n"
    assert parse_config(text, kind="spectrum").kind == "spectrum"
    with pytest.raises(ValidationError):
        parse_config("kind = spectrum\n" + text, kind="asymptotics")
    with pytest.raises(ValidationError) as info:
        parse_config(text)
    assert info.value.field == "kind"


def test_unordered_q_for_spectrum():
    with pytest.raises(ValidationError) as info:
        parse_config("kind = spectrum\n[initial]\nq = [1, 0]\np = [1, 1]\n")
    assert info.value.field == "initial.q" and "q must be ascending" in str(info.value)


@pytest.mark.parametrize("text, line", [
    ("kind = ode-sim\n[initial\nq=[0]", 2),
    ("kind = ode-sim\n[nosuch]\n", 2),
    ("kind = ode-sim\njust words\n", 2),
    ("kind = ode-sim\n[initial]\nq = [0]\nq = [1]\n", 4),
    ("kind = ode-sim\n[ode]\n[ode]\n", 3),
    ("kind = ode-sim\n[ode]\nt_end =\n", 3),
    ("kind = ode-sim\n[ode]\n2x = 1\n", 3),
])
def test_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(ParseError) as info:
        parse_config(text)
    assert info.value.line == line


@pytest.mark.parametrize("extra, field", [
    ("[ode]\nt_end = 1\nbogus = 3\n", "ode.bogus"),
    ("[ode]\nt_end = 'soon'\n", "ode.t_end"),
    ("[ode]\nt_end = 1\nrtol = -1\n", "ode.rtol"),
    ("[ode]\nt_end = 1\nrtol = 1e-20\n", "ode"),
    ("[ode]\nrtol = 1e-9\n", "ode.t_end"),
    ("[ode]\nt_end = 1\n[spectrum]\ntol = 1\n", "spectrum"),
    ("[ode]\nt_end = 1\n[perturb]\nsatellites = 1.5\n", "perturb.satellites"),
    ("[ode]\nt_end = 1\n[perturb]\nmagnitude = -1\n", "perturb.magnitude"),
])
def test_validation_errors_name_the_field(extra, field):
    text = "kind = ode-sim\n[initial]\nq=[0]\np=[1]\n" + extra
    with pytest.raises(ValidationError) as info:
        parse_config(text)
    assert info.value.field == field


@pytest.mark.parametrize("initial, field", [
    ("", "initial"), ("[initial]\nq = [0]\n", "initial.p"),
    ("[initial]\nq = [0, 1]\np = [1]\n", "initial.p"),
])
def test_initial_block_errors(initial, field):
    with pytest.raises(ValidationError) as info:
        parse_config("kind = ode-sim\n" + initial + "[ode]\nt_end = 1\n")
    assert info.value.field == field


def test_top_level_keys_and_comments():
    sc = parse_config("# scenario\nkind = lemma-audit\nseed = 12\nout = 'x/y'\n; note\n")
    assert sc.seed == 12 and sc.out == "x/y" and sc.initial == peakon(1.0)
    with pytest.raises(ValidationError):
        parse_config("kind = lemma-audit\nseed = -1\n")
    with pytest.raises(ValidationError):
        parse_config("kind = lemma-audit\ncolour = 3\n")
    with pytest.raises(ValidationError):
        parse_config("kind = nonsense\n")


def test_perturb_zero_and_determinism():
    cfg = PeakonConfig([0.0, 10.0], [1.0, 1.5])
    assert perturb(cfg, 0.0, 5) is cfg
    a, b = perturb(cfg, 1e-2, 5, satellites=2), perturb(cfg, 1e-2, 5, satellites=2)
    assert a == b and a.n == 4
    assert perturb(cfg, 1e-2, 6) != perturb(cfg, 1e-2, 5)
    assert np.all(np.diff(a.q) > 0)
    assert a.q[:2].max() < -1.0  # satellites sit behind the leftmost peak
    with pytest.raises(ValueError):
        perturb(cfg, -1.0, 0)


@pytest.mark.parametrize("seed", range(40))
def test_perturbation_of_unit_peakon_has_expected_size(seed):
    base = peakon(1.0)
    pert = perturb(base, 1e-3, seed)
    size = measure_perturbation(base, pert)
    assert 1e-4 <= size.h1 <= 1e-2
    # triangle inequality around the shifted unit profile; its H1 norm is sqrt(2) and
    # the H1 distance of a unit shift by d is sqrt(4 - 4 exp(-|d|))
    d, a = abs(pert.q[0]), pert.p[0]
    shift = a * np.sqrt(4.0 - 4.0 * np.exp(-d))
    scale = abs(a - 1.0) * np.sqrt(2.0)
    assert abs(shift - scale) - 1e-12 <= size.h1 <= shift + scale + 1e-12
    assert size.h1 == pytest.approx(h1_distance(pert, base))
    assert size.eps == pytest.approx(size.hypothesis ** 0.25)


@given(st.integers(0, 2 ** 64 - 1), st.floats(1e-6, 1e-2), st.integers(0, 3))
def test_perturbation_scales_with_magnitude(seed, mag, sats):
    base = train([1.0, 2.0], [0.0, 20.0])
    size = measure_perturbation(base, perturb(base, mag, seed, sats))
    # with every normal draw below 6 in size: amplitudes add <= 6 mag p sqrt(2) each,
    # shifts <= 2 p sqrt(6/4) mag each, satellites <= 6 mag sqrt(2) each
    p = base.p
    tally = mag * (np.sum(6 * np.sqrt(2) * p + 2 * np.sqrt(1.5) * p) + sats * 6 * np.sqrt(2))
    assert size.h1 <= tally


def test_random_config_shapes():
    rng = make_rng(0)
    cfg = random_config(rng, 3, positive=True, ordered=True)
    assert cfg.is_ordered_positive()
    assert 1 <= random_config(rng).n <= 4


def test_audit_record():
    a = Audit("x", 1.0, 2.0)
    assert a.passed and a.margin == 1.0 and a.as_dict()["direction"] == "<="
    b = Audit("y", 1.0, 2.0, lower=True)
    assert not b.passed and b.margin == -1.0
    assert not Audit("z", float("nan"), 1.0).passed


def test_ode_run_writes_csv_report_and_manifest(tmp_path):
    sc = parse_config(MINIMAL_ODE + "\n").with_overrides(out=str(tmp_path / "a" / "ode"))
    res = run(sc)
    assert res.exit_code == EXIT_PASS
    with open(res.paths["csv"]) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "q1", "p1", "E", "F", "driftE", "driftF"]
    data = np.array(rows[1:], dtype=float)
    np.testing.assert_allclose(data[:, 1], data[:, 0], rtol=1e-12, atol=1e-15)  # q = t
    assert np.all(data[:, 5:] == 0.0)
    # 17 significant digits round-trip exactly
    assert float(rows[2][0]) == 0.1 and rows[2][0] == "0.10000000000000001"
    report = json.loads(open(res.paths["report"]).read())
    assert report["status"] == "pass" and {a["name"] for a in report["audits"]} == {
        "energy_drift", "f_drift"}
    manifest = json.loads(open(res.paths["manifest"]).read())
    assert manifest["seed"] == 0 and manifest["rng"] == "numpy PCG64"
    assert set(manifest["versions"]) >= {"numpy", "scipy", "mpmath", "python", "package"}
    assert manifest["config"]["settings"]["ode"]["t_end"] == 2.0
    assert "audits[energy_drift].measured" in manifest["report_fields"]
    assert "results.E0" in manifest["report_fields"]


def _flatten_numbers(obj, prefix=""):
    if isinstance(obj, dict):
        for k, v in obj.items():
            yield from _flatten_numbers(v, f"{prefix}.{k}" if prefix else k)
    elif isinstance(obj, (int, float)) and not isinstance(obj, bool):
        yield prefix


@pytest.mark.parametrize("text", [
    "kind = asymptotics\n[initial]\nq=[0, 5]\np=[1, 2]\n[asymptotics]\nhorizon = 150\n",
    "kind = spectrum\n[initial]\nq=[0, 5]\np=[1, 2]\n",
    "kind = stability-report\nseed = 2\n[initial]\nq=[0, 20]\np=[1, 1.4142135623730951]\n"
    "[perturb]\nmagnitude = 1e-3\n[stability]\nt_end = 10\n",
])
def test_every_numeric_report_field_is_in_the_manifest(tmp_path, text):
    res = run(parse_config(text).with_overrides(out=str(tmp_path / "r")))
    assert res.exit_code == EXIT_PASS
    manifest = json.loads(open(res.paths["manifest"]).read())
    report = res.report
    listed = set(manifest["report_fields"])
    for key in _flatten_numbers(report.get("results", {}), "results"):
        assert key in listed
    for a in report["audits"]:
        for f in ("measured", "threshold", "margin"):
            assert f"audits[{a['name']}].{f}" in listed


def test_asymptotics_report_contents(tmp_path):
    text = "kind = asymptotics\n[initial]\nq=[0, 5]\np=[1, 2]\n"
    res = run(parse_config(text).with_overrides(out=str(tmp_path / "asym")))
    r = res.report["results"]
    assert len(r["lambdas"]) == 2 and r["max_deviation"] < 1e-3
    assert "dev_p_forward" in r and "dev_p_backward" in r


def test_identical_inputs_give_identical_files(tmp_path):
    text = ("kind = stability-report\nseed = 9\n[initial]\nq=[0]\np=[1]\n"
            "[perturb]\nmagnitude = 1e-3\nsatellites = 1\n[stability]\nt_end = 5\n")
    outs = []
    for k in range(2):
        res = run(parse_config(text).with_overrides(out=str(tmp_path / f"r{k}")))
        outs.append((open(res.paths["csv"]).read(), json.dumps(res.report, sort_keys=True)))
    assert outs[0] == outs[1]


def test_numeric_failure_is_recorded(tmp_path):
    text = "kind = ode-sim\n[initial]\nq=[-0.5, 0.5]\np=[1, -1]\n[ode]\nt_end = 10\n"
    res = run(parse_config(text).with_overrides(out=str(tmp_path / "c")))
    assert res.exit_code == EXIT_NUMERIC
    rep = json.loads(open(res.paths["report"]).read())
    assert rep["status"] == "error" and rep["error"]["type"] == "CollisionDetected"
    assert rep["error"]["t"] > 0


def test_audit_failure_exit_status(tmp_path):
    text = MINIMAL_ODE.replace("t_end = 2", "t_end = 2\ndrift_tol_E = 1e-300") \
        .replace("p = [1.0]", "p = [1.0, 0.5]").replace("q = [0.0]", "q = [0.0, 3.0]")
    res = run(parse_config(text).with_overrides(out=str(tmp_path / "f")))
    assert res.exit_code == EXIT_AUDIT_FAILURE and res.report["status"] == "fail"


def test_pde_run(tmp_path):
    text = ("kind = pde-sim\n[initial]\nq=[0]\np=[1]\n[pde]\nt_end = 1\nN = 1024\n"
            "half_width = 40\n")
    res = run(parse_config(text).with_overrides(out=str(tmp_path / "p")))
    assert res.exit_code == EXIT_PASS
    header = open(res.paths["csv"]).readline().strip().split(",")
    assert header == ["t", "crest", "height", "E", "F", "driftE", "driftF", "max_slope"]
    assert {a["name"] for a in res.audits} == {"energy_drift", "crest_transport"}


def test_lemma_audit_run(tmp_path):
    text = "kind = lemma-audit\nseed = 4\n[audit]\nsamples = 20\nbound_samples = 10\n"
    res = run(parse_config(text).with_overrides(out=str(tmp_path / "l")))
    names = {a["name"] for a in res.audits}
    assert res.exit_code == EXIT_PASS, res.audits
    assert {"distance_identity", "f_upper_bound", "max_height", "ef_difference_E",
            "almost_monotonicity", "train_identity_L20",
            "train_identity_L200_absolute"} <= names


def test_cli_exit_codes(tmp_path, capsys):
    cfg = tmp_path / "s.cfg"
    cfg.write_text("[initial]\nq=[0, 5]\np=[1, 2]\n")
    out = str(tmp_path / "o" / "s")
    assert main(["spectrum", "--config", str(cfg), "--out", out, "--seed", "3"]) == EXIT_PASS
    assert json.loads(open(out + ".manifest.json").read())["seed"] == 3
    assert "PASS eigen_residual" in capsys.readouterr().out
    assert main(["spectrum", "--config", str(cfg), "--out", out, "--quiet"]) == EXIT_PASS
    assert capsys.readouterr().out == ""
    assert main(["ode-sim", "--config", str(cfg), "--out", out]) == EXIT_USAGE
    assert main(["spectrum", "--config", str(tmp_path / "missing.cfg")]) == EXIT_USAGE
    assert main(["teleport", "--config", str(cfg)]) == EXIT_USAGE
    bad = tmp_path / "bad.cfg"
    bad.write_text("[initial]\nq=[1, 0]\np=[1, 1]\n")
    assert main(["spectrum", "--config", str(bad)]) == EXIT_USAGE
    err = capsys.readouterr().err
    assert json.loads(err.strip().splitlines()[-1])["error"]["field"] == "initial.q"

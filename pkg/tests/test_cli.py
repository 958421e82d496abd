import json
from pathlib import Path

import numpy as np
import pytest

from osclab.cli import (
    ExperimentConfig,
    format_config,
    main,
    parse_config_text,
    render_json,
    replay,
    run,
)
from osclab.errors import UsageError, ValidationError
from osclab.measure import generate_measure, load_measure
from osclab.profiles import evaluate_profile, load_function, resolve_function, save_function

FIXTURES = Path(__file__).parent / "fixtures" / "replay"
CONFIGS = sorted(FIXTURES.glob("*.cfg"))


def _golden(cfg):
    hits = sorted(FIXTURES.glob(cfg.stem + ".golden.*"))
    assert len(hits) == 1, cfg
    return hits[0]


@pytest.mark.parametrize("cfg", CONFIGS, ids=lambda p: p.stem)
def test_replay_matches_golden(cfg):
    text, match, _ = replay(cfg, _golden(cfg))
    assert match, f"{cfg.name} drifted from its golden report"


def test_replay_shipped_set_is_nonempty():
    assert len(CONFIGS) >= 8


def test_replay_cli_exit_codes(capsys):
    assert main(["replay", str(FIXTURES / "lip_constant.cfg"),
                 "--check", str(FIXTURES / "lip_constant.golden.json")]) == 0
    assert main(["replay", str(FIXTURES / "kernel_defective.cfg")]) == 1
    # a golden from another experiment must not match
    assert main(["replay", str(FIXTURES / "lip_constant.cfg"),
                 "--check", str(FIXTURES / "rbmo_line5.golden.json")]) == 1
    capsys.readouterr()


def test_lip_constant_all_zero(capsys):
    code = main(["lip", "grid:n=11", "constant:c=2", "--alpha", "0.5"])
    rep = json.loads(capsys.readouterr().out)
    assert code == 0 and rep["status"] == "PASS"
    res = rep["result"]
    assert res["c1"]["value"] == 0 and res["c2"]["value"] == 0
    assert all(v["value"] == 0 for v in res["cp"].values())
    assert rep["schema"] == "osclab.report/1"
    assert res["family"] == "exhaustive" and res["scale_range"] == [0.1, 1.0]


def test_kernel_check_defective_fails(capsys):
    code = main(["kernel-check", "grid:n=50", "--kernel", "defective", "--n", "1"])
    rep = json.loads(capsys.readouterr().out)
    assert code == 1 and rep["status"] == "FAIL"
    assert not rep["result"]["size"]["passed"]


def test_usage_errors_name_field(capsys):
    assert main(["lip", "grid:n=11", "linear", "--alpha", "1.5"]) == 2
    assert "[alpha]" in capsys.readouterr().err
    assert main(["lip", "grid:n=11", "linear", "--alpha", "0.5", "--family", "bogus"]) == 2
    assert "[family]" in capsys.readouterr().err
    assert main(["nosuch"]) == 2
    assert main(["lip", "nosuchgen:n=3", "linear", "--alpha", "0.5"]) == 2
    capsys.readouterr()


def test_config_validation_fields():
    with pytest.raises(UsageError) as info:
        run(ExperimentConfig(command="tail", measure="grid:n=5", center=0, radius=[1.0],
                             n=1, epsilon=1))
    assert info.value.field == "alpha"
    with pytest.raises(UsageError) as info:
        run(ExperimentConfig(command="doubling", measure="grid:n=5", beta=3, r0=1,
                             halvings=2))
    assert info.value.field == "center"


def test_config_text_roundtrip():
    cfg = ExperimentConfig(command="bound", measure="circle:n=16",
                           functions=["cos:k=1", "power:e=1.5,a=0"], kernel="conjugate",
                           alpha=0.5, radius=[0.25, 0.5])
    back = parse_config_text(format_config(cfg))
    assert back == cfg


def test_config_text_errors():
    with pytest.raises(UsageError) as info:
        parse_config_text("command = lip\nbogus = 3\n")
    assert info.value.field == "bogus"
    with pytest.raises(UsageError):
        parse_config_text("alpha = 0.5\n")
    with pytest.raises(UsageError) as info:
        parse_config_text("command = lip\nalpha = high\n")
    assert info.value.field == "alpha"


def test_run_is_deterministic():
    cfg = ExperimentConfig(command="lip", measure="random:n=20,d=2,seed=1",
                           functions=["random"], alpha=0.5, family="sampled:50", seed=4)
    a = render_json(run(cfg).report)
    b = render_json(run(cfg).report)
    assert a == b
    assert json.loads(a)["result"]["family"] == "sampled:50:4"


def test_gen_and_file_inputs(tmp_path, capsys):
    out = tmp_path / "dust.txt"
    assert main(["gen", "dust:level=2", "-o", str(out)]) == 0
    m = load_measure(out)
    assert m.size == 16
    fpath = tmp_path / "f.txt"
    save_function(m.points[:, 0], fpath)
    np.testing.assert_array_equal(load_function(fpath, m), m.points[:, 0])
    capsys.readouterr()
    assert main(["lip", str(out), str(fpath), "--alpha", "1", "--csv"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "constant,osc,pair,value"
    assert len(lines) == 1 + 5


def test_doubling_csv(capsys):
    assert main(["doubling", "grid:n=101", "--beta", "4", "--r0", "0.25",
                 "--halvings", "2", "--all"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "center,radius,mass_ratio,doubling"
    assert len(lines) == 1 + 101 * 3
    assert all(ln.endswith("True") for ln in lines[1:])


def test_output_file(tmp_path, capsys):
    out = tmp_path / "rep.json"
    assert main(["tail", "grid:n=101", "--center", "50", "--r", "0.1", "--n", "1",
                 "--eps", "1", "--alpha", "0.5", "-o", str(out)]) == 0
    assert capsys.readouterr().out == ""
    rep = json.loads(out.read_text())
    assert rep["result"]["ladder"][0]["radius"] == 0.1


# ------------------------------------------------------------- profiles

def test_profiles():
    c = generate_measure("circle:n=8")
    np.testing.assert_allclose(evaluate_profile("cos:k=2", c), np.cos(2 * np.arctan2(
        c.points[:, 1], c.points[:, 0])))
    np.testing.assert_array_equal(evaluate_profile("harmonic:k=2", c),
                                  evaluate_profile("cos:k=2", c))
    g = generate_measure("grid:n=5")
    np.testing.assert_allclose(evaluate_profile("power:e=2", g), g.points[:, 0] ** 2)
    np.testing.assert_allclose(evaluate_profile("linear:a=3", g), 3 * g.points[:, 0])
    np.testing.assert_allclose(evaluate_profile("sin:k=1", g),
                               np.sin(2 * np.pi * g.points[:, 0]), atol=1e-15)
    with pytest.raises(ValidationError):
        evaluate_profile("cos:q=1", c)
    with pytest.raises(ValidationError):
        evaluate_profile("nosuch", c)


def test_random_profile_is_lipschitz_and_seeded():
    m = generate_measure("random:n=50,d=2,seed=2")
    a = evaluate_profile("random:seed=3", m)
    assert np.array_equal(a, evaluate_profile("random", m, seed=3))
    assert not np.array_equal(a, evaluate_profile("random:seed=4", m))
    d = m.distance_matrix
    diff = np.abs(a[:, None] - a[None, :])
    assert np.all(diff <= d + 1e-12)


def test_function_file_length_checked(tmp_path):
    m = generate_measure("grid:n=5")
    p = tmp_path / "f.txt"
    save_function([1.0, 2.0], p)
    with pytest.raises(ValidationError):
        resolve_function(str(p), m)

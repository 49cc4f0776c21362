import pytest

from ilmc_lab.cli import main
from ilmc_lab.errors import ConfigurationError
from ilmc_lab.experiments import (ExperimentConfig, build_config,
                                  load_config_file, run_crossval,
                                  run_ergodicity, run_stability_demo,
                                  run_w1_stationary_rate, stationary_w1_curve)
from ilmc_lab.potentials import make_gaussian


def test_build_config_from_file_and_overrides(tmp_path):
    cfg_file = tmp_path / "exp.txt"
    cfg_file.write_text(
        "# comment line\n"
        "potential_id = ginzburg_landau\n"
        "potential_params = a=1,b=1\n"
        "h_list = 0.2, 0.1\n"
        "replicas = 500\n"
        "seed = 3\n")
    entries = load_config_file(str(cfg_file))
    cfg = build_config("ergodicity", entries, overrides=["replicas=900", "z0=1.5"])
    assert cfg.potential_id == "ginzburg_landau"
    assert cfg.potential_params == {"a": 1.0, "b": 1.0}
    assert cfg.h_list == [0.2, 0.1]
    assert cfg.replicas == 900
    assert cfg.z0 == 1.5
    assert cfg.seed == 3


def test_build_config_rejects_unknown_keys():
    with pytest.raises(ConfigurationError):
        build_config("ergodicity", {"pressure": "1"})
    with pytest.raises(ConfigurationError):
        build_config("ergodicity", {}, overrides=["notkeyvalue"])


def test_config_validates_admissibility(tmp_path):
    cfg = ExperimentConfig(name="ergodicity", potential_id="ginzburg_landau",
                           h_list=[0.5], replicas=10,
                           output_path=str(tmp_path / "r.csv"))
    from ilmc_lab.errors import AdmissibilityError
    with pytest.raises(AdmissibilityError):
        run_ergodicity(cfg)


def test_experiments_reject_degenerate_configs(tmp_path):
    from ilmc_lab.experiments import run_entropy_rate
    with pytest.raises(ConfigurationError):
        run_entropy_rate(ExperimentConfig(name="entropy_rate", h_list=[],
                                          output_path=str(tmp_path / "a.csv")))
    with pytest.raises(ConfigurationError):
        run_ergodicity(ExperimentConfig(name="ergodicity", h_list=[0.05],
                                        replicas=0,
                                        output_path=str(tmp_path / "b.csv")))


def test_stability_demo_passes_and_is_deterministic(tmp_path):
    out1 = tmp_path / "stab1.csv"
    out2 = tmp_path / "stab2.csv"
    base = dict(potential_id="ginzburg_landau",
                potential_params={"a": 1.0, "b": 0.0},
                h_list=[0.5], x0=10.0, steps=2000, seed=4)
    r1 = run_stability_demo(ExperimentConfig(name="stability_demo",
                                             output_path=str(out1), **base))
    r2 = run_stability_demo(ExperimentConfig(name="stability_demo",
                                             output_path=str(out2), **base))
    assert r1.passed
    assert r1.report.lmc_blowup_step is not None and r1.report.lmc_blowup_step <= 50
    assert r1.report.ilmc_max_abs <= 5.0
    assert out1.read_bytes().replace(b"stab1", b"stab2") == out2.read_bytes()


def test_csv_header_carries_resolved_config(tmp_path):
    out = tmp_path / "stab.csv"
    cfg = ExperimentConfig(name="stability_demo", potential_id="ginzburg_landau",
                           potential_params={"a": 1.0, "b": 0.0},
                           h_list=[0.5], x0=10.0, steps=500, seed=4,
                           output_path=str(out))
    run_stability_demo(cfg)
    text = out.read_text()
    assert "# experiment = stability_demo" in text
    assert "# seed = 4" in text
    assert "# h_list = 0.5" in text


def test_ergodicity_small_run(tmp_path):
    cfg = ExperimentConfig(name="ergodicity", potential_id="ginzburg_landau",
                           h_list=[0.05], replicas=1500, seed=2, horizon=6.0,
                           output_path=str(tmp_path / "erg.csv"))
    res = run_ergodicity(cfg)
    assert res.passed, res.message
    text = (tmp_path / "erg.csv").read_text()
    assert "contraction_rate" in text and "mean_f" in text


def test_crossval_small_run(tmp_path):
    cfg = ExperimentConfig(name="crossval", potential_id="ginzburg_landau",
                           h_list=[0.1], replicas=20_000, seed=6, x0=1.0,
                           output_path=str(tmp_path / "cv.csv"))
    res = run_crossval(cfg)
    assert res.passed, res.message
    gaps = [r.value for r in res.report.rows]
    assert gaps[-1] <= 0.01


def test_w1_gaussian_chain_route_tracks_analytic_rate():
    import numpy as np
    ga = make_gaussian(1, 1.0)
    rep = stationary_w1_curve(ga, [0.2, 0.1, 0.05], replicas=5000, seed=11)
    fit = rep.slope_fits["w1_stationary"]
    assert 0.7 <= fit.slope <= 1.3
    for row in rep.rows:
        analytic = np.sqrt(2 / np.pi) * abs(np.sqrt(2 / (2 + row.h)) - 1)
        assert row.value == pytest.approx(analytic, rel=0.35)


def test_w1_requires_three_h_for_fit(tmp_path):
    ga = make_gaussian(1, 1.0)
    rep = stationary_w1_curve(ga, [0.2], replicas=2000, seed=1, n_keep=1)
    assert rep.slope_fits == {}
    assert len(rep.rows) == 1
    cfg = ExperimentConfig(name="w1_stationary_rate", potential_id="gaussian",
                           h_list=[0.2], replicas=2000, seed=1, n_keep=1,
                           output_path=str(tmp_path / "w1.csv"))
    res = run_w1_stationary_rate(cfg)
    assert not res.passed
    assert "refused" in res.message


def test_cli_exit_codes(tmp_path):
    out = tmp_path / "s.csv"
    rc = main(["sample", "--potential", "gaussian", "--params", "kappa=1",
               "--h", "0.1", "--steps", "5", "--replicas", "1",
               "--seed", "1", "--out", str(out)])
    assert rc == 0
    assert out.read_text().startswith("# potential = gaussian")

    rc = main(["sample", "--potential", "unobtainium", "--h", "0.1",
               "--steps", "5", "--out", str(tmp_path / "x.csv")])
    assert rc == 2

    rc = main(["couple", "--potential", "ginzburg_landau", "--h", "0.5",
               "--steps", "5", "--out", str(tmp_path / "y.csv")])
    assert rc == 2  # inadmissible step size

    cfg = tmp_path / "cfg.txt"
    cfg.write_text("potential_id = ginzburg_landau\npotential_params = a=1,b=0\n"
                   "h_list = 0.5\nsteps = 2000\nx0 = 10\n"
                   f"output_path = {tmp_path / 'stab.csv'}\n")
    assert main(["stability_demo", "--config", str(cfg)]) == 0
    assert main(["stability_demo", "--config", str(cfg), "steps=bad"]) == 2


def test_cli_sample_two_dimensional_chain(tmp_path):
    out = tmp_path / "s2d.csv"
    rc = main(["sample", "--potential", "ginzburg_landau",
               "--params", "dim=2,a=1,b=1", "--h", "0.05", "--steps", "20",
               "--replicas", "1", "--seed", "5", "--x0", "0.5,-0.5",
               "--out", str(out)])
    assert rc == 0
    lines = out.read_text().splitlines()
    header = next(l for l in lines if l.startswith("replica,"))
    assert header == "replica,step,coord0,coord1"
    first = next(l for l in lines if l.startswith("0,0,"))
    assert first == "0,0,0.5,-0.5"


def test_cli_fp_runs_and_dumps_densities(tmp_path):
    out = tmp_path / "fp.csv"
    rc = main(["fp", "--potential", "gaussian", "--params", "kappa=1",
               "--h-list", "0.2,0.1", "--cells", "200", "--domain-l", "6",
               "--t-end", "0.5", "--dump-densities", "--out", str(out)])
    assert rc == 0
    assert out.exists()
    dumps = sorted(tmp_path.glob("fp_h*.csv"))
    assert len(dumps) == 6  # 2 h values x 3 checkpoints
    header = dumps[0].read_text().splitlines()[0]
    assert header == "x,rho,rho_h"

import json
from pathlib import Path

import numpy as np
import pytest

from avgrec.artifacts import (
    RunArtifacts,
    emit_field_csv,
    emit_plot_script,
    emit_trajectory_csv,
    read_field_csv,
    read_trajectory_csv,
)
from avgrec.cli import (
    ExperimentConfig,
    build_model,
    initial_profile,
    main,
    parse_config,
    run_experiment,
    serialize_config,
)
from avgrec.errors import ConfigurationError
from avgrec.evolution import TimeGrid
from avgrec.solver import Trajectory

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

def fast_config(tmp_path, **extra):
    """Small, quick experiment config; extra[section] = ["key = value", ...]
    entries are merged into the base document."""
    sections = {
        "model": ["kind = chemotaxis"],
        "grid": ["n = 8"],
        "time": ["horizon = 0.25", "steps = 16"],
        "data": ["amplitude = 0.005"],
        "run": [f"out = {tmp_path / 'run'}"],
    }
    for section, lines in extra.items():
        sections.setdefault(section, []).extend(lines)
    return "\n".join(f"[{name}]\n" + "\n".join(lines) for name, lines in sections.items()) + "\n"


class TestParseConfig:
    @pytest.mark.parametrize("name", sorted(p.name for p in CONFIG_DIR.glob("*.ini")))
    def test_shipped_configs_parse(self, name):
        cfg = parse_config((CONFIG_DIR / name).read_text())
        assert isinstance(cfg, ExperimentConfig)

    @pytest.mark.parametrize("name", sorted(p.name for p in CONFIG_DIR.glob("*.ini")))
    def test_serialize_round_trip_identity(self, name):
        cfg = parse_config((CONFIG_DIR / name).read_text())
        assert parse_config(serialize_config(cfg)) == cfg

    def test_unknown_key_named(self):
        with pytest.raises(ConfigurationError, match=r"\[grid\] resolution"):
            parse_config("[grid]\nresolution = 4\n")

    def test_unknown_section_named(self):
        with pytest.raises(ConfigurationError, match=r"\[mesh\]"):
            parse_config("[mesh]\nn = 4\n")

    def test_unparsable_value_named(self):
        with pytest.raises(ConfigurationError, match=r"\[time\] steps"):
            parse_config("[time]\nsteps = many\n")

    def test_ramp_weight_rejected_for_time_average(self):
        text = "[condition]\nvariant = time_average\nweight = ramp\n"
        with pytest.raises(ConfigurationError, match="w\\(0\\)"):
            parse_config(text)

    def test_ramp_weight_accepted_for_initial_plus_average(self):
        text = "[condition]\nvariant = initial_plus_average\nweight = ramp\n"
        cfg = parse_config(text)
        assert cfg.weight == "ramp"

    def test_constant_weight_accepted_for_time_average(self):
        cfg = parse_config("[condition]\nvariant = time_average\nweight = constant\n")
        assert cfg.variant == "time_average"

    def test_partial_exponent_override_rejected(self):
        with pytest.raises(ConfigurationError, match="full book"):
            parse_config("[exponents]\nalpha = 0.2\n")

    def test_invalid_exponent_override_rejected(self, tmp_path):
        text = fast_config(
            tmp_path,
            exponents=[
                "beta = 0.5", "alpha = 0.2", "alpha0 = 0.3", "gamma = 0.5",
                "xi = 0.4", "mu = 0.3", "rho = 0.1", "ell = 1.0",
            ],
        )
        cfg = parse_config(text)
        with pytest.raises(ConfigurationError, match="beta"):
            build_model(cfg)


class TestProfiles:
    def test_cosine_profile(self):
        cfg = parse_config("[data]\nu0_profile = cosine\namplitude = 2.0\n")
        model = build_model(cfg)
        profile = initial_profile(cfg, model.base.grid)
        expected = 2.0 * np.cos(np.pi * model.base.grid.nodes)
        np.testing.assert_allclose(profile, expected, rtol=1e-14)


class TestCsvRoundTrip:
    def test_trajectory_lossless(self, tmp_path):
        grid_t = TimeGrid(T=1.0 / 3.0, K=5)
        states = np.random.default_rng(5).standard_normal((6, 4))
        traj = Trajectory(grid=grid_t, states=states)
        target = tmp_path / "traj.csv"
        emit_trajectory_csv(traj, target)
        ts, back = read_trajectory_csv(target)
        assert np.array_equal(back, states)
        assert np.array_equal(ts, grid_t.nodes)

    def test_zero_trajectory_rows(self, tmp_path):
        traj = Trajectory.zero(TimeGrid(T=1.0, K=1), 2)
        target = tmp_path / "zero.csv"
        emit_trajectory_csv(traj, target)
        lines = target.read_text().strip().splitlines()
        assert lines[0] == "t,x_1,x_2"
        assert len(lines) == 3

    def test_field_lossless(self, tmp_path):
        values = np.random.default_rng(6).standard_normal(7)
        target = tmp_path / "field.csv"
        emit_field_csv(np.linspace(0, 1, 7), values, target)
        assert np.array_equal(read_field_csv(target), values)


class TestRunExperiment:
    def test_recover_artifacts(self, tmp_path):
        cfg = parse_config(fast_config(tmp_path))
        artifacts = run_experiment(cfg)
        report = json.loads(Path(artifacts.report_path).read_text())
        assert report["status"] == "ok"
        assert report["solve"]["converged"]
        assert artifacts.trajectory_path.exists()
        assert artifacts.recovered_path.exists()
        assert (artifacts.out_dir / "plot_convergence.py").exists()
        assert (artifacts.out_dir / "plot_trajectory.py").exists()

    def test_zero_data_recovers_zero(self, tmp_path):
        cfg = parse_config(fast_config(tmp_path, data=["source = zero"]))
        artifacts = run_experiment(cfg)
        recovered = read_field_csv(artifacts.recovered_path)
        assert np.all(recovered == 0.0)

    def test_forward_operation(self, tmp_path):
        cfg = parse_config(fast_config(tmp_path, run=["operation = forward"]))
        artifacts = run_experiment(cfg)
        ts, states = read_trajectory_csv(artifacts.trajectory_path)
        assert states.shape == (17, 8)

    def test_scan_operation(self, tmp_path):
        cfg = parse_config(
            fast_config(tmp_path, data=["amplitudes = 0.001 0.01"], run=["operation = scan"])
        )
        artifacts = run_experiment(cfg)
        lines = Path(artifacts.scan_path).read_text().strip().splitlines()
        assert lines[0] == "amplitude,converged,iterations,contraction"
        assert len(lines) == 3
        assert (artifacts.out_dir / "plot_scan.py").exists()

    def test_probe_operation(self, tmp_path):
        cfg = parse_config(fast_config(tmp_path, run=["operation = probe", "trials = 2"]))
        artifacts = run_experiment(cfg)
        report = json.loads(Path(artifacts.report_path).read_text())
        assert report["probe"]["all_converged"]

    def test_validate_operation(self, tmp_path):
        cfg = parse_config(fast_config(tmp_path, run=["operation = validate"]))
        artifacts = run_experiment(cfg)
        report = json.loads(Path(artifacts.report_path).read_text())
        assert report["exponents"]["all_passed"]

    def test_singular_phi_failure_report_names_sigma(self, tmp_path):
        text = (CONFIG_DIR / "singular_phi.ini").read_text()
        cfg = parse_config(text)
        from dataclasses import replace

        from avgrec.errors import NumericalError

        cfg = replace(cfg, out=str(tmp_path / "singular"))
        with pytest.raises(NumericalError):
            run_experiment(cfg)
        report = json.loads((tmp_path / "singular" / "report.json").read_text())
        assert report["status"] == "failed"
        assert report["error"]["sigma_min"] <= 1e-10

    def test_determinism_byte_identical(self, tmp_path):
        from dataclasses import replace

        cfg = parse_config(fast_config(tmp_path))
        a = run_experiment(replace(cfg, out=str(tmp_path / "a")))
        b = run_experiment(replace(cfg, out=str(tmp_path / "b")))
        for x, y in (
            (a.report_path, b.report_path),
            (a.trajectory_path, b.trajectory_path),
            (a.recovered_path, b.recovered_path),
        ):
            ax = Path(x).read_bytes()
            # the config echo embeds the out directory; normalize it away
            ax = ax.replace(str(tmp_path / "a").encode(), b"OUT")
            by = Path(y).read_bytes().replace(str(tmp_path / "b").encode(), b"OUT")
            assert ax == by


class TestPlotScripts:
    def test_missing_artifact_rejected(self, tmp_path):
        artifacts = RunArtifacts(out_dir=tmp_path)
        with pytest.raises(FileNotFoundError):
            emit_plot_script(artifacts, "trajectory")

    def test_unknown_kind_rejected(self, tmp_path):
        artifacts = RunArtifacts(out_dir=tmp_path)
        with pytest.raises(ValueError):
            emit_plot_script(artifacts, "histogram")

    def test_scripts_compile(self, tmp_path):
        import py_compile

        traj = Trajectory.zero(TimeGrid(T=1.0, K=2), 3)
        artifacts = RunArtifacts(out_dir=tmp_path)
        artifacts.trajectory_path = tmp_path / "trajectory.csv"
        emit_trajectory_csv(traj, artifacts.trajectory_path)
        script = emit_plot_script(artifacts, "trajectory")
        py_compile.compile(str(script), doraise=True)


class TestMainExitCodes:
    def test_success(self, tmp_path, capsys):
        config = tmp_path / "ok.ini"
        config.write_text(fast_config(tmp_path))
        assert main(["recover", "--config", str(config), "--quiet"]) == 0

    def test_out_and_seed_overrides(self, tmp_path):
        config = tmp_path / "ok.ini"
        config.write_text(fast_config(tmp_path))
        out = tmp_path / "elsewhere"
        code = main(
            ["recover", "--config", str(config), "--out", str(out), "--seed", "3", "--quiet"]
        )
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["config"]["seed"] == 3

    def test_config_error_exit_2(self, tmp_path, capsys):
        config = tmp_path / "bad.ini"
        config.write_text("[grid]\nn = 1\n")
        assert main(["recover", "--config", str(config), "--quiet"]) == 2
        assert "configuration error" in capsys.readouterr().err

    def test_numerical_failure_exit_3(self, tmp_path, capsys):
        config = tmp_path / "singular.ini"
        text = (CONFIG_DIR / "singular_phi.ini").read_text()
        config.write_text(text.replace("runs/singular_phi", str(tmp_path / "out")))
        assert main(["recover", "--config", str(config), "--quiet"]) == 3
        assert "numerical failure" in capsys.readouterr().err

    def test_missing_config_exit_4(self, tmp_path, capsys):
        assert main(["recover", "--config", str(tmp_path / "nope.ini"), "--quiet"]) == 4
        assert "cannot read config" in capsys.readouterr().err

    def test_method_flag_accepted(self, tmp_path):
        config = tmp_path / "ok.ini"
        config.write_text(fast_config(tmp_path))
        assert main(["recover", "--config", str(config), "--method", "series", "--quiet"]) == 0

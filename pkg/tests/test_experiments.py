import hashlib
import json

import numpy as np
import pytest

from critheat.cli import main as cli_main
from critheat.errors import ConfigurationError
from critheat.experiments import (
    ExperimentConfig,
    bisect_threshold,
    classify,
    make_initial_data,
    measure_trapped_time,
    probe_type2_exclusion,
    run_config,
    selfsim_sweep,
)
from critheat.groundstate import RadialField


class TestConfig:
    def test_from_dict_with_grid_block(self):
        cfg = ExperimentConfig.from_dict(
            {"kind": "evolve", "grid": {"n": 800, "rmax": 50.0}, "seed": 3}
        )
        assert cfg.grid_n == 800
        assert cfg.grid_rmax == 50.0
        assert cfg.seed == 3

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_dict({"kind": "dance"})

    def test_unknown_grid_field_rejected(self):
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_dict({"kind": "evolve", "grid": {"cells": 5}})

    def test_json_and_yaml_files(self, tmp_path):
        payload = {"kind": "classify", "seed": 11, "horizon": 5.0}
        jp = tmp_path / "c.json"
        jp.write_text(json.dumps(payload))
        yp = tmp_path / "c.yaml"
        yp.write_text("kind: classify\nseed: 11\nhorizon: 5.0\n")
        a = ExperimentConfig.from_file(jp)
        b = ExperimentConfig.from_file(yp)
        assert a == b

    def test_parse_error_carries_location(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"kind": "classify",}')
        with pytest.raises(ConfigurationError) as err:
            ExperimentConfig.from_file(bad)
        assert "bad.json:1" in str(err.value)

    def test_low_dimension_gate(self):
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_dict({"kind": "evolve", "d": 5})
        cfg = ExperimentConfig.from_dict(
            {"kind": "evolve", "d": 5, "allow_low_dimension": True}
        )
        assert cfg.d == 5


class TestInitialData:
    def test_families(self, workspace):
        ws = workspace
        for desc in (
            {"family": "q"},
            {"family": "q", "scale": 1.2},
            {"family": "q_plus_y", "coefficient": 0.02},
            {"family": "q_plus_gauss", "coefficient": 0.01, "sigma": 2.0},
            {"family": "gauss", "coefficient": 0.5},
            {"family": "random_near_q", "amplitude": 0.01, "seed": 5},
        ):
            u0 = make_initial_data(desc, ws.run_grid, ws.spec, ws.params)
            assert np.all(np.isfinite(u0.values))

    def test_unknown_family(self, workspace):
        with pytest.raises(ConfigurationError):
            make_initial_data({"family": "wavelet"}, workspace.run_grid,
                              workspace.spec, workspace.params)

    def test_random_family_deterministic(self, workspace):
        ws = workspace
        a = make_initial_data(
            {"family": "random_near_q", "seed": 9}, ws.run_grid, ws.spec, ws.params
        )
        b = make_initial_data(
            {"family": "random_near_q", "seed": 9}, ws.run_grid, ws.spec, ws.params
        )
        assert np.array_equal(a.values, b.values)


class TestClassify:
    def test_soliton_verdict_for_base(self, workspace):
        ws = workspace
        u0 = make_initial_data({"family": "q"}, ws.run_grid, ws.spec, ws.params)
        verdict, record, trace = classify(u0, ws)
        assert verdict.cls == "Soliton"
        assert abs(verdict.evidence["lambda_final"] - 1.0) < 0.01
        assert verdict.evidence["t_ins"] is None

    def test_blowup_verdict(self, workspace):
        ws = workspace
        u0 = make_initial_data(
            {"family": "q_plus_y", "coefficient": 0.05}, ws.run_grid, ws.spec, ws.params
        )
        verdict, record, trace = classify(u0, ws)
        assert verdict.cls == "TypeI-Blowup"
        assert verdict.evidence["exponent_hat"] == pytest.approx(1.25, rel=0.1)
        assert verdict.evidence["t_ins"] is not None
        assert verdict.evidence["t_exit"] is not None

    def test_dissipation_verdict(self, workspace):
        import dataclasses

        ws = workspace
        cfg = dataclasses.replace(ws.solver_cfg, t_end=350.0, dt_max=0.5)
        ws2 = dataclasses.replace(ws, solver_cfg=cfg)
        u0 = make_initial_data(
            {"family": "q_plus_y", "coefficient": -0.05},
            ws2.run_grid, ws2.spec, ws2.params,
        )
        verdict, record, trace = classify(u0, ws2)
        assert verdict.cls == "Dissipation"
        assert verdict.evidence["h1_ratio"] < 1.0

    def test_neighborhood_gate(self, workspace):
        ws = workspace
        far = make_initial_data(
            {"family": "gauss", "coefficient": 5.0, "sigma": 4.0},
            ws.run_grid, ws.spec, ws.params,
        )
        with pytest.raises(ConfigurationError):
            classify(far, ws)
        verdict, _, _ = classify(far, ws, override_neighborhood=True)
        assert verdict.cls == "TypeI-Blowup"


class TestBisection:
    def test_unstable_direction_family_brackets_zero(self, workspace):
        ws = workspace
        import dataclasses

        cfg = dataclasses.replace(ws.solver_cfg, t_end=30.0)
        ws2 = dataclasses.replace(ws, solver_cfg=cfg)

        def family(c):
            return make_initial_data(
                {"family": "q_plus_y", "coefficient": c},
                ws2.run_grid, ws2.spec, ws2.params,
            )

        result = bisect_threshold(
            family, -0.02, 0.02, ws2,
            target_rel_width=1e-3, measure_trapping=False,
        )
        assert result.width <= 1e-3 * 0.04
        assert result.bracket[0] <= result.c_star <= result.bracket[1]
        assert abs(result.c_star) <= 1e-3 * 0.04

    def test_bad_bracket_rejected(self, workspace):
        ws = workspace

        def family(c):
            return make_initial_data(
                {"family": "q_plus_y", "coefficient": c},
                ws.run_grid, ws.spec, ws.params,
            )

        with pytest.raises(ConfigurationError):
            bisect_threshold(family, 0.01, 0.05, ws, target_rel_width=0.5)

    def test_trapped_time_measured(self, trapped_record, spec):
        t_trap = measure_trapped_time(trapped_record, spec)
        assert t_trap == pytest.approx(trapped_record.t_final, rel=0.2)


class TestTypeTwoProbe:
    def test_small_sample(self, workspace):
        probe = probe_type2_exclusion(workspace, n_samples=4, amplitude=0.02, seed=3)
        assert len(probe.rows) == 4
        assert probe.all_blowups_h1_grow
        assert probe.no_bounded_h1_concentration


class TestSelfsimSweep:
    def test_rows_monotone_in_amplitude(self, workspace):
        rows = selfsim_sweep(workspace, [0.3, 0.6, 1.2], sigma=2.0)
        rows = [r for r in rows if r.get("global")]
        assert len(rows) == 3
        for row in rows:
            assert row["worst_I"] <= 1e-10
            assert row["E0"] > 0
        e0s = [r["E0"] for r in rows]
        st = [r["spacetime_integral"] for r in rows]
        assert e0s == sorted(e0s)
        assert st == sorted(st)


class TestRunConfig:
    def _spectrum_cfg(self):
        return ExperimentConfig.from_dict(
            {
                "kind": "spectrum",
                "grid": {"n": 2000},
                "seed": 2,
                "coercivity_samples": 150,
            }
        )

    def test_spectrum_artifacts(self, tmp_path):
        manifest = run_config(self._spectrum_cfg(), tmp_path / "out")
        names = {f["name"] for f in manifest["files"]}
        assert "spectral_report.csv" in names
        assert "spectrum.png" in names
        report = (tmp_path / "out" / "spectral_report.csv").read_text()
        header, row = report.strip().split("\n")[-2:]
        e0 = float(row.split(",")[header.split(",").index("e0")])
        assert e0 > 0

    def test_rerun_is_bit_identical(self, tmp_path):
        cfg = self._spectrum_cfg()
        m1 = run_config(cfg, tmp_path / "a")
        m2 = run_config(cfg, tmp_path / "b")
        h1 = {f["name"]: f.get("sha256") for f in m1["files"]}
        h2 = {f["name"]: f.get("sha256") for f in m2["files"]}
        assert set(h1) == set(h2)
        for name, digest in h1.items():
            if name.endswith(".csv"):
                assert digest == h2[name], name

    def test_classify_artifacts(self, tmp_path):
        cfg = ExperimentConfig.from_dict(
            {
                "kind": "classify",
                "horizon": 20.0,
                "initial_data": {"family": "q"},
                "solver": {"snapshot_stride": 8},
            }
        )
        run_config(cfg, tmp_path / "out")
        verdict = json.loads((tmp_path / "out" / "verdict.json").read_text())
        assert verdict["class"] == "Soliton"
        assert (tmp_path / "out" / "run.csv").exists()
        assert (tmp_path / "out" / "run.png").exists()
        assert (tmp_path / "out" / "manifest.json").exists()

    def test_run_csv_has_metadata_block(self, tmp_path):
        cfg = ExperimentConfig.from_dict(
            {"kind": "evolve", "horizon": 1.0, "initial_data": {"family": "q"}}
        )
        run_config(cfg, tmp_path / "out")
        text = (tmp_path / "out" / "run.csv").read_text()
        assert text.startswith("#")
        assert "# d = 7" in text
        assert "config_hash" in text
        header = [l for l in text.split("\n") if not l.startswith("#")][0]
        assert header == "t,dt,linf,h1dot,energy,verdict_flag"


class TestCli:
    def test_classify_subcommand(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(
            json.dumps(
                {"kind": "classify", "horizon": 10.0, "initial_data": {"family": "q"}}
            )
        )
        code = cli_main(
            ["classify", "--config", str(cfg_path), "--out", str(tmp_path / "o")]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "artifacts" in out
        assert (tmp_path / "o" / "verdict.json").exists()

    def test_error_reporting(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"kind": "nope"}')
        code = cli_main(["classify", "--config", str(bad), "--out", str(tmp_path / "o")])
        assert code == 2
        assert "error:" in capsys.readouterr().err

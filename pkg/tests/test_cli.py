import numpy as np
import pytest

from grainpd.cli import main
from grainpd.io import read_timeseries

CONFIG = """
seed: 1
scene:
  gravity: [0.0, -10.0]
  mesh_h: 2.5e-4
  bodies:
    - name: bottom
      material: M1
      fixed: true
      shape: {kind: disk, center: [0.0, 0.0], radius: 1.0e-3}
    - name: top
      material: M1
      shape: {kind: disk, center: [0.0, 2.2e-3], radius: 1.0e-3}
materials:
  M1: {rho: 1200.0, kappa: 2.16e7, shear: 1.296e7, gc: 50.0, horizon: 6.0e-4}
contact: {damping_model: center, eps_bar_n: 0.9}
integrator: {dt: 2.0e-7, t_final: 6.0e-3}
output: {sample_every: 100, every_n: 10000}
experiment: {kind: two_particle}
"""


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "two.yaml"
    path.write_text(CONFIG)
    return path


class TestRun:
    def test_valid_run_writes_outputs(self, config_path, tmp_path):
        out = tmp_path / "out"
        assert main(["run", "--config", str(config_path),
                     "--out", str(out)]) == 0
        assert (out / "timeseries.csv").exists()
        assert (out / "final_snapshot.csv").exists()
        assert (out / "checkpoint.npz").exists()
        assert (out / "snapshot_000000000.csv").exists()

    def test_bad_dt_exit_code_and_message(self, tmp_path, capsys):
        path = tmp_path / "bad.yaml"
        path.write_text(CONFIG.replace("dt: 2.0e-7", "dt: 0.0"))
        assert main(["run", "--config", str(path)]) == 2
        assert "integrator.dt" in capsys.readouterr().err

    def test_missing_config_is_io_error(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "nope.yaml")]) == 4

    def test_dry_run_prints_derived_params(self, config_path, capsys):
        assert main(["run", "--config", str(config_path), "--dry-run"]) == 0
        out = capsys.readouterr().out
        for token in ("h:", "r_c:", "s0[M1]:", "k_n[", "beta_bar[", "steps:"):
            assert token in out


class TestMesh:
    def test_mesh_subcommand_writes_file(self, tmp_path):
        out = tmp_path / "hex.mesh"
        assert main(["mesh", "--kind", "hexagon", "--radius", "1e-3",
                     "--target-h", "2.5e-4", "--out", str(out)]) == 0
        from grainpd.geometry import read_mesh_file

        mesh = read_mesh_file(out)
        assert len(mesh.triangles) > 0

    def test_bad_shape_exit_code(self, tmp_path):
        assert main(["mesh", "--kind", "concave", "--radius", "1e-3",
                     "--neck", "2e-3", "--target-h", "2.5e-4",
                     "--out", str(tmp_path / "x.mesh")]) == 2


class TestCalibrateCor:
    def test_table_structure(self, config_path, tmp_path):
        short = tmp_path / "short.yaml"
        short.write_text(CONFIG.replace("t_final: 6.0e-3", "t_final: 2.0e-2"))
        out = tmp_path / "table.csv"
        assert main(["calibrate-cor", "--config", str(short),
                     "--eps", "1.0,0.8", "--out", str(out)]) == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "eps_bar_n,cor"
        rows = [ln.split(",") for ln in lines[1:]]
        assert [float(r[0]) for r in rows] == [1.0, 0.8]
        cors = [float(r[1]) for r in rows]
        assert cors[0] > cors[1]


class TestPostprocess:
    def run_records(self, config_path, tmp_path):
        out = tmp_path / "out"
        short = tmp_path / "short.yaml"
        short.write_text(CONFIG.replace("t_final: 6.0e-3", "t_final: 2.0e-2"))
        main(["run", "--config", str(short), "--out", str(out)])
        return out / "timeseries.csv"

    def test_cor_task(self, config_path, tmp_path):
        records = self.run_records(config_path, tmp_path)
        out = tmp_path / "cor.csv"
        assert main(["postprocess", "--records", str(records),
                     "--task", "cor", "--out", str(out)]) == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "cor"
        assert 0.0 < float(lines[1]) <= 1.05

    def test_fz_count_zero_for_still_run(self, config_path, tmp_path):
        still = tmp_path / "still.yaml"
        still.write_text(CONFIG.replace("gravity: [0.0, -10.0]",
                                        "gravity: [0.0, 0.0]"))
        out_dir = tmp_path / "out_still"
        main(["run", "--config", str(still), "--out", str(out_dir)])
        out = tmp_path / "fz.csv"
        assert main(["postprocess", "--records",
                     str(out_dir / "timeseries.csv"),
                     "--task", "fz-count", "--out", str(out)]) == 0
        rows = out.read_text().strip().splitlines()[1:]
        assert rows
        assert all(int(r.split(",")[1]) == 0 for r in rows)

    def test_reaction_requires_wall(self, config_path, tmp_path, capsys):
        records = self.run_records(config_path, tmp_path)
        assert main(["postprocess", "--records", str(records),
                     "--task", "reaction", "--out",
                     str(tmp_path / "r.csv")]) == 2

    def test_reaction_window_matches_oracle(self, tmp_path):
        # synthetic records with a wall column
        from grainpd.engine import Records
        from grainpd.io import write_timeseries

        t = np.arange(50) * 1e-3
        rng = np.random.default_rng(1)
        y = rng.normal(size=50)
        rec = Records(columns={"t": t, "rf_w": y},
                      meta={"r_c": 1.0, "walls": ["w"]})
        path = tmp_path / "ts.csv"
        write_timeseries(rec, path)
        out = tmp_path / "r.csv"
        assert main(["postprocess", "--records", str(path), "--task",
                     "reaction", "--wall", "w", "--window", "5e-3",
                     "--out", str(out)]) == 0
        rows = [ln.split(",") for ln in out.read_text().strip().splitlines()[1:]]
        got = np.array([float(r[1]) for r in rows])
        for i in (0, 20, 49):
            mask = np.abs(t - t[i]) <= 2.5e-3 + 1e-12
            assert got[i] == pytest.approx(y[mask].mean(), rel=1e-9)

    def test_missing_column_named(self, tmp_path, capsys):
        from grainpd.engine import Records
        from grainpd.io import write_timeseries

        rec = Records(columns={"t": np.arange(3.0)}, meta={})
        path = tmp_path / "ts.csv"
        write_timeseries(rec, path)
        assert main(["postprocess", "--records", str(path), "--task", "cor",
                     "--out", str(tmp_path / "c.csv")]) == 2
        assert "gap" in capsys.readouterr().err


class TestDeterminism:
    def test_rerun_identical_files(self, config_path, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["run", "--config", str(config_path), "--out", str(out1)])
        main(["run", "--config", str(config_path), "--out", str(out2)])
        assert (out1 / "timeseries.csv").read_text() == \
            (out2 / "timeseries.csv").read_text()
        assert (out1 / "final_snapshot.csv").read_text() == \
            (out2 / "final_snapshot.csv").read_text()


COMPRESSION = """
seed: 11
scene:
  gravity: [0.0, -10.0]
  mesh_h: 3.2e-4
  bodies: []
materials:
  M1: {rho: 1200.0, kappa: 2.16e7, shear: 1.296e7, gc: 50.0, horizon: 6.0e-4}
contact: {damping_model: center, eps_bar_n: 0.8}
integrator: {dt: 1.0e-7, t_final: 1.0}
output: {sample_every: 500}
experiment:
  kind: compression
  nx: 2
  ny: 1
  r0: 1.0e-3
  hex_fraction: 0.5
  settle_t: 1.5e-3
  compress_t: 1.5e-3
  wall_speed: 0.3
"""


class TestCompress:
    def test_two_phase_outputs(self, tmp_path):
        cfg = tmp_path / "comp.yaml"
        cfg.write_text(COMPRESSION)
        out = tmp_path / "out"
        assert main(["compress", "--config", str(cfg),
                     "--out", str(out)]) == 0
        settle = read_timeseries(out / "settle" / "timeseries.csv")
        press = read_timeseries(out / "compress" / "timeseries.csv")
        assert "rfavg_wall_top" in press
        assert "broken_bonds" in press
        # phase 2 continues the clock where settling stopped
        assert press["t"][0] >= settle["t"][-1]

    def test_run_rejects_empty_bodies(self, tmp_path, capsys):
        cfg = tmp_path / "comp.yaml"
        cfg.write_text(COMPRESSION)
        assert main(["run", "--config", str(cfg)]) == 2
        assert "bodies" in capsys.readouterr().err

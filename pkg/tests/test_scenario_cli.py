import math
import os

import pytest

from mfcache.cli import main
from mfcache.errors import ConfigurationError
from mfcache.scenario import (
    ScenarioConfig,
    load_scenario,
    parse_scenario,
    scenario_hash,
    serialize_scenario,
)


class TestScenarioParsing:
    def test_empty_file_yields_defaults(self, tmp_path):
        path = tmp_path / "empty.ini"
        path.write_text("")
        cfg = load_scenario(str(path))
        assert cfg == ScenarioConfig()
        assert cfg.geometry.lambda_b == 0.03
        assert cfg.geometry.lambda_u == 0.001
        assert cfg.geometry.tx_power_dbm == 23.0
        assert cfg.geometry.noise_dbm == -70.0
        assert cfg.geometry.reception_radius_km == pytest.approx(10 / math.sqrt(math.pi))
        assert cfg.demand.catalog_size == 20
        assert cfg.demand.theta == 1.0 and cfg.demand.nu == 0.5
        assert cfg.costs.discard_rate == 0.1
        assert cfg.costs.similar_count == 20

    def test_negative_density_rejected_by_key_name(self):
        with pytest.raises(ConfigurationError, match="geometry.lambda_b"):
            parse_scenario("[geometry]\nlambda_b = -0.5\n")

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigurationError, match="geometry.lambdab"):
            parse_scenario("[geometry]\nlambdab = 0.5\n")

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigurationError, match="radio"):
            parse_scenario("[radio]\npower = 3\n")

    def test_malformed_value_names_key(self):
        with pytest.raises(ConfigurationError, match="demand.theta"):
            parse_scenario("[demand]\ntheta = lots\n")

    def test_round_trip_equality(self):
        cfg = parse_scenario(
            "[geometry]\nlambda_b = 0.05\nlambda_u = 0.00025\n"
            "[demand]\nvolatility = 0.07\ncatalog_size = 12\n"
            "[experiments]\nx0_values = 0.2, 0.4\n"
        )
        assert parse_scenario(serialize_scenario(cfg)) == cfg

    def test_hash_tracks_content(self):
        a = ScenarioConfig()
        b = parse_scenario("[demand]\nx0 = 0.31\n")
        assert scenario_hash(a) != scenario_hash(b)
        assert scenario_hash(a) == scenario_hash(ScenarioConfig())

    def test_invariant_violations_surface(self):
        with pytest.raises(ConfigurationError, match="demand.nu"):
            parse_scenario("[demand]\nnu = 1.0\n")
        with pytest.raises(ConfigurationError, match="simulation.replications"):
            parse_scenario("[simulation]\nreplications = 0\n")


SMALL = """
[geometry]
lambda_u = 0.0001

[demand]
catalog_size = 4

[solver]
grid_nt = 51
grid_nx = 11
grid_nq = 11

[simulation]
replications = 2

[experiments]
lambda_u_values = 0.0001, 0.00025
lambda_b_values = 0.02, 0.05
x0_values = 0.3, 0.7
"""


@pytest.fixture()
def small_file(tmp_path):
    path = tmp_path / "small.ini"
    path.write_text(SMALL)
    return str(path)


class TestCli:
    def test_validate_ok(self, small_file, capsys):
        assert main(["validate", "--scenario", small_file, "--quiet"]) == 0
        assert "[geometry]" in capsys.readouterr().out

    def test_validate_rejects_bad_file(self, tmp_path):
        bad = tmp_path / "bad.ini"
        bad.write_text("[geometry]\nlambda_b = -1\n")
        assert main(["validate", "--scenario", str(bad), "--quiet"]) == 2

    def test_missing_scenario_is_validation_failure(self):
        assert main(["validate", "--scenario", "/no/such/file", "--quiet"]) == 2

    def test_solve_writes_artifacts(self, small_file, tmp_path):
        out = tmp_path / "out"
        assert main(["solve", "--scenario", small_file, "--out", str(out),
                     "--quiet"]) == 0
        names = sorted(os.listdir(out))
        assert "manifest.txt" in names
        assert "content_solutions.csv" in names
        assert any(n.startswith("solution_content_") for n in names)
        assert any(n.startswith("residuals_content_") for n in names)
        assert any(n.startswith("control_trajectory_") for n in names)
        assert any(n.startswith("density_marginal_") for n in names)
        solution = next(n for n in names if n.startswith("solution_content_"))
        header = open(out / solution).readline().strip()
        assert header == "t,x,Q,v,m,p"
        manifest = open(out / "manifest.txt").read()
        assert "scenario_hash:" in manifest and "wall_seconds:" in manifest

    def test_solve_nonconvergence_exit_code(self, tmp_path):
        path = tmp_path / "hard.ini"
        path.write_text(SMALL.replace(
            "[solver]\ngrid_nt = 51",
            "[solver]\ntolerance = 1e-14\nmax_iterations = 2\ngrid_nt = 51"))
        out = tmp_path / "out"
        code = main(["solve", "--scenario", str(path), "--out", str(out),
                     "--quiet"])
        assert code == 3
        assert (out / "manifest.txt").exists()  # artifacts still written

    def test_compare_writes_tables(self, small_file, tmp_path):
        out = tmp_path / "cmp"
        assert main(["compare", "--scenario", small_file, "--out", str(out),
                     "--quiet"]) == 0
        for name in ("lra_trajectories.csv", "summary.csv",
                     "overlap_vs_x0.csv", "manifest.txt"):
            assert (out / name).exists()
        rows = open(out / "summary.csv").read().splitlines()
        assert rows[0] == "lambda_u,policy,lra,reduction_vs_baseline"
        assert len(rows) == 1 + 2 * 3  # two densities, three policies

    def test_ipi_writes_tables(self, small_file, tmp_path):
        out = tmp_path / "ipi"
        assert main(["ipi", "--scenario", small_file, "--out", str(out),
                     "--quiet"]) == 0
        rows = open(out / "ipi_increments.csv").read().splitlines()
        assert rows[0] == "lambda_b,policy,lra_ppi,lra_ipi,increment"
        assert len(rows) == 1 + 2 * 3

    def test_seed_and_grid_overrides(self, small_file, tmp_path):
        out = tmp_path / "ovr"
        assert main(["solve", "--scenario", small_file, "--out", str(out),
                     "--seed", "77", "--grid-nt", "41", "--quiet"]) == 0
        manifest = open(out / "manifest.txt").read()
        assert "seed: 77" in manifest
        assert "grid: 41x11x11" in manifest

    def test_output_collision_is_io_failure(self, small_file, tmp_path):
        blocker = tmp_path / "blocked"
        blocker.write_text("a file, not a directory")
        assert main(["validate", "--scenario", small_file, "--quiet"]) == 0
        assert main(["solve", "--scenario", small_file, "--out", str(blocker),
                     "--quiet"]) == 4

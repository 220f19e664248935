"""
Integration tests for refinement studies and phase-difference sweeps.
"""

import csv
import math
import os
from unittest.mock import patch

import pytest

from app import scenario_handler
from app.errors import ConfigInvalid, NewtonDiverged, OracleUnavailable
from app.scenario_handler import (SweepRow, parse_config_text, run_phase_sweep,
                                  run_refinement_study, write_sweep_csv)


def oracle_config(extra=None):
    text = """
name = oracle
alpha1 = 0.75
gamma = 0.0
L1 = 25
L2 = 25
h = 0.2
dtau = 0.04
t_final = 2.0
soliton.1.X = 0.0
soliton.1.c = 1.0
soliton.1.n_psi = -1.5
soliton.1.n_phi = -1.5
"""
    return parse_config_text(text, extra)


class TestRefinementStudy:
    """Test cases for run_refinement_study."""

    def test_translated_soliton_is_second_order(self):
        rows = run_refinement_study(oracle_config(), levels=3)
        assert [r.level for r in rows] == [0, 1, 2]
        assert [r.m for r in rows] == [250, 500, 1000]
        assert rows[1].dtau == pytest.approx(0.02)
        assert rows[0].order is None
        assert rows[0].error > rows[1].error > rows[2].error
        assert rows[-1].order >= 1.9

    def test_breathing_soliton_is_second_order(self):
        config = oracle_config({"gamma": "0.175", "soliton.1.c": "0", "soliton.1.linear": "true"})
        rows = run_refinement_study(config, levels=3)
        assert rows[-1].order >= 1.9

    def test_collision_has_no_oracle(self, headon_config_text):
        with pytest.raises(OracleUnavailable):
            run_refinement_study(parse_config_text(headon_config_text))

    def test_complex_gamma_has_no_oracle(self):
        with pytest.raises(OracleUnavailable):
            run_refinement_study(oracle_config({"gamma_imag": "0.1"}))

    def test_levels_must_be_at_least_three(self):
        with pytest.raises(ConfigInvalid) as exc_info:
            run_refinement_study(oracle_config(), levels=2)
        assert exc_info.value.field == "levels"


class TestPhaseSweep:
    """Test cases for run_phase_sweep."""

    def test_rows_follow_the_phase_list(self, solver_env, headon_config_text, registry):
        config = parse_config_text(headon_config_text)
        out = os.path.join(solver_env, "sweep")
        rows = run_phase_sweep(config, [0, 90, 180], output_dir=out, workers=1, registry=registry)
        assert [r.phase_diff_deg for r in rows] == [0.0, 90.0, 180.0]
        assert all(r.status == "ok" for r in rows)
        assert sorted(os.listdir(out)) == ["phase_0", "phase_180", "phase_90"]
        assert [r.run_id.split("-")[0] for r in rows] == ["pair_phase0", "pair_phase90", "pair_phase180"]
        assert len(registry.sweeps_table.all()) == 3

    def test_separated_pair_energy_ignores_phase(self, solver_env, headon_config_text):
        config = parse_config_text(headon_config_text)
        rows = run_phase_sweep(config, [0, 90, 180], output_dir=os.path.join(solver_env, "sweep"))
        assert rows[1].energy == pytest.approx(rows[0].energy, rel=1e-9)
        assert rows[2].mass == pytest.approx(rows[0].mass, rel=1e-9)

    def test_order_is_kept_for_permuted_lists(self, solver_env, headon_config_text):
        config = parse_config_text(headon_config_text)
        rows = run_phase_sweep(config, [180, 0], output_dir=os.path.join(solver_env, "sweep"))
        assert [r.phase_diff_deg for r in rows] == [180.0, 0.0]

    def test_empty_phase_list(self, solver_env, headon_config_text):
        assert run_phase_sweep(parse_config_text(headon_config_text), []) == []

    def test_failed_member_is_marked(self, solver_env, headon_config_text):
        real_run = scenario_handler.run_scenario

        def flaky(config, output_dir=None, **kwargs):
            if config.phase_diff_deg == 90.0:
                raise NewtonDiverged("envelope iteration stalled", iterations=3)
            return real_run(config, output_dir=output_dir, **kwargs)

        config = parse_config_text(headon_config_text)
        with patch("app.scenario_handler.run_scenario", side_effect=flaky):
            rows = run_phase_sweep(config, [0, 90, 180], output_dir=os.path.join(solver_env, "sweep"))
        assert [r.status for r in rows] == ["ok", "failed", "ok"]
        assert rows[1].error == "envelope iteration stalled"
        assert rows[1].energy is None

    def test_unexpected_member_error_is_marked(self, solver_env, headon_config_text, caplog):
        real_run = scenario_handler.run_scenario

        def disk_full(config, output_dir=None, **kwargs):
            if config.phase_diff_deg == 90.0:
                raise OSError("disk full")
            return real_run(config, output_dir=output_dir, **kwargs)

        config = parse_config_text(headon_config_text)
        with patch("app.scenario_handler.run_scenario", side_effect=disk_full):
            rows = run_phase_sweep(config, [0, 90, 180], output_dir=os.path.join(solver_env, "sweep"), workers=1)
        assert [r.status for r in rows] == ["ok", "failed", "ok"]
        assert rows[1].error == "OSError: disk full"
        assert rows[2].energy is not None
        assert any(r.levelname == "ERROR" and "disk full" in r.getMessage() for r in caplog.records)

    def test_rows_carry_the_sweep_id(self, solver_env, headon_config_text, registry):
        config = parse_config_text(headon_config_text)
        rows = run_phase_sweep(config, [0, 180], output_dir=os.path.join(solver_env, "sweep"), registry=registry)
        sweep_id = rows[0].sweep_id
        assert sweep_id.startswith("pair-sweep-")
        assert all(r.sweep_id == sweep_id for r in rows)
        assert [r["phase_diff_deg"] for r in registry.get_sweep(sweep_id)] == [0.0, 180.0]

    def test_energy_normalization(self, solver_env, headon_config_text):
        config = parse_config_text(headon_config_text)
        rows = run_phase_sweep(config, [0, 180], output_dir=os.path.join(solver_env, "sweep"),
                               normalization=(0.0, -3.078))
        assert rows[0].energy_normalized == pytest.approx(-3.078)
        assert rows[1].energy_normalized == pytest.approx(-3.078 * rows[1].energy / rows[0].energy)

    def test_normalization_phase_missing(self, solver_env, headon_config_text):
        config = parse_config_text(headon_config_text)
        rows = run_phase_sweep(config, [90], output_dir=os.path.join(solver_env, "sweep"),
                               normalization=(0.0, -3.078))
        assert rows[0].energy_normalized is None


class TestSweepCsv:
    """Test cases for write_sweep_csv."""

    def test_columns_and_blanks(self, temp_dir):
        rows = [
            SweepRow(phase_diff_deg=0.0, status="ok", run_id="a", energy=-3.078, mass=5.96),
            SweepRow(phase_diff_deg=90.0, status="failed", error="bad, worse"),
        ]
        path = write_sweep_csv(rows, os.path.join(temp_dir, "sweep.csv"))
        with open(path) as f:
            table = list(csv.DictReader(f))
        assert list(table[0].keys()) == list(SweepRow.model_fields.keys())
        assert float(table[0]["energy"]) == -3.078
        assert table[1]["energy"] == ""
        assert table[1]["error"] == "bad, worse"
        assert math.isclose(float(table[1]["phase_diff_deg"]), 90.0)

"""
Full preset runs. These take minutes each and are marked slow.
"""

import os

import numpy as np
import pytest

from app.config import Settings
from app.scenario_handler import load_preset, run_phase_sweep, run_scenario

pytestmark = pytest.mark.slow

CIRCULAR_ENERGIES = {0.0: -3.078, 90.0: -4.15, 180.0: -1.139}


@pytest.fixture(scope="module")
def settings(tmp_path_factory):
    root = tmp_path_factory.mktemp("presets")
    return Settings(output_dir=str(root / "runs"), registry_path=str(root / "registry.json"))


@pytest.fixture(scope="module")
def circular_run(settings, preset_dir_module):
    config = load_preset("circular_headon", preset_dir_module, overrides={"snapshot_times": ""})
    return run_scenario(config, settings=settings)


@pytest.fixture(scope="module")
def preset_dir_module():
    return os.path.join(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))),
                        "data", "presets")


class TestCircularHeadon:
    """Circular head-on collision at zero phase difference."""

    def test_mass(self, circular_run):
        assert circular_run.summary["mass"] == pytest.approx(5.9628, rel=5e-3)
        assert circular_run.summary["mass"] == pytest.approx(6.0683, rel=5e-2)

    def test_momentum_stays_small(self, circular_run):
        assert circular_run.summary["momentum_max_abs"] <= 1e-3

    def test_discrete_invariants(self, circular_run):
        series = np.genfromtxt(circular_run.series_path, delimiter=",", names=True)
        assert circular_run.summary["drift_mass"] <= 1e-8
        assert np.max(np.abs(series["E_disc"] - series["E_disc"][0])) <= 1e-7

    def test_speeds_survive_the_collision(self, circular_run):
        pre = circular_run.summary["speeds_pre"]
        post = circular_run.summary["speeds_post"]
        assert pre == pytest.approx([1.0, -1.0], rel=1e-2)
        assert len(post) == 2
        assert sorted(post) == pytest.approx([-1.0, 1.0], rel=1e-2)

    def test_inner_iterations(self, circular_run):
        assert circular_run.summary["inner_iterations_median"] <= 6

    def test_polarization_stays_circular(self, circular_run):
        assert circular_run.summary["theta_total_min_deg"] == pytest.approx(45.0)
        assert circular_run.summary["theta_total_max_deg"] == pytest.approx(45.0)


@pytest.fixture(scope="module", params=["elliptic_headon", "elliptic_takeover"])
def elliptic_run(request, settings, preset_dir_module):
    config = load_preset(request.param, preset_dir_module, overrides={"snapshot_times": "", "t_final": "3"})
    return run_scenario(config, settings=settings)


class TestEllipticPresets:
    """Shortened elliptic preset runs."""

    def test_discrete_invariants(self, elliptic_run):
        assert elliptic_run.summary["gamma_complex"] is False
        assert elliptic_run.summary["drift_mass"] <= 1e-8
        assert elliptic_run.summary["drift_energy"] <= 1e-8

    def test_inner_iterations(self, elliptic_run):
        assert elliptic_run.summary["inner_iterations_median"] <= 6


class TestPublishedValues:
    """Published energy and pseudomomentum figures.

    The energy of well separated solitons does not depend on their relative
    phase, and P = -sum(c_k M_k) for the takeover pair, so these figures are
    not reproduced by the model as stated.
    """

    @pytest.mark.xfail(reason="energy of separated solitons is phase independent", strict=False)
    def test_circular_energy_table(self, settings, preset_dir_module):
        config = load_preset("circular_headon", preset_dir_module, overrides={"snapshot_times": ""})
        rows = run_phase_sweep(config, list(CIRCULAR_ENERGIES), output_dir=settings.output_dir,
                               workers=1, normalization=(0.0, CIRCULAR_ENERGIES[0.0]))
        for row in rows:
            assert row.energy_normalized == pytest.approx(CIRCULAR_ENERGIES[row.phase_diff_deg], rel=0.1)
        energies = {row.phase_diff_deg: row.energy for row in rows}
        assert energies[90.0] < energies[0.0] and energies[90.0] < energies[180.0]

    @pytest.mark.xfail(reason="P = -(c_l M_l + c_r M_r) is negative for two right-moving solitons", strict=False)
    def test_takeover_momentum(self, settings, preset_dir_module):
        config = load_preset("elliptic_takeover", preset_dir_module,
                             overrides={"snapshot_times": "", "phase_diff": "90"})
        summary = run_scenario(config, settings=settings).summary
        assert 4.0 <= summary["momentum_min"] <= summary["momentum_max"] <= 4.1

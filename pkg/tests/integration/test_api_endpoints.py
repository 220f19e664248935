"""
Integration tests for the FastAPI endpoints.
"""

import os

import pytest
from fastapi.testclient import TestClient
from unittest.mock import patch

from app.main import app, get_registry


class TestAPIEndpoints:
    """
    Test cases for the FastAPI endpoints.
    """

    @pytest.fixture
    def client(self, solver_env, registry):
        """
        Returns a TestClient wired to a temporary registry.
        """
        app.dependency_overrides[get_registry] = lambda: registry
        yield TestClient(app)
        app.dependency_overrides.clear()

    def test_presets(self, client):
        response = client.get("/presets")
        assert response.status_code == 200
        presets = response.json()
        assert [p["name"] for p in presets] == ["circular_headon", "elliptic_headon", "elliptic_takeover"]
        assert presets[0]["config"]["model"]["alpha1"] == 0.75

    def test_run_from_config_text(self, client, single_config_text):
        response = client.post("/runs", json={"config_text": single_config_text})
        assert response.status_code == 200
        body = response.json()
        assert body["run_id"].startswith("single-")
        assert body["summary"]["steps"] == 50
        assert body["summary"]["drift_mass"] <= 1e-8

        detail = client.get(f"/runs/{body['run_id']}")
        assert detail.status_code == 200
        assert detail.json()["summary"]["mass"] == body["summary"]["mass"]

        listing = client.get("/runs").json()
        assert [r["run_id"] for r in listing] == [body["run_id"]]
        assert client.get("/runs", params={"preset": "circular_headon"}).json() == []

    def test_run_with_phase_and_overrides(self, client, headon_config_text, registry):
        response = client.post("/runs", json={"config_text": headon_config_text, "phase_diff": 90,
                                              "overrides": {"t_final": "0.1"}})
        assert response.status_code == 200
        record = registry.get_run(response.json()["run_id"])
        assert record["manifest"]["config"]["phase_diff_deg"] == 90.0
        assert record["manifest"]["config"]["t_final"] == 0.1

    def test_preset_run(self, client):
        response = client.post("/runs", json={"preset": "circular_headon",
                                              "overrides": {"t_final": "0.05", "snapshot_times": ""}})
        assert response.status_code == 200
        runs = client.get("/runs", params={"preset": "circular_headon"}).json()
        assert len(runs) == 1
        assert runs[0]["name"] == "circular_headon"

    @pytest.mark.parametrize("payload", [{}, {"preset": "circular_headon", "config_text": "alpha1 = 1"}])
    def test_exactly_one_source(self, client, payload):
        response = client.post("/runs", json=payload)
        assert response.status_code == 400
        assert "exactly one" in response.json()["detail"]

    def test_invalid_config(self, client):
        response = client.post("/runs", json={"config_text": "alpha1 = 0.75\nspeed = 3\n"})
        assert response.status_code == 422
        assert response.json()["error"] == "ConfigInvalid"
        assert "speed" in response.json()["detail"]

    def test_unknown_preset(self, client):
        response = client.post("/runs", json={"preset": "no_such_preset"})
        assert response.status_code == 422
        assert response.json()["error"] == "ConfigInvalid"

    def test_unknown_run(self, client):
        response = client.get("/runs/missing-run")
        assert response.status_code == 404

    def test_unexpected_error(self, solver_env, registry, single_config_text):
        app.dependency_overrides[get_registry] = lambda: registry
        try:
            client = TestClient(app, raise_server_exceptions=False)
            with patch("app.main.run_scenario", side_effect=RuntimeError("disk on fire")):
                response = client.post("/runs", json={"config_text": single_config_text})
        finally:
            app.dependency_overrides.clear()
        assert response.status_code == 500
        assert response.json()["detail"] == "An unexpected error occurred: disk on fire"

    def test_delete_run(self, client, single_config_text):
        run_id = client.post("/runs", json={"config_text": single_config_text}).json()["run_id"]
        response = client.delete(f"/runs/{run_id}")
        assert response.status_code == 200
        assert response.json() == {"run_id": run_id, "deleted": True}
        assert client.get(f"/runs/{run_id}").status_code == 404
        assert client.delete(f"/runs/{run_id}").status_code == 404

    def test_sweep_rows(self, client, registry):
        registry.record_sweep_row("pair-sweep-1", {"phase_diff_deg": 0.0, "status": "ok"})
        registry.record_sweep_row("pair-sweep-1", {"phase_diff_deg": 90.0, "status": "failed"})
        registry.record_sweep_row("other-sweep", {"phase_diff_deg": 0.0, "status": "ok"})
        response = client.get("/sweeps/pair-sweep-1")
        assert response.status_code == 200
        assert [(r["phase_diff_deg"], r["status"]) for r in response.json()] == [(0.0, "ok"), (90.0, "failed")]
        assert client.get("/sweeps/missing").status_code == 404

    def test_registry_backup(self, client, registry):
        response = client.post("/registry/backup")
        assert response.status_code == 200
        body = response.json()
        assert body["success"] is True
        assert os.path.exists(body["backup_path"])

    def test_registry_backup_failure(self, client, registry):
        with patch.object(registry, "backup", return_value={"success": False, "error": "read-only"}):
            response = client.post("/registry/backup")
        assert response.status_code == 500
        assert response.json()["detail"] == "read-only"

from pathlib import Path

import pytest
from alembic.config import Config
from alembic.script import ScriptDirectory
from fastapi.testclient import TestClient

import noc
from main import app
from noc.harness import sweep_and_emit
from schemas.experiments import ExperimentConfig

FIG2_FAULTS = [{"src": 1, "dir": "E"}, {"src": 4, "dir": "E"}, {"src": 7, "dir": "E"}]

SMALL_CONFIG = {
    "kx": 4,
    "ky": 4,
    "seeds": [0, 1],
    "rates": [0.05],
    "warmup_cycles": 200,
    "measure_cycles": 1000,
    "drain_cycles": 3000,
    "workers": 1,
}


@pytest.fixture(scope="module")
def client():
    with TestClient(app) as c:
        yield c


def test_health(client):
    response = client.get("/api/health")
    assert response.status_code == 200
    assert response.json() == {"status": "ok", "version": noc.__version__}


def test_reconfiguration_report(client, golden_dir):
    response = client.post("/api/reconfig/report", json={"kx": 3, "ky": 3, "faults": FIG2_FAULTS, "initiator": 1})
    assert response.status_code == 200
    body = response.json()
    assert body["report"] == (golden_dir / "fig2_reconfig.txt").read_text()
    assert body["duration_cycles"] == 81
    assert body["partitions"] == [[0, 1, 3, 4, 6, 7], [2, 5, 8]]
    assert body["alerted"] == [2, 5, 8]
    assert body["border_links"] == [[1, 2], [4, 5], [7, 8]]


def test_reconfiguration_rejects_links_outside_the_mesh(client):
    response = client.post("/api/reconfig/report", json={"kx": 3, "ky": 3, "faults": [{"src": 2, "dir": "E"}]})
    assert response.status_code == 400
    response = client.post("/api/reconfig/report", json={"kx": 3, "ky": 3, "initiator": 9})
    assert response.status_code == 400
    response = client.post("/api/reconfig/report", json={"kx": 3, "ky": 3, "faults": [{"src": 0, "dir": "Q"}]})
    assert response.status_code == 422


def test_dependency_check(client):
    response = client.post(
        "/api/reconfig/cdg",
        json={"kx": 3, "ky": 3, "faults": FIG2_FAULTS[:1], "variant": "h_o1turn", "include_dot": True},
    )
    assert response.status_code == 200
    body = response.json()
    assert body["acyclic"]
    assert body["witness"] == []
    assert body["vertices"] == (24 - 2) * 3
    assert body["dot"].startswith("digraph cdg {")


def test_dependency_check_needs_enough_vcs(client):
    response = client.post("/api/reconfig/cdg", json={"kx": 3, "ky": 3, "variant": "h_xy", "vcs": 1})
    assert response.status_code == 400


def test_point(client):
    response = client.post("/api/experiments/point", json={"config": SMALL_CONFIG, "rate": 0.05, "seed": 0})
    assert response.status_code == 200
    body = response.json()
    assert body["variant"] == "h_xy"
    assert body["avg_latency"] >= 14
    assert body["completed_fraction"] == 1.0


def test_point_rejects_an_invalid_config(client):
    config = dict(SMALL_CONFIG, vcs=1)
    response = client.post("/api/experiments/point", json={"config": config, "rate": 0.05})
    assert response.status_code == 422


def test_sweep_is_stored_and_exported(client):
    response = client.post("/api/experiments/sweep", json={"config": SMALL_CONFIG})
    assert response.status_code == 200
    run = response.json()
    assert run["kind"] == "sweep"
    assert run["status"] == "done"
    assert [p["seed"] for p in run["points"]] == ["0", "1", "mean"]

    fetched = client.get(f"/api/experiments/{run['id']}")
    assert fetched.status_code == 200
    assert fetched.json()["points"] == run["points"]

    exported = client.get(f"/api/experiments/{run['id']}/csv")
    assert exported.status_code == 200
    assert exported.headers["content-type"].startswith("text/csv")
    lines = exported.text.splitlines()
    assert lines[0].startswith("variant,vcs,fault_count,placement,pattern,rate,seed")
    assert len(lines) == 4
    assert lines[3].split(",")[6] == "mean"


def test_exported_csv_matches_the_command_line_sweep(client, tmp_path):
    run = client.post("/api/experiments/sweep", json={"config": SMALL_CONFIG}).json()
    exported = client.get(f"/api/experiments/{run['id']}/csv").text
    out = tmp_path / "sweep.csv"
    sweep_and_emit(ExperimentConfig(**SMALL_CONFIG), out)
    assert exported == out.read_text()


def test_unknown_run(client):
    assert client.get("/api/experiments/999999").status_code == 404


def test_dynamic(client):
    config = {
        "kx": 3, "ky": 3, "seeds": [0], "warmup_cycles": 0, "measure_cycles": 1000, "drain_cycles": 2000,
        "traffic": {"rate": 0.05}, "dynamic_fault_cycle": 500, "dynamic_faults": 2,
        "dynamic_post_cycles": 1000, "bin_cycles": 250,
    }
    response = client.post("/api/experiments/dynamic", json={"config": config, "seed": 0})
    assert response.status_code == 200
    body = response.json()
    assert body["resume_cycle"] == 500 + 81
    assert body["bins"][0]["start_cycle"] == 0


def test_migrations_resolve_from_the_project_config():
    config = Config(str(Path(__file__).resolve().parents[1] / "alembic.ini"))
    script = ScriptDirectory.from_config(config)
    assert script.get_current_head() == "3c1e7a9d2b40"
    assert config.get_main_option("sqlalchemy.url").startswith("sqlite:///")

import pytest
from httpx import ASGITransport, AsyncClient

from main import app
from src.api import simulate
from src.conf import messages
from src.conf.config import settings

points = {"x": [0.0, 0.4, 1.0, 1.3, 2.0], "y": [0.1, 0.5, 1.5, 2.5, 3.0, 0.9]}

sim_payload = {
    "population": {
        "name": "zero",
        "cost": "zero",
        "P": {"atoms": [0.0, 1.0], "weights": [0.5, 0.5]},
        "Q": {"atoms": [2.0, 3.0], "weights": [0.5, 0.5]},
    },
    "n": 2,
    "m": 2,
    "reps": 1,
    "targets": [{"kind": "cost"}],
    "workers": 1,
}


@pytest.fixture
def fresh_limiter():
    simulate.limiter.reset()
    yield simulate.limiter
    simulate.limiter.reset()


def test_healthchecker(client):
    response = client.get("/api/healthchecker")
    assert response.status_code == 200
    assert response.json() == {"message": messages.SERVICE_HEALTHY, "version": settings.TOOL_VERSION}


@pytest.mark.parametrize("origin, allowed", [(settings.CORS_ORIGINS[0], True), ("http://localhost:63342", False)])
def test_cors_origins_come_from_settings(client, origin, allowed):
    response = client.options(
        "/api/solve", headers={"Origin": origin, "Access-Control-Request-Method": "POST"}
    )
    assert (response.headers.get("access-control-allow-origin") == origin) is allowed


def test_solve(client):
    response = client.post("/api/solve", json={**points, "plan": True})
    assert response.status_code == 200
    data = response.json()
    assert data["report"]["converged"] is True
    assert len(data["plan"]) == 5
    assert len(data["plan"][0]) == 6


def test_solve_unknown_cost(client):
    response = client.post("/api/solve", json={**points, "cost": "cosine"})
    assert response.status_code == 422
    assert response.json() == {"error": "unknown cost 'cosine'"}


def test_solve_rejects_bad_epsilon(client):
    response = client.post("/api/solve", json={**points, "eps": 0})
    assert response.status_code == 422


def test_ci_cost(client):
    response = client.post("/api/ci", json={**points, "target": "cost"})
    assert response.status_code == 200
    data = response.json()
    assert data["converged"] is True
    assert data["ci"]["lower"] <= data["estimate"] <= data["ci"]["upper"]
    assert data["variance"]["method"] == "cost"


def test_ci_missing_eta(client):
    response = client.post("/api/ci", json={**points, "target": "cond", "x0": [0.0]})
    assert response.status_code == 400
    assert response.json()["detail"] == messages.MISSING_TARGET_OPTION.format(target="cond", option="eta")


def test_ci_invalid_eta(client):
    response = client.post("/api/ci", json={**points, "target": "plan", "eta": "sideways"})
    assert response.status_code == 422
    assert response.json() == {"error": messages.INVALID_ETA_SPEC.format(spec="sideways")}


def test_ci_not_converged(client, monkeypatch):
    monkeypatch.setattr(settings, "SINKHORN_MAX_ITER", 1)
    response = client.post("/api/ci", json={**points, "target": "sinkhorn"})
    assert response.status_code == 200
    assert response.json()["converged"] is False
    assert response.json()["ci"] is None


def test_coloc(client):
    response = client.post("/api/coloc", json={**points, "thresholds": [0.5, 2.0], "level": 0.9})
    assert response.status_code == 200
    data = response.json()
    assert data["level"] == 0.9
    assert 0 <= data["values"][0] <= data["values"][1] <= 1


def test_coloc_unsorted(client):
    response = client.post("/api/coloc", json={**points, "thresholds": [2.0, 0.5]})
    assert response.status_code == 422
    assert response.json() == {"error": messages.UNSORTED_THRESHOLDS}


def test_coloc_not_converged(client, monkeypatch):
    monkeypatch.setattr(settings, "SINKHORN_MAX_ITER", 1)
    response = client.post("/api/coloc", json={**points, "thresholds": [0.5]})
    assert response.status_code == 422
    assert "did not converge" in response.json()["detail"]


def test_simulate(client, fresh_limiter):
    response = client.post("/api/simulate", json=sim_payload)
    assert response.status_code == 200
    assert response.json()["targets"]["cost"]["coverage"] == 1.0


def test_simulate_rate_limit(client, fresh_limiter):
    codes = [client.post("/api/simulate", json=sim_payload).status_code for _ in range(6)]
    assert codes[:5] == [200] * 5
    assert codes[5] == 429


@pytest.mark.asyncio
async def test_solve_async():
    async with AsyncClient(transport=ASGITransport(app=app), base_url="http://test") as ac:
        response = await ac.post("/api/solve", json=points)
    assert response.status_code == 200
    assert len(response.json()["f"]) == 5

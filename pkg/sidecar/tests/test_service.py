"""Wire protocol behavior of the HTTP service."""

import threading
import time

import pytest
from fastapi.testclient import TestClient

from embed_sidecar import SidecarConfig, create_app

from conftest import build_backend


def test_embed_contract(client):
    response = client.post(
        "/embed", json={"model": "tiny-test", "text": "iron", "pooling": "whole_input"}
    )
    assert response.status_code == 200
    payload = response.json()
    assert payload["model"] == "tiny-test"
    assert payload["dim"] == 32
    assert len(payload["values"]) == 32
    assert all(isinstance(value, float) for value in payload["values"])


def test_embed_is_deterministic_over_the_wire(client):
    body = {"model": "tiny-test", "text": "economy of Ireland"}
    first = client.post("/embed", json=body).json()
    second = client.post("/embed", json=body).json()
    assert first["values"] == second["values"]


def test_span_request(client):
    response = client.post(
        "/embed",
        json={
            "model": "tiny-test",
            "text": "ferromagnet iron",
            "pooling": "target_span",
            "span": [12, 16],
        },
    )
    assert response.status_code == 200
    whole = client.post(
        "/embed", json={"model": "tiny-test", "text": "ferromagnet iron"}
    )
    assert response.json()["values"] != whole.json()["values"]


def test_empty_text_is_served(client):
    response = client.post("/embed", json={"model": "tiny-test", "text": ""})
    assert response.status_code == 200
    assert len(response.json()["values"]) == 32


def test_bad_span_is_400(client):
    for span in ([0, 99], [3, 3], [2], "0:4"):
        response = client.post(
            "/embed",
            json={
                "model": "tiny-test",
                "text": "iron",
                "pooling": "target_span",
                "span": span,
            },
        )
        assert response.status_code == 400, span
        assert response.json()["error"].startswith("bad_span:"), span


def test_span_without_target_pooling_is_400(client):
    response = client.post(
        "/embed", json={"model": "tiny-test", "text": "iron", "span": [0, 2]}
    )
    assert response.status_code == 400
    assert response.json()["error"].startswith("bad_span:")


def test_span_overlapping_no_tokens_is_empty_output(client):
    response = client.post(
        "/embed",
        json={
            "model": "tiny-test",
            "text": "a b",
            "pooling": "target_span",
            "span": [1, 2],
        },
    )
    assert response.status_code == 422
    assert response.json()["error"].startswith("empty_model_output:")


def test_malformed_requests_are_400(client):
    response = client.post(
        "/embed",
        content=b"{not json",
        headers={"Content-Type": "application/json"},
    )
    assert response.status_code == 400
    assert response.json()["error"].startswith("bad_json:")

    assert client.post("/embed", json={"model": "m"}).status_code == 400
    assert client.post("/embed", json={"text": 3}).status_code == 400
    assert (
        client.post("/embed", json={"text": "x", "pooling": "max"}).status_code == 400
    )
    assert client.post("/embed", json=[1, 2]).status_code == 400


def test_health_when_ready(client):
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json() == {"model": "tiny-test", "dim": 32, "status": "ready"}


def test_loading_then_ready():
    gate = threading.Event()

    def slow_loader():
        gate.wait(timeout=10)
        return build_backend()

    app = create_app(SidecarConfig(model_id="tiny-test"), loader=slow_loader)
    with TestClient(app) as client:
        health = client.get("/health")
        assert health.status_code == 503
        assert health.json()["status"] == "loading"
        embed = client.post("/embed", json={"text": "iron"})
        assert embed.status_code == 503
        assert embed.json()["error"].startswith("model_loading:")

        gate.set()
        deadline = time.monotonic() + 10
        while client.get("/health").status_code != 200:
            assert time.monotonic() < deadline, "backend never became ready"
            time.sleep(0.01)
        assert client.post("/embed", json={"text": "iron"}).status_code == 200


def test_failed_load_reports_reason():
    def broken_loader():
        raise RuntimeError("weights corrupted")

    app = create_app(SidecarConfig(model_id="tiny-test"), loader=broken_loader)
    with TestClient(app) as client:
        deadline = time.monotonic() + 10
        while client.get("/health").status_code == 503:
            assert time.monotonic() < deadline
            time.sleep(0.01)
        health = client.get("/health")
        assert health.status_code == 500
        assert "weights corrupted" in health.json()["error"]
        embed = client.post("/embed", json={"text": "iron"})
        assert embed.status_code == 500
        assert embed.json()["error"].startswith("inference_error:")


def test_concurrent_requests_all_succeed(client):
    results = []

    def hit():
        response = client.post("/embed", json={"text": "economy of Japan"})
        results.append((response.status_code, tuple(response.json()["values"])))

    threads = [threading.Thread(target=hit) for _ in range(8)]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
    assert len(results) == 8
    assert all(status == 200 for status, _ in results)
    assert len({values for _, values in results}) == 1  # identical under contention

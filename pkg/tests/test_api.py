"""HTTP contract over the service: endpoints, status codes, byte-exactness."""

import json

import pytest
from fastapi.testclient import TestClient

from docstruct.api import create_app
from docstruct.incremental import TrainConfig
from docstruct.service import DocumentService

FAST_TRAIN = TrainConfig(max_steps=60, eval_every=15, patience=3, seed=0)


@pytest.fixture()
def client(tmp_path):
    service = DocumentService(tmp_path / "data", train=FAST_TRAIN, base_docs=6)
    with TestClient(create_app(service)) as c:
        yield c
    service.close()


PAYLOAD = {
    "proposals": [
        {"class": "table", "bbox": [0.0, 0.0, 300.0, 120.0], "score": 0.95},
        {"class": "cell", "bbox": [20.0, 20.0, 120.0, 50.0], "score": 0.9},
        {"class": "cell", "bbox": [180.0, 20.0, 280.0, 50.0], "score": 0.9},
        {"class": "text_block", "bbox": [0.0, 200.0, 400.0, 240.0], "score": 0.8},
    ]
}


def _ingest(client):
    resp = client.post("/documents", json=PAYLOAD)
    assert resp.status_code == 201
    return resp.json()["page_id"]


class TestDocuments:
    def test_ingest_then_layout(self, client):
        page_id = _ingest(client)
        resp = client.get(f"/documents/{page_id}/layout")
        assert resp.status_code == 200
        assert resp.headers["content-type"].startswith("application/json")
        layout = resp.json()
        assert layout["page_id"] == page_id

    def test_layout_bytes_identical_across_calls(self, client):
        page_id = _ingest(client)
        a = client.get(f"/documents/{page_id}/layout").content
        b = client.get(f"/documents/{page_id}/layout").content
        assert a == b

    def test_unknown_page_404(self, client):
        assert client.get("/documents/page-999999/layout").status_code == 404

    def test_bad_payload_400(self, client):
        resp = client.post("/documents", json={"proposals": [{"class": "cell"}]})
        assert resp.status_code == 400
        assert "fields" in resp.json()


class TestCorrections:
    def test_submit_and_reflect(self, client):
        page_id = _ingest(client)
        record = {
            "operator": "alice",
            "edits": [{"action": "relabel", "target": [1], "label": "handwriting"}],
            "timestamp": "2026-08-08T00:00:00Z",
        }
        resp = client.post(f"/documents/{page_id}/corrections", json=record)
        assert resp.status_code == 200
        body = resp.json()
        assert body["status"] == "reviewed"
        layout = client.get(f"/documents/{page_id}/layout").json()
        assert any(r["class"] == "handwriting" for r in layout["regions"])

    def test_dangling_reference_400(self, client):
        page_id = _ingest(client)
        record = {
            "operator": "alice",
            "edits": [{"action": "delete", "target": [42]}],
        }
        resp = client.post(f"/documents/{page_id}/corrections", json=record)
        assert resp.status_code == 400

    def test_unknown_page_404(self, client):
        resp = client.post(
            "/documents/page-424242/corrections",
            json={"operator": "a", "edits": [{"action": "delete", "target": [0]}]},
        )
        assert resp.status_code == 404


class TestTraining:
    def test_noop_without_staged(self, client):
        resp = client.post("/train/incremental")
        assert resp.status_code == 200
        assert resp.json()["status"] == "no_op"

    def test_full_training_round(self, client):
        page_id = _ingest(client)
        client.post(
            f"/documents/{page_id}/corrections",
            json={
                "operator": "alice",
                "edits": [{"action": "relabel", "target": [1], "label": "table"}],
            },
        )
        resp = client.post("/train/incremental")
        job = resp.json()
        assert job["status"] == "completed"
        assert client.get(f"/train/jobs/{job['job_id']}").json() == job
        model = client.get("/models/current").json()
        assert model["version"] == job["model_version"]

    def test_unknown_job_404(self, client):
        assert client.get("/train/jobs/job-404").status_code == 404

    def test_no_model_404(self, client):
        assert client.get("/models/current").status_code == 404

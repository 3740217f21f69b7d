import numpy as np
import pytest
from fastapi.testclient import TestClient

from rangecf.features import Feature, FeatureSpace, NormalRange, generate_synthetic
from rangecf.metrics import PercentileTable
from rangecf.models import RuleClassifier, ThresholdLiteral, synthetic_rule_classifier
from rangecf.service import ServiceBundle, create_app

WALKTHROUGH = [0.3, 0.3, -0.5, 0.2]


@pytest.fixture(scope="module")
def client(synthetic_space):
    bundle = ServiceBundle(
        classifier=synthetic_rule_classifier(),
        space=synthetic_space,
        percentiles=PercentileTable.fit(generate_synthetic(500, seed=0).rows),
    )
    return TestClient(create_app(bundle))


@pytest.fixture(scope="module")
def six_feature_client():
    space = FeatureSpace(tuple(Feature(f"f{i}", NormalRange(lower=1.0)) for i in range(6)))
    clf = RuleClassifier(
        [
            [ThresholdLiteral(0, 0.5)],
            [ThresholdLiteral(2, 0.5), ThresholdLiteral(3, 0.5)],
            [ThresholdLiteral(4, 0.5), ThresholdLiteral(5, 0.5)],
        ]
    )
    return TestClient(create_app(ServiceBundle(classifier=clf, space=space)))


def test_unloaded_service_returns_503():
    client = TestClient(create_app(None))
    assert client.get("/api/schema").status_code == 503
    assert client.post("/api/predict", json={"instance": [1, 2]}).status_code == 503


def test_schema_endpoint(client, synthetic_space):
    resp = client.get("/api/schema")
    assert resp.status_code == 200
    body = resp.json()
    assert [f["name"] for f in body["features"]] == list(synthetic_space.names)
    assert body["features"][0]["lower"] == 0.55
    assert body["features"][0]["upper"] is None
    assert body["features"][0]["percentiles"]["p50"] is not None
    assert body["threshold"] == 0.5


def test_predict_partitions(client):
    resp = client.post("/api/predict", json={"instance": [1.0, 1.0, 1.0, 1.0]})
    assert resp.status_code == 200
    assert resp.json()["partition"]["abnormal"] == []

    resp = client.post("/api/predict", json={"instance": WALKTHROUGH})
    body = resp.json()
    assert body["partition"]["abnormal"] == [1, 2, 3, 4]
    assert body["label"] == 0


def test_predict_rejects_bad_input(client):
    assert client.post("/api/predict", json={"instance": [1.0, 2.0]}).status_code == 400
    assert (
        client.post("/api/predict", json={"instance": [1.0, 2.0, float("nan"), 0.0]}).status_code
        == 400
    )
    assert client.post("/api/predict", json={}).status_code == 400


def test_explain_baseline(client):
    resp = client.post("/api/explain", json={"instance": WALKTHROUGH})
    assert resp.status_code == 200
    body = resp.json()
    assert body["status"] == "complete"
    assert sorted(e["changed_indices"] for e in body["explanations"]) == [[1], [2, 3]]
    first = body["explanations"][0]
    assert first["endpoints"] == {"1": 0.55}


def test_explain_immutable_excludes_feature(client):
    resp = client.post(
        "/api/explain",
        json={"instance": WALKTHROUGH, "constraints": {"immutable": [1]}},
    )
    body = resp.json()
    assert [e["changed_indices"] for e in body["explanations"]] == [[2, 3]]


def test_explain_exclusive_pair(six_feature_client):
    resp = six_feature_client.post(
        "/api/explain",
        json={
            "instance": [0.0] * 6,
            "constraints": {"clauses": [[-3, -4], [3, 4]]},
        },
    )
    body = resp.json()
    assert body["explanations"]
    for e in body["explanations"]:
        assert len(set(e["changed_indices"]) & {3, 4}) == 1


def test_explain_contradictory_clauses(six_feature_client):
    resp = six_feature_client.post(
        "/api/explain",
        json={"instance": [0.0] * 6, "constraints": {"clauses": [[1], [-1]]}},
    )
    body = resp.json()
    assert resp.status_code == 200
    assert body["status"] == "infeasible"
    assert body["model_calls"] == 0


def test_explain_rejects_invalid_constraints(client):
    resp = client.post(
        "/api/explain",
        json={"instance": WALKTHROUGH, "constraints": {"causal_edges": [[1, 2], [2, 1]]}},
    )
    assert resp.status_code == 400
    resp = client.post(
        "/api/explain",
        json={"instance": WALKTHROUGH, "constraints": {"immutable": [99]}},
    )
    assert resp.status_code == 400
    resp = client.post("/api/explain", json={"instance": WALKTHROUGH, "method": "dice"})
    assert resp.status_code == 400


def test_explain_statelessness(client):
    request = {"instance": WALKTHROUGH, "constraints": {"immutable": [1]}}
    first = client.post("/api/explain", json=request)
    second = client.post("/api/explain", json=request)
    assert first.content == second.content


def test_explanations_revalidate_through_predict(client):
    resp = client.post("/api/explain", json={"instance": WALKTHROUGH})
    for e in resp.json()["explanations"]:
        check = client.post("/api/predict", json={"instance": e["cfe"]})
        assert check.json()["probability"] >= 0.5


def test_brute_method_agrees(client):
    a = client.post("/api/explain", json={"instance": WALKTHROUGH, "method": "minsat"}).json()
    b = client.post("/api/explain", json={"instance": WALKTHROUGH, "method": "brute"}).json()
    key = lambda body: sorted(e["changed_indices"] for e in body["explanations"])
    assert key(a) == key(b)

import json
import urllib.error
import urllib.request

import pytest

from conftest import package_pipeline

from sciunit.api import ApiServer
from sciunit.container import canonical_json
from sciunit.reuse import build_sub_container, load_provenance
from sciunit.summarizer import summarize


@pytest.fixture(scope="module")
def served(tmp_path_factory):
    base = tmp_path_factory.mktemp("api")
    unit, manifest = package_pipeline(base)
    server = ApiServer(unit, port=0, backend="portable").start()
    yield unit, manifest, f"http://127.0.0.1:{server.port}"
    server.shutdown()


def get(url):
    with urllib.request.urlopen(url, timeout=30) as resp:
        return resp.status, resp.read()


def post(url, payload):
    req = urllib.request.Request(
        url, data=json.dumps(payload).encode(), method="POST",
        headers={"Content-Type": "application/json"})
    with urllib.request.urlopen(req, timeout=120) as resp:
        return resp.status, resp.read()


class TestApi:
    def test_executions_listing(self, served):
        unit, manifest, base = served
        status, body = get(f"{base}/api/executions")
        assert status == 200
        data = json.loads(body)
        assert data["sciunit"] == unit.name
        assert data["executions"][0]["execution_id"] == manifest.execution_id
        assert data["executions"][0]["ordinal"] == "e1"

    def test_graph_summary_matches_library_export(self, served):
        unit, manifest, base = served
        status, body = get(f"{base}/api/graph/e1?view=summary")
        assert status == 200
        graph, _ = load_provenance(unit, manifest.execution_id)
        expected = canonical_json(summarize(graph).to_json()).encode()
        assert body == expected

    def test_graph_replete_matches_library_export(self, served):
        unit, manifest, base = served
        status, body = get(f"{base}/api/graph/{manifest.execution_id}?view=replete")
        graph, _ = load_provenance(unit, manifest.execution_id)
        assert body == canonical_json(graph.to_json()).encode()

    def test_unknown_execution_404(self, served):
        _, _, base = served
        with pytest.raises(urllib.error.HTTPError) as exc:
            get(f"{base}/api/graph/e9")
        assert exc.value.code == 404

    def test_unknown_endpoint_404(self, served):
        _, _, base = served
        with pytest.raises(urllib.error.HTTPError) as exc:
            get(f"{base}/api/nothing")
        assert exc.value.code == 404

    def test_expand_group_reveals_members_and_session_persists(self, served):
        unit, manifest, base = served
        _, before = get(f"{base}/api/graph/e1?view=summary")
        data = json.loads(before)
        expandable = [n for n in data["nodes"] if n["conceal_count"] > 0]
        assert expandable
        target = expandable[0]["id"]
        _, after = post(f"{base}/api/expand", {"id": "e1", "node_id": target})
        after_data = json.loads(after)
        assert len(after_data["nodes"]) > len(data["nodes"])
        # session state: a later GET returns the expanded view
        _, again = get(f"{base}/api/graph/e1?view=summary")
        assert again == after

    def test_expand_unknown_node_404(self, served):
        _, _, base = served
        with pytest.raises(urllib.error.HTTPError) as exc:
            post(f"{base}/api/expand", {"id": "e1", "node_id": "ghost"})
        assert exc.value.code == 404

    def test_plan_matches_library_call(self, served, tmp_path):
        unit, manifest, base = served
        graph, _ = load_provenance(unit, manifest.execution_id)
        violation = next(n.id for n in graph.nodes.values()
                         if n.ntype == "process" and "calc_violation" in n.label)
        status, body = post(f"{base}/api/plan",
                            {"id": "e1", "selected": [violation]})
        assert status == 200
        plan, _ = build_sub_container({violation}, manifest.execution_id,
                                      unit, tmp_path / "w")
        assert body == canonical_json(plan.to_json()).encode()

    def test_repeat_streams_report(self, served):
        unit, manifest, base = served
        status, body = post(f"{base}/api/repeat", {"id": "e1"})
        assert status == 200
        lines = [json.loads(l) for l in body.decode().splitlines()]
        assert lines[0]["event"] == "started"
        report = lines[-1]["report"]
        assert lines[-1]["event"] == "report"
        assert report["exit_status"] == 0
        assert report["outputs_matched"] is True

    def test_partial_repeat_via_api(self, served):
        unit, manifest, base = served
        graph, _ = load_provenance(unit, manifest.execution_id)
        violation = next(n.id for n in graph.nodes.values()
                         if n.ntype == "process" and "calc_violation" in n.label)
        status, body = post(f"{base}/api/repeat",
                            {"id": "e1", "selected": [violation]})
        report = json.loads(body.decode().splitlines()[-1])["report"]
        assert report["exit_status"] == 0
        assert [c for c in report["commands_run"]] == [
            ["sh", "calc_violation.sh"], ["sh", "gen_model.sh"]]

    def test_fallback_index_served(self, served):
        _, _, base = served
        status, body = get(f"{base}/")
        assert status == 200
        assert b"sciunit" in body

    def test_expand_everything_then_leaves_are_noops(self, served):
        # runs last: drives the session view all the way to replete
        unit, manifest, base = served
        while True:
            _, body = get(f"{base}/api/graph/e1?view=summary")
            nodes = json.loads(body)["nodes"]
            expandable = [n for n in nodes if n["expandable"]]
            if not expandable:
                break
            post(f"{base}/api/expand",
                 {"id": "e1", "node_id": expandable[0]["id"]})
        graph, _ = load_provenance(unit, manifest.execution_id)
        _, before = get(f"{base}/api/graph/e1?view=summary")
        data = json.loads(before)
        assert {n["id"] for n in data["nodes"]} == set(graph.nodes)
        assert data["expansion_map"] == []
        leaf = data["nodes"][0]["id"]
        status, after = post(f"{base}/api/expand", {"id": "e1", "node_id": leaf})
        assert status == 200
        assert after == before

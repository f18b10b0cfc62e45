import json
import threading
import urllib.request

import numpy as np
import numpy.testing as npt
import pytest

from graphextract.oracle import Oracle, OracleConfig
from graphextract.service import (
    OracleServer,
    RemoteQueryError,
    fetch_meta,
    graph_to_request,
    query_remote,
)


@pytest.fixture()
def served(sage_target):
    oracle = Oracle(sage_target, OracleConfig(response_type="prediction"))
    with OracleServer(oracle, port=0) as server:
        yield server, oracle


class TestWireRoundTrip:
    def test_bit_identical_to_in_process(self, sage_target, synth_parts, served):
        server, _ = served
        _, query, _ = synth_parts
        local = Oracle(sage_target, OracleConfig(response_type="prediction"))
        r_local = local.respond(query, query.nodes)
        r_wire = query_remote(server.address,
                              graph_to_request(query, query.nodes, "prediction"))
        npt.assert_array_equal(r_local.matrix, r_wire.matrix)
        npt.assert_array_equal(r_local.node_order, r_wire.node_order)

    def test_meta_endpoint(self, served, synth_parts):
        server, oracle = served
        meta = fetch_meta(server.address)
        assert meta == {"num_classes": oracle.num_classes,
                        "embedding_size": oracle.embedding_size,
                        "budget_remaining": None}

    def test_unknown_response_type_is_400(self, served, synth_parts):
        server, _ = served
        _, query, _ = synth_parts
        req = graph_to_request(query, query.nodes[:3], "prediction")
        req["response_type"] = "bogus"
        with pytest.raises(RemoteQueryError) as ei:
            query_remote(server.address, req)
        assert ei.value.code == 400

    def test_mismatched_response_type_is_400(self, served, synth_parts):
        server, _ = served
        _, query, _ = synth_parts
        with pytest.raises(RemoteQueryError) as ei:
            query_remote(server.address,
                         graph_to_request(query, query.nodes[:3], "embedding"))
        assert ei.value.code == 400

    def test_missing_field_is_400(self, served):
        server, _ = served
        with pytest.raises(RemoteQueryError) as ei:
            query_remote(server.address, {"response_type": "prediction", "nodes": [0]})
        assert ei.value.code == 400
        assert "features" in ei.value.message

    def test_malformed_json_is_400(self, served):
        server, _ = served
        req = urllib.request.Request(server.address + "/query", data=b"{nope",
                                     headers={"Content-Type": "application/json"})
        with pytest.raises(urllib.error.HTTPError) as ei:
            urllib.request.urlopen(req)
        assert ei.value.code == 400
        body = json.loads(ei.value.read())
        assert body["error"]["code"] == 400

    def test_node_out_of_range_is_400(self, served, synth_parts):
        server, _ = served
        _, query, _ = synth_parts
        req = graph_to_request(query, [query.n + 3], "prediction")
        with pytest.raises(RemoteQueryError) as ei:
            query_remote(server.address, req)
        assert ei.value.code == 400

    def test_concurrent_identical_queries_identical(self, served, synth_parts):
        server, _ = served
        _, query, _ = synth_parts
        req = graph_to_request(query, query.nodes[:20], "prediction")
        results = [None] * 6

        def worker(i):
            results[i] = query_remote(server.address, req).matrix

        threads = [threading.Thread(target=worker, args=(i,)) for i in range(6)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        for m in results[1:]:
            npt.assert_array_equal(results[0], m)


class TestRequestLimits:
    def test_oversized_request_rejected(self, sage_target, synth_parts):
        _, query, _ = synth_parts
        oracle = Oracle(sage_target, OracleConfig(response_type="prediction"))
        with OracleServer(oracle, port=0, max_request_bytes=1000) as server:
            req = graph_to_request(query, query.nodes, "prediction")
            with pytest.raises(RemoteQueryError) as ei:
                query_remote(server.address, req)
            assert ei.value.code == 413

    def test_budget_maps_to_429(self, sage_target, synth_parts):
        _, query, _ = synth_parts
        oracle = Oracle(sage_target, OracleConfig(response_type="prediction", budget=4))
        with OracleServer(oracle, port=0) as server:
            with pytest.raises(RemoteQueryError) as ei:
                query_remote(server.address,
                             graph_to_request(query, query.nodes[:10], "prediction"))
            assert ei.value.code == 429
            assert "remaining" in ei.value.message

    def test_unknown_path_404(self, served):
        server, _ = served
        with pytest.raises(urllib.error.HTTPError) as ei:
            urllib.request.urlopen(server.address + "/nope")
        assert ei.value.code == 404


class TestBudgetOverWire:
    def test_distinct_node_accounting_across_requests(self, sage_target, synth_parts):
        _, query, _ = synth_parts
        oracle = Oracle(sage_target, OracleConfig(response_type="prediction", budget=30))
        with OracleServer(oracle, port=0) as server:
            query_remote(server.address,
                         graph_to_request(query, query.nodes[:20], "prediction"))
            query_remote(server.address,
                         graph_to_request(query, query.nodes[:20], "prediction"))
            assert fetch_meta(server.address)["budget_remaining"] == 10

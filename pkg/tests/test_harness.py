import filecmp
import json
import os

import pytest

from conftest import geo_doc, write_scenario
from fedmap.errors import ScenarioError
from fedmap.harness import (OracleWorld, build_world, gen_random_world, load_scenario,
                            merge_documents, run_scenario, validate_scenario)
from fedmap.harness.cli import query_main, sim_main
from fedmap.model import load_map_file, parse_map_document


def test_generator_is_byte_identical(tmp_path):
    a = gen_random_world(7, 3, 120, 1.0, str(tmp_path / "a"))
    b = gen_random_world(7, 3, 120, 1.0, str(tmp_path / "b"))
    names = sorted(os.listdir(tmp_path / "a"))
    assert names == sorted(os.listdir(tmp_path / "b"))
    match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", names, shallow=False)
    assert not mismatch and not errors
    assert os.path.basename(a) == os.path.basename(b) == "scenario.json"


def test_generated_documents_validate_and_portals_are_complete():
    docs, scenario = build_world(11, 4, 200, 1.0)
    parsed = {name: parse_map_document(d) for name, d in docs.items()}
    # the only warnings are for the far endpoints of cross-zone portal edges
    for doc in parsed.values():
        for w in doc.warnings:
            nid = w.split("'")[1]
            assert doc.nodes[nid].is_portal and not nid.startswith(f"z{doc.map_id[4:]}:")
    zones = [d for n, d in parsed.items() if n != "root.json"]
    # every way that two zones both know has both endpoints marked as portals in both
    for a in zones:
        for b in zones:
            if a is b:
                continue
            for wid in set(a.ways) & set(b.ways):
                for nid in a.ways[wid].node_ids:
                    assert a.nodes[nid].is_portal and b.nodes[nid].is_portal
    assert len(scenario["servers"]) == 5 and scenario["root"] == "root"


def test_generator_rejects_bad_arguments():
    with pytest.raises(ValueError):
        build_world(1, 0, 10, 1.0)
    with pytest.raises(ValueError):
        build_world(1, 5, 3, 1.0)
    with pytest.raises(ValueError):
        build_world(1, 2, 10, 1.5)


def test_merge_conflict_is_scenario_error():
    a = parse_map_document(geo_doc("a", [("x", 1.0, 1.0)]))
    b = parse_map_document(geo_doc("b", [("x", 1.0, 1.5)]))
    with pytest.raises(ScenarioError, match="conflicting"):
        merge_documents([a, b])
    merged = merge_documents([a, parse_map_document(geo_doc("c", [("x", 1.0, 1.0), ("y", 1.0, 1.001)]))])
    assert set(merged.nodes) == {"x", "y"}


def test_oracle_single_zone_equals_server(walk_dir):
    street = load_map_file(os.path.join(walk_dir, "street.json"))
    oracle = OracleWorld([(street, {"route", "search", "tile"})])
    from fedmap.server import Credentials, MapService, ServerConfig
    svc = MapService(street, ServerConfig("street"))
    ids = sorted(n for n in street.nodes if n in svc._snap.graph)
    for s in ids:
        for t in ids:
            assert oracle.oracle_route(s, t) == svc.route(Credentials(), s, t)


def test_duplicate_ids_are_scenario_errors(tmp_path):
    doc = geo_doc("same", [("n", 1.0, 1.0)])
    servers = [{"server_id": "a", "map": "one.json"}, {"server_id": "b", "map": "two.json"}]
    path = write_scenario(tmp_path, {"one.json": doc, "two.json": doc}, servers)
    with pytest.raises(ScenarioError, match="duplicate map_id"):
        run_scenario(path)
    with pytest.raises(ScenarioError, match="duplicate server_id"):
        validate_scenario({"servers": [{"server_id": "a", "map": "x"}] * 2, "queries": []}, ".")


@pytest.mark.parametrize("data, msg", [
    ([], "JSON object"),
    ({"servers": [], "queries": {}}, "queries"),
    ({"servers": [{"map": "x"}], "queries": []}, "servers\\[0\\]"),
    ({"servers": [], "queries": [{"type": "teleport"}]}, "queries\\[0\\]"),
    ({"servers": [], "queries": [], "root": "nobody"}, "root"),
    ({"servers": [], "queries": [], "discovery": "carrier-pigeon"}, "discovery"),
])
def test_scenario_validation(data, msg):
    with pytest.raises(ScenarioError, match=msg):
        validate_scenario(data, ".")


def test_malformed_scenario_file(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"servers": [\n oops]}')
    with pytest.raises(ScenarioError, match="bad.json:2"):
        load_scenario(str(p))


def test_report_is_deterministic(tmp_path):
    path = gen_random_world(3, 3, 100, 1.0, str(tmp_path))
    r1 = run_scenario(path, oracle=True, discovery="registry")
    r2 = run_scenario(path, oracle=True, discovery="registry")
    assert json.dumps(r1, sort_keys=True) == json.dumps(r2, sort_keys=True)
    assert r1["passed"] and r1["summary"]["oracle_diffs"] == 0
    routes = [q for q in r1["queries"] if q["type"] == "route"]
    assert len(routes) == 20 and all(q["oracle"]["diff_cm"] == 0 for q in routes if q["output"]["legs"])


def test_monotone_degradation(tmp_path):
    """Dropping portals never makes a federated route cheaper than the full-portal optimum."""
    for seed in (5, 6):
        full = load_scenario(gen_random_world(seed, 4, 150, 1.0, str(tmp_path / f"full{seed}")))
        part = load_scenario(gen_random_world(seed, 4, 150, 0.5, str(tmp_path / f"part{seed}")))
        full["queries"] = [q for q in full["queries"] if q["type"] == "route"]
        part["queries"] = [q for q in part["queries"] if q["type"] == "route"]
        rf = run_scenario(full, oracle=True, discovery="registry")
        rp = run_scenario(part, oracle=False, discovery="registry")
        for qf, qp in zip(rf["queries"], rp["queries"]):
            ref = qf["oracle"]["cost_cm"]
            got = qp["output"]["total_cost_cm"]
            if got is None:
                continue  # NoRoute is an allowed degradation
            assert ref is not None and got >= ref


def test_cli_gen_and_run(tmp_path, capsys):
    out = tmp_path / "w"
    assert sim_main(["gen", "--seed", "2", "--zones", "3", "--nodes", "100", "--out", str(out)]) == 0
    scenario = capsys.readouterr().out.strip()
    assert scenario == str(out / "scenario.json")
    report = tmp_path / "report.json"
    code = sim_main(["run", scenario, "--oracle", "--report", str(report), "--discovery", "dns"])
    err = capsys.readouterr().err
    assert code == 0
    data = json.loads(report.read_text())
    assert data["passed"] and data["summary"]["queries"] == len(err.strip().splitlines())
    assert sim_main(["walkthrough"]) == 0
    assert capsys.readouterr().out.strip().endswith("scenario.json")


def test_cli_reports_scenario_errors(tmp_path, capsys):
    p = tmp_path / "s.json"
    p.write_text("[]")
    assert sim_main(["run", str(p)]) == 2
    assert "scenario error" in capsys.readouterr().err


def test_cli_failed_expectation_exits_nonzero(tmp_path, walk_dir):
    data = json.load(open(os.path.join(walk_dir, "scenario.json")))
    for s in data["servers"]:
        s["map"] = os.path.join(walk_dir, s["map"])
    data["queries"] = [{"id": "wrong", "type": "search", "keywords": ["seaweed"],
                        "center": [40.4440, -79.9470], "radius_m": 400,
                        "expect": {"map_ids": ["street"]}}]
    p = tmp_path / "s.json"
    p.write_text(json.dumps(data))
    assert sim_main(["run", str(p), "--report", str(tmp_path / "r.json")]) == 1


def test_query_cli_against_dns_frontend(tmp_path, walk_dir, capsys):
    from fedmap.discovery import DnsFrontend
    from fedmap.harness import Deployment
    dep = Deployment(load_scenario(os.path.join(walk_dir, "scenario.json")), discovery="registry")
    with dep, DnsFrontend(dep.registry) as dns:
        host, port = dns.address
        base = ["--dns", f"{host}:{port}", "--root", dep.handles["street"].endpoint]
        assert query_main(base + ["discover", "40.4443,-79.944", "--service", "search"]) == 0
        hits = json.loads(capsys.readouterr().out)
        assert {h["server_id"] for h in hits} == {"street", "grocery1"}
        assert query_main(base + ["search", "40.4440,-79.9470", "seaweed", "--radius", "400"]) == 0
        items = json.loads(capsys.readouterr().out)["items"]
        assert items[0]["node_id"] == "grocery1:shelf-4b"
        assert query_main(base + ["route", "US/PA/Pittsburgh/Forbes Ave 100",
                                  "US/PA/Pittsburgh/GroceryZone/Aisle 4/Shelf B"]) == 0
        assert json.loads(capsys.readouterr().out)["joints"] == ["grocery1:storefront"]
        assert query_main(base + ["localize", "40.4443,-79.944", "ble-1=-45", "ble-2=-78"]) == 1
        assert "NoCandidates" in capsys.readouterr().err
        assert query_main(base + ["--user", "shopper", "localize", "40.4443,-79.944",
                                  "ble-1=-45", "ble-2=-78"]) == 0
        assert json.loads(capsys.readouterr().out)["map_id"] == "grocery1"

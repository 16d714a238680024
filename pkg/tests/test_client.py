import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import geo_doc, write_scenario
from fedmap.cells import cell_from_point
from fedmap.client import LocalPrior, merge_search
from fedmap.errors import AllServersFailed, GeocodeFailed, NoCandidates, NoRoute
from fedmap.harness import Deployment, load_scenario
from fedmap.model import GeoPoint
from fedmap.server import PoseEstimate

LAT0, LON0 = 10.0, 20.0
M = 1 / 111_320.0  # one meter of latitude in degrees


def at(m_north, m_east=0.0):
    return (LON0 + m_east * M, LAT0 + m_north * M)


def box(lo_m, hi_m, pad=2.0):
    (x0, y0), (x1, y1) = at(lo_m - pad, -pad), at(hi_m + pad, pad)
    return [[x0, y0], [x1, y0], [x1, y1], [x0, y1]]


def two_zone_docs(link=True):
    """zone1: n1 -1m- n2 -2m- p1; zone2: p1 -3m- n3 (p1 shared when link is True)."""
    tag = {"shop": "tea"}
    z1 = geo_doc("zone1", [("n1", *at(0), {"addr": "n1", "shop": "green tea"}),
                           ("n2", *at(1), {"addr": "n2"}),
                           ("p1", *at(3), {"addr": "p1", **tag}, True)],
                 ways=[("w1", ["n1", "n2", "p1"])], boundary=box(0, 3), prefix="SIM/z1")
    if link:
        z2_nodes = [("p1", *at(3), {"addr": "p1", **tag}, True), ("n3", *at(6), {"addr": "n3", **tag})]
        z2_ways = [("w2", ["p1", "n3"])]
    else:
        z2_nodes = [("q1", *at(3.5), {"addr": "q1"}), ("n3", *at(6), {"addr": "n3", **tag})]
        z2_ways = [("w2", ["q1", "n3"])]
    z2 = geo_doc("zone2", z2_nodes, ways=z2_ways, boundary=box(3, 6), prefix="SIM/z2")
    root = geo_doc("root", [("root:z1", *at(0), {"addr": "z1"}), ("root:z2", *at(6), {"addr": "z2"})],
                   boundary=box(0, 6), prefix="SIM")
    return {"zone1.json": z1, "zone2.json": z2, "root.json": root}


SERVERS = [
    {"server_id": "zone1", "map": "zone1.json"},
    {"server_id": "zone2", "map": "zone2.json"},
    {"server_id": "root", "map": "root.json", "services": ["geocode"], "priority": 50},
]


def deploy(tmp_path, docs, servers, **extra):
    extra.setdefault("discovery", "registry")
    path = write_scenario(tmp_path, docs, servers, root=extra.pop("root", "root"), **extra)
    return Deployment(load_scenario(path))


@pytest.fixture(scope="module")
def two_zone(tmp_path_factory):
    with deploy(tmp_path_factory.mktemp("two"), two_zone_docs(), SERVERS) as dep:
        dep.build_oracle()
        yield dep


def test_two_zone_route(two_zone):
    path = two_zone.client.federated_route("SIM/z1/n1", "SIM/z2/n3")
    assert [(leg.map_id, leg.path.nodes) for leg in path.legs] == [
        ("zone1", ("n1", "n2", "p1")), ("zone2", ("p1", "n3"))]
    assert path.total_cost == 6.0 and path.joints() == ["p1"]
    assert path.total_cost_cm == sum(leg.path.cost_cm for leg in path.legs)
    assert path.total_cost_cm == two_zone.oracle.oracle_route("SIM/z1/n1", "SIM/z2/n3").cost_cm


def test_single_zone_route_equals_server_route(two_zone):
    path = two_zone.client.federated_route("SIM/z1/n1", "SIM/z1/n2")
    assert len(path.legs) == 1
    direct = two_zone.client.server(two_zone.handles["zone1"].endpoint).route("n1", "n2")
    assert path.legs[0].path.to_dict() == direct["result"]


def test_route_between_points(two_zone):
    lon, lat = at(0)
    path = two_zone.client.federated_route(GeoPoint(lat, lon), "SIM/z2/n3")
    assert path.total_cost == 6.0
    with pytest.raises(GeocodeFailed):
        two_zone.client.federated_route("SIM/z9/nowhere", "SIM/z2/n3")


def test_geocode_examples(two_zone):
    c = two_zone.client
    assert [(x.map_id, x.node_id) for x in c.federated_geocode("SIM/z1/n2")] == [("zone1", "n2")]
    assert [(x.map_id, x.node_id) for x in c.federated_geocode("SIM/z2")] == [("root", "root:z2")]
    assert c.federated_geocode("ELSEWHERE/x") == []
    # a bare label the root cannot place resolves nowhere
    assert sorted(x.map_id for x in c.federated_geocode("p1")) == []
    assert sorted(x.map_id for x in c.federated_geocode("SIM/z1/p1")) == ["zone1"]


def test_discover_servers_filters_and_overlap(two_zone):
    lon, lat = at(3)
    p = GeoPoint(lat, lon)
    ids = {h.record.server_id for h in two_zone.client.discover_servers(p=p, service="route")}
    assert ids == {"zone1", "zone2"}
    ids = {h.record.server_id for h in two_zone.client.discover_servers(p=p, service="geocode")}
    assert "root" in ids
    assert two_zone.client.discover_servers(p=GeoPoint(-40, -40), service="route") == []


def test_search_split_equals_centralized(two_zone):
    lon, lat = at(3)
    center = GeoPoint(lat, lon)
    res = two_zone.client.federated_search(["tea"], center, 50)
    ref = two_zone.oracle.oracle_search(["tea"], center, 50)
    assert [(r["node_id"], r["score"]) for r in res.items] == \
        [(r["node_id"], r["score"]) for r in ref]
    # p1 sits at the center; n1 and n3 are both about 3 m away
    assert res.items[0]["node_id"] == "p1" and {r["node_id"] for r in res.items} == {"p1", "n1", "n3"}
    assert not res.degraded


def test_tiles_idempotent_and_match_oracle(two_zone):
    lon, lat = at(3)
    cells = [cell_from_point(GeoPoint(lat, lon), lvl) for lvl in (14, 18, 21)]
    a = two_zone.client.federated_tiles(cells)
    b = two_zone.client.federated_tiles(cells)
    assert a.features == b.features and not a.failures
    want = set()
    for cell in cells:
        want |= {f["id"] for f in two_zone.oracle.oracle_tile(cell)["features"]}
    assert set(a.feature_ids()) == want
    assert {"way:w1", "way:w2", "node:p1"} <= want


def test_no_route_between_disconnected_zones(tmp_path):
    with deploy(tmp_path, two_zone_docs(link=False), SERVERS) as dep:
        with pytest.raises(NoRoute):
            dep.client.federated_route("SIM/z1/n1", "SIM/z2/n3")


def test_search_survives_one_server_down(tmp_path):
    with deploy(tmp_path, two_zone_docs(), SERVERS) as dep:
        dep.handles["zone2"].stop()
        lon, lat = at(3)
        res = dep.client.federated_search(["tea"], GeoPoint(lat, lon), 50)
        assert res.degraded and [w["server_id"] for w in res.warnings] == ["zone2"]
        assert [r["node_id"] for r in res.items] == ["p1", "n1"]
        dep.handles["zone1"].stop()
        with pytest.raises(AllServersFailed):
            dep.client.federated_search(["tea"], GeoPoint(lat, lon), 50)
        with pytest.raises(AllServersFailed):
            dep.client.federated_search(["tea"], GeoPoint(-40, -40), 50)


def fp_world(tmp_path, level_a=16, level_b=16, b_offset_m=500.0, b_exact=True, a_exact=False):
    fp = {"rssi:b1": "-40", "rssi:b2": "-70"}
    near = {"rssi:b1": "-42", "rssi:b2": "-70"}
    a = geo_doc("mapA", [("a1", *at(0), fp if a_exact else near)], boundary=box(0, 600))
    b = geo_doc("mapB", [("b1", *at(b_offset_m), fp if b_exact else near)], boundary=box(0, 600))
    servers = [{"server_id": "A", "map": "mapA.json", "registration_level": level_a},
               {"server_id": "B", "map": "mapB.json", "registration_level": level_b}]
    path = write_scenario(tmp_path, {"mapA.json": a, "mapB.json": b}, servers, discovery="registry")
    return Deployment(load_scenario(path))


def test_localize_motion_bound(tmp_path):
    with fp_world(tmp_path) as dep:
        lon, lat = at(0)
        coarse = GeoPoint(lat, lon)
        cues = {"b1": -40, "b2": -70}
        # without a prior the exact match at B wins
        assert dep.client.federated_localize(cues, coarse).server_id == "B"
        prior = LocalPrior(PoseEstimate("geo", at(0), 1.0), max_speed=2.0, timestamp=dep.clock())
        dep.clock.advance(2.0)
        res = dep.client.federated_localize(cues, coarse, prior)
        assert res.server_id == "A" and res.discarded == ("B",)
        assert prior.last == res.pose
        dep.clock.advance(1.0)
        prior.last = PoseEstimate("geo", at(300), 1.0)
        with pytest.raises(NoCandidates):
            dep.client.federated_localize(cues, coarse, prior)


def test_localize_tie_breaks_on_depth(tmp_path):
    # both exact matches; walk-up starts at the client level (16), so B at 16 is deeper than A at 12
    with fp_world(tmp_path, level_a=12, level_b=16, b_offset_m=0.5, a_exact=True) as dep:
        lon, lat = at(0)
        a = dep.client.federated_localize({"b1": -40, "b2": -70}, GeoPoint(lat, lon))
        assert a.server_id == "B" and a.pose.confidence == 1.0 and a.level == 16
    with fp_world(tmp_path, b_exact=False, b_offset_m=0.5) as dep:
        lon, lat = at(0)
        res = dep.client.federated_localize({"b1": -42, "b2": -70}, GeoPoint(lat, lon))
        # equal confidence and depth: map_id decides
        assert res.map_id == "mapA"


def _env(map_id, items):
    return {"map_id": map_id, "frame_id": "geo", "result": items}


def _item(nid, score):
    return {"node_id": nid, "score": score, "matched": 1, "distance": 0.0}


@settings(max_examples=50)
@given(st.randoms(use_true_random=False))
def test_merge_search_permutation_invariant(rnd):
    responses = []
    for s in range(4):
        items = [_item(f"n{rnd.randint(0, 12)}", rnd.choice([0.5, 0.25, 1.0, 0.1]))
                 for _ in range(rnd.randint(0, 6))]
        responses.append((f"s{s}", _env(f"m{s}", items)))
    want = merge_search(responses, 7)
    for perm in itertools.islice(itertools.permutations(responses), 24):
        assert merge_search(list(perm), 7) == want
    assert len(want) <= 7


def test_merge_search_order_and_dedup():
    out = merge_search([("a", _env("m2", [_item("x", 0.5), _item("p", 1.0)])),
                        ("b", _env("m1", [_item("p", 1.0), _item("y", 0.5)]))], 10)
    assert [(r["map_id"], r["node_id"]) for r in out] == [("m1", "p"), ("m1", "y"), ("m2", "x")]
    rng = random.Random(1)
    assert merge_search([], rng.randint(1, 5)) == []

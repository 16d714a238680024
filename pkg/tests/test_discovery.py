import logging
import random
import socket
import struct

import dns.flags
import dns.message
import dns.query
import dns.rcode
import pytest

from fedmap.cells import cell_bounds, cell_from_point, cell_to_domain, cover_polygon
from fedmap.discovery import (DnsFrontend, DnsSource, MapServerRecord, NameRegistry,
                              RegistrySource, Resolver, SimClock, deregister, export_zone_file,
                              import_zone_file, lookup_records, register_zone, resolve_via_dns)
from fedmap.discovery.dnswire import answer_query, build_query, parse_message
from fedmap.errors import NameOutsideSuffix, ResolutionFailure
from fedmap.geometry import point_in_polygon
from fedmap.model import GeoPoint

NE_RECT = [(10, 10), (20, 10), (20, 20), (10, 20)]


def rec(sid="A", pri=10, ttl=300, svc=("search", "route"), loc=()):
    return MapServerRecord(sid, f"http://{sid.lower()}.example:8000", frozenset(svc),
                           frozenset(loc), pri, ttl)


def test_record_text_form():
    r = rec("A", 3, loc=("beacon-fingerprint",))
    text = r.to_text()
    assert text == "v=of1;id=A;ep=http://a.example:8000;svc=route,search;loc=beacon-fingerprint;pri=3"
    assert MapServerRecord.from_text(text, 300) == r
    with pytest.raises(ValueError):
        MapServerRecord.from_text("v=of2;id=A;ep=x;svc=route;loc=;pri=1", 1)
    with pytest.raises(ValueError):
        MapServerRecord("A", "x", frozenset())
    with pytest.raises(ValueError):
        MapServerRecord("", "x", frozenset({"route"}))


def test_register_zone_examples():
    reg = NameRegistry("maps.test")
    assert register_zone(reg, NE_RECT, rec("A"), 1) == ["3.maps.test"]
    register_zone(reg, NE_RECT, rec("A"), 1)
    assert lookup_records(reg, "3.maps.test") == [rec("A")]
    register_zone(reg, NE_RECT, rec("B"), 1)
    assert [r.server_id for r in lookup_records(reg, "3.maps.test")] == ["A", "B"]


def test_exact_name_lookup():
    reg = NameRegistry("maps.test")
    register_zone(reg, NE_RECT, rec("A"), 1)
    assert lookup_records(reg, "3.maps.test.") == [rec("A")]
    assert lookup_records(reg, "0.3.maps.test") == []
    assert lookup_records(reg, "maps.test") == []
    with pytest.raises(NameOutsideSuffix):
        lookup_records(reg, "3.other.test")


def test_deregister():
    reg = NameRegistry("maps.test")
    register_zone(reg, NE_RECT, rec("A"), 1)
    register_zone(reg, NE_RECT, rec("A"), 1)
    assert deregister(reg, "A") == 1
    assert deregister(reg, "nobody") == 0
    res = Resolver(RegistrySource(reg), SimClock())
    assert res.discover(GeoPoint(15, 15), 1) == []
    assert reg.names() == []


def test_sibling_cells_never_interfere():
    reg = NameRegistry("maps.test")
    rng = random.Random(5)
    for _ in range(200):
        level = rng.randint(1, 12)
        c = cell_from_point(GeoPoint(rng.uniform(-89, 89), rng.uniform(-179, 179)), level)
        reg.add(cell_to_domain(c, "maps.test"), rec("S" + "".join(map(str, c.digits))))
        for sib in c.parent().children():
            if sib != c:
                names = {r.server_id for r in reg.lookup(cell_to_domain(sib, "maps.test"))}
                assert "S" + "".join(map(str, c.digits)) not in names


def test_discover_examples():
    # grocery-sized polygon near the walkthrough storefront
    poly = [(-122.0010, 37.0000), (-121.9990, 37.0000), (-121.9990, 37.0012), (-122.0010, 37.0012)]
    reg = NameRegistry("maps.test")
    level = 16
    register_zone(reg, poly, rec("A"), level)
    res = Resolver(RegistrySource(reg), SimClock())
    assert [r.server_id for r in res.discover(GeoPoint(37.0006, -122.0), level)] == ["A"]

    # a point outside the polygon but inside one of its covering cells is a bounded false positive
    cover = cover_polygon(poly, level, 4096)
    found = None
    for c in sorted(cover):
        b = cell_bounds(c)
        for fy in (0.01, 0.5, 0.99):
            for fx in (0.01, 0.5, 0.99):
                p = (b.lon_min + fx * (b.lon_max - b.lon_min), b.lat_min + fy * (b.lat_max - b.lat_min))
                if not point_in_polygon(p, poly):
                    found = p
                    break
            if found:
                break
        if found:
            break
    assert found is not None
    assert [r.server_id for r in res.discover(GeoPoint(found[1], found[0]), level)] == ["A"]

    reg2 = NameRegistry("maps.test")
    register_zone(reg2, poly, rec("Z", pri=2), level)
    register_zone(reg2, poly, rec("Y", pri=1), level)
    res2 = Resolver(RegistrySource(reg2), SimClock())
    assert [r.server_id for r in res2.discover(GeoPoint(37.0006, -122.0), level)] == ["Y", "Z"]


def test_discover_prefers_deepest_hit():
    reg = NameRegistry("maps.test")
    deep = cell_from_point(GeoPoint(15, 15), 6)
    reg.add(cell_to_domain(deep, "maps.test"), rec("B", pri=9))
    reg.add(cell_to_domain(deep.ancestor(1), "maps.test"), rec("A", pri=1))
    reg.add(cell_to_domain(deep.ancestor(0), "maps.test"), rec("B", pri=9))
    hits = Resolver(RegistrySource(reg), SimClock()).discover_hits(GeoPoint(15, 15), 6)
    assert [(h.record.server_id, h.level) for h in hits] == [("B", 6), ("A", 1)]


def test_resolver_ttl_and_negative_cache():
    reg = NameRegistry("maps.test")
    clock = SimClock()
    res = Resolver(RegistrySource(reg), clock)
    assert res.resolve("3.maps.test") == []
    reg.add("3.maps.test", rec("A", ttl=60))
    clock.advance(29.9)
    assert res.resolve("3.maps.test") == []
    clock.advance(0.2)
    assert res.resolve("3.maps.test") == [rec("A", ttl=60)]
    deregister(reg, "A")
    clock.advance(59.9)
    assert res.resolve("3.maps.test") == [rec("A", ttl=60)]
    clock.advance(0.2)
    assert res.resolve("3.maps.test") == []


def test_zone_file_roundtrip():
    reg = NameRegistry("maps.test")
    register_zone(reg, NE_RECT, rec("B", ttl=60), 4)
    register_zone(reg, NE_RECT, rec("A", loc=("beacon-fingerprint",)), 3)
    text = export_zone_file(reg)
    lines = text.splitlines()
    assert lines == sorted(lines, key=lambda ln: (list(reversed(ln.split()[0].split("."))),))
    assert lines[0].endswith('"')
    reg2 = NameRegistry("maps.test")
    assert import_zone_file(text, reg2) == len(lines)
    assert export_zone_file(reg2) == text


@pytest.fixture
def frontend():
    reg = NameRegistry("maps.test")
    with DnsFrontend(reg) as fe:
        yield reg, fe


def _dnspython_records(name, address, rdtype="TXT"):
    q = dns.message.make_query(name, rdtype)
    q.flags &= ~dns.flags.RD
    return dns.query.udp(q, address[0], port=address[1], timeout=3)


def test_dns_answers_decode_with_dnspython(frontend):
    reg, fe = frontend
    register_zone(reg, NE_RECT, rec("A", ttl=120), 1)
    resp = _dnspython_records("3.maps.test", fe.address)
    assert resp.rcode() == dns.rcode.NOERROR
    (rrset,) = resp.answer
    assert rrset.ttl == 120
    texts = [b"".join(rd.strings).decode() for rd in rrset]
    assert texts == [rec("A", ttl=120).to_text()]
    assert resolve_via_dns("3.maps.test", fe.address) == [rec("A", ttl=120)]


def test_dns_rcodes(frontend):
    _reg, fe = frontend
    assert _dnspython_records("1.maps.test", fe.address).rcode() == dns.rcode.NXDOMAIN
    assert _dnspython_records("3.maps.test", fe.address, "A").rcode() == dns.rcode.NOTIMP
    assert _dnspython_records("3.other.test", fe.address).rcode() == dns.rcode.REFUSED
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as s:
        s.settimeout(3)
        # header claims one question but the name runs off the end of the packet
        s.sendto(struct.pack("!HHHHHH", 7, 0, 1, 0, 0, 0) + b"\x05ab", fe.address)
        data, _ = s.recvfrom(512)
    msg = parse_message(data)
    assert msg["id"] == 7 and msg["rcode"] == dns.rcode.FORMERR


def test_dns_truncation_sets_tc(caplog):
    reg = NameRegistry("maps.test")
    for i in range(12):
        reg.add("3.maps.test", rec(f"server-with-a-long-identifier-{i:02d}"))
    reply = answer_query(reg, build_query("3.maps.test", qid=9))
    assert len(reply) <= 512
    resp = dns.message.from_wire(reply)
    assert resp.flags & dns.flags.TC
    assert 0 < len(list(resp.answer[0])) < 12
    with DnsFrontend(reg) as fe, caplog.at_level(logging.WARNING):
        got = resolve_via_dns("3.maps.test", fe.address)
    assert got == reg.lookup("3.maps.test")[:len(got)]
    assert "truncated" in caplog.text


def test_dns_source_through_resolver(frontend):
    reg, fe = frontend
    register_zone(reg, NE_RECT, rec("A"), 5)
    res = Resolver(DnsSource(fe.address, "maps.test"), SimClock())
    assert [r.server_id for r in res.discover(GeoPoint(15, 15), 5)] == ["A"]


def test_unreachable_frontend_raises_but_cache_answers():
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as s:
        s.bind(("127.0.0.1", 0))
        dead = s.getsockname()
    reg = NameRegistry("maps.test")
    with DnsFrontend(reg) as fe:
        register_zone(reg, NE_RECT, rec("A"), 1)
        res = Resolver(DnsSource(fe.address, "maps.test", timeout=0.3, retries=0), SimClock())
        assert res.resolve("3.maps.test") == [rec("A")]
    res.source = DnsSource(dead, "maps.test", timeout=0.2, retries=0)
    assert res.resolve("3.maps.test") == [rec("A")]
    with pytest.raises(ResolutionFailure):
        res.resolve("0.maps.test")


def test_area_discovery_sees_records_below_a_collapsed_cover_cell():
    reg = NameRegistry("maps.test")
    parent = cell_from_point(GeoPoint(50, 10), 3)
    child = parent.children()[1]
    reg.add(cell_to_domain(child, "maps.test"), rec("A"))
    b = cell_bounds(parent)
    e = 1e-9
    area = [(b.lon_min + e, b.lat_min + e), (b.lon_max - e, b.lat_min + e),
            (b.lon_max - e, b.lat_max - e), (b.lon_min + e, b.lat_max - e)]
    assert cover_polygon(area, 4, 64) == {parent}
    hits = Resolver(RegistrySource(reg), SimClock()).discover_area(area, 4)
    assert [(h.record.server_id, h.level) for h in hits] == [("A", 4)]

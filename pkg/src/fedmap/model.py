"""OSM-style map documents: nodes, ways, relations, zone boundary and frame."""
import json
import math
from dataclasses import dataclass, field
from types import MappingProxyType

from .errors import IntegrityError, ParseError
from .geometry import is_simple_polygon, meters_to_degrees, point_in_polygon

GEO = "geo"
EPS_GEO_DEG = 1e-6
EPS_LOCAL_M = 0.01


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        lat, lon = float(self.lat), float(self.lon)
        if not (math.isfinite(lat) and math.isfinite(lon)):
            raise ValueError("GeoPoint coordinates must be finite")
        if not -90.0 <= lat <= 90.0:
            raise ValueError(f"latitude out of range: {lat}")
        if not -180.0 <= lon < 180.0:
            # only wrap when needed; the modulo would round tiny in-range values
            lon = (lon + 180.0) % 360.0 - 180.0
        object.__setattr__(self, "lat", lat)
        object.__setattr__(self, "lon", lon)

    @property
    def xy(self):
        return (self.lon, self.lat)


@dataclass(frozen=True)
class Anchor:
    position: GeoPoint
    uncertainty_m: float


@dataclass(frozen=True)
class FrameRef:
    frame_id: str
    anchor: Anchor | None = None

    def __post_init__(self):
        if not self.frame_id:
            raise ValueError("frame_id must be non-empty")
        if self.frame_id == GEO and self.anchor is not None:
            raise ValueError("the geo frame carries no anchor")

    @property
    def is_geo(self):
        return self.frame_id == GEO

    @property
    def epsilon(self):
        return EPS_GEO_DEG if self.is_geo else EPS_LOCAL_M


@dataclass(frozen=True)
class MapNode:
    id: str
    x: float
    y: float
    tags: MappingProxyType = field(default_factory=lambda: MappingProxyType({}))
    is_portal: bool = False

    @property
    def position(self):
        return (self.x, self.y)


@dataclass(frozen=True)
class MapWay:
    id: str
    node_ids: tuple
    tags: MappingProxyType = field(default_factory=lambda: MappingProxyType({}))


@dataclass(frozen=True)
class Member:
    ref: str
    role: str


@dataclass(frozen=True)
class MapRelation:
    id: str
    members: tuple
    tags: MappingProxyType = field(default_factory=lambda: MappingProxyType({}))


@dataclass(frozen=True)
class MapDocument:
    map_id: str
    frame: FrameRef
    address_prefix: str
    boundary: tuple
    nodes: MappingProxyType
    ways: MappingProxyType
    relations: MappingProxyType
    warnings: tuple = ()

    @property
    def frame_id(self):
        return self.frame.frame_id

    def portals(self):
        return sorted(n.id for n in self.nodes.values() if n.is_portal)


def zone_contains(doc, p, eps=None):
    """True iff p lies inside the document boundary; edges (within eps) count as inside."""
    if not all(math.isfinite(v) for v in p):
        raise ValueError("point must be finite")
    if eps is None:
        eps = doc.frame.epsilon
    return point_in_polygon(tuple(p), doc.boundary, eps)


def _tags(raw, where):
    if raw is None:
        return MappingProxyType({})
    if not isinstance(raw, dict):
        raise ParseError(f"{where}: tags must be an object")
    for k, v in raw.items():
        if not isinstance(v, str):
            raise ParseError(f"{where}: tag {k!r} must be a string")
    return MappingProxyType(dict(raw))


def _str(obj, key, where):
    v = obj.get(key)
    if not isinstance(v, str) or not v:
        raise ParseError(f"{where}: {key!r} must be a non-empty string")
    return v


def _num(v, where):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ParseError(f"{where}: expected a finite number, got {v!r}")
    return float(v)


def _parse_frame(raw):
    if not isinstance(raw, dict):
        raise ParseError("frame must be an object")
    frame_id = _str(raw, "frame_id", "frame")
    anchor = None
    if raw.get("anchor") is not None:
        a = raw["anchor"]
        if not isinstance(a, dict):
            raise ParseError("frame.anchor must be an object")
        try:
            pos = GeoPoint(_num(a.get("lat"), "anchor.lat"), _num(a.get("lon"), "anchor.lon"))
        except ValueError as exc:
            raise ParseError(f"frame.anchor: {exc}") from None
        unc = _num(a.get("uncertainty_m"), "anchor.uncertainty_m")
        if unc < 0:
            raise ParseError("anchor.uncertainty_m must be >= 0")
        anchor = Anchor(pos, unc)
    try:
        return FrameRef(frame_id, anchor)
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def parse_map_document(data):
    """Build a validated MapDocument from already-decoded JSON data."""
    if not isinstance(data, dict):
        raise ParseError("map document must be a JSON object")
    map_id = _str(data, "map_id", "document")
    frame = _parse_frame(data.get("frame"))
    prefix = data.get("address_prefix", "")
    if not isinstance(prefix, str):
        raise ParseError("address_prefix must be a string")

    raw_boundary = data.get("boundary")
    if not isinstance(raw_boundary, list):
        raise ParseError("boundary must be a list of [x, y] pairs")
    boundary = []
    for i, v in enumerate(raw_boundary):
        if not isinstance(v, list) or len(v) != 2:
            raise ParseError(f"boundary[{i}] must be [x, y]")
        boundary.append((_num(v[0], f"boundary[{i}]"), _num(v[1], f"boundary[{i}]")))
    if len(boundary) >= 4 and boundary[0] == boundary[-1]:
        boundary.pop()

    nodes = {}
    for i, raw in enumerate(data.get("nodes", [])):
        if not isinstance(raw, dict):
            raise ParseError(f"nodes[{i}] must be an object")
        nid = _str(raw, "id", f"nodes[{i}]")
        if nid in nodes:
            raise IntegrityError(f"duplicate node id {nid!r}")
        portal = raw.get("portal", False)
        if not isinstance(portal, bool):
            raise ParseError(f"node {nid!r}: portal must be a boolean")
        nodes[nid] = MapNode(nid, _num(raw.get("x"), f"node {nid!r} x"),
                             _num(raw.get("y"), f"node {nid!r} y"),
                             _tags(raw.get("tags"), f"node {nid!r}"), portal)

    ways = {}
    for i, raw in enumerate(data.get("ways", [])):
        if not isinstance(raw, dict):
            raise ParseError(f"ways[{i}] must be an object")
        wid = _str(raw, "id", f"ways[{i}]")
        refs = raw.get("nodes")
        if not isinstance(refs, list) or not all(isinstance(r, str) for r in refs):
            raise ParseError(f"way {wid!r}: nodes must be a list of ids")
        ways[wid] = MapWay(wid, tuple(refs), _tags(raw.get("tags"), f"way {wid!r}"))

    relations = {}
    for i, raw in enumerate(data.get("relations", [])):
        if not isinstance(raw, dict):
            raise ParseError(f"relations[{i}] must be an object")
        rid = _str(raw, "id", f"relations[{i}]")
        members = []
        for m in raw.get("members", []):
            if not isinstance(m, dict):
                raise ParseError(f"relation {rid!r}: member must be an object")
            role = m.get("role", "")
            if not isinstance(role, str):
                raise ParseError(f"relation {rid!r}: role must be a string")
            members.append(Member(_str(m, "ref", f"relation {rid!r} member"), role))
        relations[rid] = MapRelation(rid, tuple(members), _tags(raw.get("tags"), f"relation {rid!r}"))

    warnings = _validate(frame, boundary, nodes, ways, relations, data, map_id)
    return MapDocument(map_id, frame, prefix, tuple(boundary), MappingProxyType(nodes),
                       MappingProxyType(ways), MappingProxyType(relations), tuple(warnings))


def _validate(frame, boundary, nodes, ways, relations, data, map_id):
    for kind, raw_list, parsed in (("way", data.get("ways", []), ways),
                                   ("relation", data.get("relations", []), relations)):
        if len(raw_list) != len(parsed):
            raise IntegrityError(f"duplicate {kind} id")
    seen = {}
    for kind, table in (("node", nodes), ("way", ways), ("relation", relations)):
        for eid in table:
            if eid in seen:
                raise IntegrityError(f"id {eid!r} used by both a {seen[eid]} and a {kind}")
            seen[eid] = kind

    if not is_simple_polygon(boundary):
        raise IntegrityError("boundary is not a simple polygon with >= 3 vertices")

    in_ways = set()
    for way in ways.values():
        if len(way.node_ids) < 2:
            raise IntegrityError(f"way {way.id!r} has fewer than 2 nodes")
        for a, b in zip(way.node_ids, way.node_ids[1:]):
            if a == b:
                raise IntegrityError(f"way {way.id!r} repeats node {a!r}")
        for ref in way.node_ids:
            if ref not in nodes:
                raise IntegrityError(f"way {way.id!r} references missing node {ref!r}")
            in_ways.add(ref)

    for node in nodes.values():
        if node.is_portal and node.id not in in_ways:
            raise IntegrityError(f"portal node {node.id!r} is not part of any way")

    for rel in relations.values():
        for m in rel.members:
            if m.ref not in seen:
                raise IntegrityError(f"relation {rel.id!r} references missing element {m.ref!r}")
    _check_relation_cycles(relations)

    warnings = []
    for node in nodes.values():
        if not point_in_polygon(node.position, boundary, frame.epsilon):
            warnings.append(f"{map_id}: node {node.id!r} lies outside the zone boundary")
    return warnings


def _check_relation_cycles(relations):
    state = {}

    def visit(rid, stack):
        state[rid] = 1
        stack.append(rid)
        for m in relations[rid].members:
            if m.ref not in relations:
                continue
            if state.get(m.ref) == 1:
                cycle = stack[stack.index(m.ref):] + [m.ref]
                raise IntegrityError("relation cycle: " + " -> ".join(cycle))
            if m.ref not in state:
                visit(m.ref, stack)
        stack.pop()
        state[rid] = 2

    for rid in relations:
        if rid not in state:
            visit(rid, [])


def load_map_document(text):
    """Parse and validate map-document JSON text."""
    try:
        data = json.loads(text)
    except (json.JSONDecodeError, TypeError) as exc:
        raise ParseError(f"malformed JSON: {exc}") from None
    return parse_map_document(data)


def load_map_file(path):
    with open(path, encoding="utf-8") as fh:
        return load_map_document(fh.read())


def document_to_dict(doc):
    frame = {"frame_id": doc.frame.frame_id}
    if doc.frame.anchor is not None:
        a = doc.frame.anchor
        frame["anchor"] = {"lat": a.position.lat, "lon": a.position.lon,
                           "uncertainty_m": a.uncertainty_m}
    nodes = []
    for n in doc.nodes.values():
        item = {"id": n.id, "x": n.x, "y": n.y, "tags": dict(n.tags)}
        if n.is_portal:
            item["portal"] = True
        nodes.append(item)
    return {
        "map_id": doc.map_id,
        "frame": frame,
        "address_prefix": doc.address_prefix,
        "boundary": [[x, y] for x, y in doc.boundary],
        "nodes": nodes,
        "ways": [{"id": w.id, "nodes": list(w.node_ids), "tags": dict(w.tags)}
                 for w in doc.ways.values()],
        "relations": [{"id": r.id, "members": [{"ref": m.ref, "role": m.role} for m in r.members],
                       "tags": dict(r.tags)} for r in doc.relations.values()],
    }


def dump_map_document(doc, indent=None):
    return json.dumps(document_to_dict(doc), indent=indent, ensure_ascii=False)


def registration_polygon(doc):
    """Geo polygon used to register a document with discovery.

    Geo documents use their boundary. Local-frame documents use the anchor
    position inflated by its uncertainty (as a lat/lon square).
    """
    if doc.frame.is_geo:
        return list(doc.boundary)
    anchor = doc.frame.anchor
    if anchor is None:
        raise IntegrityError(f"{doc.map_id}: local frame {doc.frame_id!r} has no anchor")
    dlon, dlat = meters_to_degrees(max(anchor.uncertainty_m, EPS_LOCAL_M), anchor.position.lat)
    lon, lat = anchor.position.lon, anchor.position.lat
    return [(lon - dlon, lat - dlat), (lon + dlon, lat - dlat),
            (lon + dlon, lat + dlat), (lon - dlon, lat + dlat)]

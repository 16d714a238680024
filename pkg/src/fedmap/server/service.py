"""The base location services of one map server over one immutable MapDocument."""
import math
import threading
from dataclasses import dataclass, field

from ..cells import DEFAULT_LEVEL, cell_bounds
from ..discovery.records import SERVICES, MapServerRecord
from ..errors import (FrameMismatch, NoFingerprintCoverage, NotAuthorized, ServiceNotImplemented,
                      SnapFailed, Unreachable, UnknownNode)
from ..geometry import clip_polyline, frame_distance, geo_distance_m
from ..model import GEO, load_map_file
from .auth import AuthPolicy, Credentials, authorize
from .graph import Path, RouteGraph

SNAP_RADIUS_M = 50.0
RSSI_FLOOR_DBM = -100.0
RSSI_TAG_PREFIX = "rssi:"
DEFAULT_SEARCH_CAP = 50


@dataclass
class ServerConfig:
    server_id: str
    map_path: str | None = None
    host: str = "127.0.0.1"
    port: int = 0
    policies: dict = field(default_factory=lambda: {s: AuthPolicy() for s in SERVICES})
    registration_level: int = DEFAULT_LEVEL
    search_cap: int = DEFAULT_SEARCH_CAP
    priority: int = 10
    ttl_s: int = 300
    localization_techs: frozenset = frozenset({"beacon-fingerprint"})

    def __post_init__(self):
        unknown = set(self.policies) - set(SERVICES)
        if unknown:
            raise ValueError(f"policies for unknown services: {sorted(unknown)}")
        if not self.policies:
            raise ValueError("a server must advertise at least one service")
        self.policies = {k: (v if isinstance(v, AuthPolicy) else AuthPolicy.from_dict(v))
                         for k, v in self.policies.items()}

    @property
    def services(self):
        return frozenset(self.policies)

    @classmethod
    def from_dict(cls, data, base_dir=None):
        import os

        path = data.get("map")
        if path is not None and base_dir is not None and not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        policies = data.get("services")
        if policies is None:
            policies = {s: AuthPolicy() for s in SERVICES}
        elif isinstance(policies, list):
            policies = {s: AuthPolicy() for s in policies}
        return cls(
            server_id=data["server_id"],
            map_path=path,
            host=data.get("host", "127.0.0.1"),
            port=int(data.get("port", 0)),
            policies=policies,
            registration_level=int(data.get("registration_level", DEFAULT_LEVEL)),
            search_cap=int(data.get("search_cap", DEFAULT_SEARCH_CAP)),
            priority=int(data.get("priority", 10)),
            ttl_s=int(data.get("ttl_s", 300)),
            localization_techs=frozenset(data.get("localization_techs", ["beacon-fingerprint"])),
        )

    def record(self, endpoint):
        techs = self.localization_techs if "localize" in self.policies else frozenset()
        return MapServerRecord(self.server_id, endpoint, self.services, techs,
                               self.priority, self.ttl_s)


@dataclass(frozen=True)
class PoseEstimate:
    frame_id: str
    position: tuple
    confidence: float
    heading_deg: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must be in [0, 1]")

    def to_dict(self):
        return {"frame_id": self.frame_id, "position": list(self.position),
                "heading_deg": self.heading_deg, "confidence": self.confidence}

    @classmethod
    def from_dict(cls, d):
        return cls(d["frame_id"], tuple(d["position"]), float(d["confidence"]), d.get("heading_deg"))


@dataclass(frozen=True)
class Fingerprint:
    node_id: str
    position: tuple
    rssi_by_beacon: dict


class _Snapshot:
    """Derived indices for one document; replaced as a whole on reload."""

    def __init__(self, doc):
        self.doc = doc
        self.graph = RouteGraph.from_document(doc)
        self.portals = doc.portals()
        self.fingerprints = []
        for node in doc.nodes.values():
            rssi = {}
            for k, v in node.tags.items():
                if k.startswith(RSSI_TAG_PREFIX):
                    try:
                        rssi[k[len(RSSI_TAG_PREFIX):]] = float(v)
                    except ValueError:
                        continue
            if rssi:
                self.fingerprints.append(Fingerprint(node.id, node.position, rssi))
        self.fingerprints.sort(key=lambda f: f.node_id)
        self.addresses = []
        for node in doc.nodes.values():
            addr = node.tags.get("addr")
            if addr:
                full = f"{doc.address_prefix}/{addr}" if doc.address_prefix else addr
                self.addresses.append((full, node))


class MapService:
    """One provider's services. Every public method takes credentials first and
    raises NotAuthorized on deny, ServiceNotImplemented for unadvertised services."""

    def __init__(self, doc, config):
        self.config = config
        self._snap = _Snapshot(doc)
        self._reload_lock = threading.Lock()

    @classmethod
    def from_config(cls, config):
        return cls(load_map_file(config.map_path), config)

    def reload(self, doc):
        snap = _Snapshot(doc)
        with self._reload_lock:
            self._snap = snap

    @property
    def doc(self):
        return self._snap.doc

    @property
    def map_id(self):
        return self._snap.doc.map_id

    @property
    def frame_id(self):
        return self._snap.doc.frame_id

    def check(self, service, credentials):
        policy = self.config.policies.get(service)
        if policy is None:
            raise ServiceNotImplemented(f"{self.config.server_id} does not offer {service}")
        decision = authorize(policy, credentials or Credentials())
        if not decision.allowed:
            raise NotAuthorized(decision.reason)
        return self._snap

    # -- geocoding ---------------------------------------------------------

    def geocode(self, credentials, address):
        snap = self.check("geocode", credentials)
        if not address:
            raise ValueError("address must be non-empty")
        exact = []
        suffix = []
        q = address.strip().strip("/")
        ql = q.lower()
        for full, node in snap.addresses:
            if full == q:
                exact.append((full, node))
            else:
                fl = full.lower()
                if fl == ql or fl.endswith("/" + ql):
                    suffix.append((full, node))
        out = []
        for kind, group in (("exact", exact), ("suffix", suffix)):
            for full, node in sorted(group, key=lambda fn: fn[1].id):
                out.append({"node_id": node.id, "position": [node.x, node.y],
                            "full_address": full, "match": kind})
        return out

    def reverse_geocode(self, credentials, point, radius_m):
        snap = self.check("reverse_geocode", credentials)
        if not radius_m > 0:
            raise ValueError("radius must be positive")
        hits = []
        for node in snap.doc.nodes.values():
            d = frame_distance(snap.doc.frame_id, point, node.position)
            if d <= radius_m:
                hits.append((d, node.id, node))
        hits.sort(key=lambda h: (h[0], h[1]))
        return [{"node_id": nid, "position": [n.x, n.y], "distance": d} for d, nid, n in hits]

    # -- search ------------------------------------------------------------

    def search(self, credentials, keywords, center, radius_m, center_frame=None):
        snap = self.check("search", credentials)
        keywords = [k.lower() for k in keywords if k]
        if not keywords:
            raise ValueError("at least one keyword is required")
        doc = snap.doc
        center_frame = center_frame or doc.frame_id
        if center_frame == doc.frame_id:
            def distance(node):
                return frame_distance(doc.frame_id, center, node.position)
        elif center_frame == GEO and doc.frame.anchor is not None:
            # a local map is only coarsely placed: every node sits at the anchor
            a = doc.frame.anchor.position
            anchor_d = geo_distance_m(center, (a.lon, a.lat))

            def distance(node):
                return anchor_d
        else:
            raise FrameMismatch(f"cannot search {doc.frame_id!r} with a {center_frame!r} center")
        hits = []
        for node in doc.nodes.values():
            d = distance(node)
            if d > radius_m:
                continue
            values = [v.lower() for v in node.tags.values()]
            matched = sum(1 for k in keywords if any(k in v for v in values))
            if matched:
                hits.append((-(matched / (1.0 + d)), node.id, matched, d))
        hits.sort()
        return [{"node_id": nid, "score": -neg, "matched": m, "distance": d}
                for neg, nid, m, d in hits[:self.config.search_cap]]

    # -- routing -----------------------------------------------------------

    def _resolve_endpoint(self, snap, ref):
        if isinstance(ref, str):
            if ref not in snap.doc.nodes:
                raise UnknownNode(f"{ref!r} is not in map {snap.doc.map_id}")
            if ref not in snap.graph:
                raise Unreachable(f"{ref!r} is not on any way")
            return ref
        point = tuple(ref)
        best = None
        for nid in snap.graph.vertices():
            d = frame_distance(snap.doc.frame_id, point, snap.doc.nodes[nid].position)
            if best is None or (d, nid) < best:
                best = (d, nid)
        if best is None or best[0] > SNAP_RADIUS_M:
            raise SnapFailed(f"no route node within {SNAP_RADIUS_M} m of {point}")
        return best[1]

    def route(self, credentials, src, dst):
        snap = self.check("route", credentials)
        s = self._resolve_endpoint(snap, src)
        t = self._resolve_endpoint(snap, dst)
        paths = snap.graph.shortest_paths(s, [t])
        if t not in paths:
            raise Unreachable(f"no path from {s!r} to {t!r} in {snap.doc.map_id}")
        return paths[t]

    def portal_costs(self, credentials, entry, paths=True):
        """{portal: Path} from entry to every reachable portal, or {portal: cost_cm}
        when paths is False."""
        snap = self.check("route", credentials)
        s = self._resolve_endpoint(snap, entry)
        targets = [p for p in snap.portals if p in snap.graph]
        if not targets:
            return {}
        found = (snap.graph.shortest_paths if paths else snap.graph.distances)(s, targets)
        return {p: found[p] for p in targets if p in found}

    def portal_matrix(self, credentials, entries):
        """Batched portal_costs over node-id entries: {entry: {portal: cost_cm}}.
        Unknown entries map to None."""
        snap = self.check("route", credentials)
        targets = [p for p in snap.portals if p in snap.graph]
        out = {}
        for e in entries:
            if e not in snap.doc.nodes:
                out[e] = None
            elif e not in snap.graph or not targets:
                out[e] = {}
            else:
                found = snap.graph.distances(e, targets)
                out[e] = {p: found[p] for p in targets if p in found}
        return out

    def portals(self, credentials):
        snap = self.check("route", credentials)
        return [{"node_id": p, "position": list(snap.doc.nodes[p].position)} for p in snap.portals]

    # -- localization ------------------------------------------------------

    def localize(self, credentials, beacon_rssi):
        snap = self.check("localize", credentials)
        if not beacon_rssi:
            raise ValueError("at least one beacon reading is required")
        cue = {k: float(v) for k, v in beacon_rssi.items()}
        best = None
        for fp in snap.fingerprints:
            if not (cue.keys() & fp.rssi_by_beacon.keys()):
                continue
            d = rssi_distance(cue, fp.rssi_by_beacon)
            if best is None or (d, fp.node_id) < (best[0], best[1].node_id):
                best = (d, fp)
        if best is None:
            raise NoFingerprintCoverage("no fingerprint shares a beacon with the cue")
        d, fp = best
        return PoseEstimate(snap.doc.frame_id, fp.position, 1.0 / (1.0 + d))

    # -- tiles -------------------------------------------------------------

    def render_tile(self, credentials, cell):
        snap = self.check("tile", credentials)
        doc = snap.doc
        bounds = cell_bounds(cell)
        rect = bounds.rect
        features = []
        if doc.frame.is_geo:
            xmin, ymin, xmax, ymax = rect
            for node in doc.nodes.values():
                if xmin <= node.x <= xmax and ymin <= node.y <= ymax:
                    features.append(_node_feature(node, doc, node.position))
            for way in doc.ways.values():
                pts = [doc.nodes[n].position for n in way.node_ids]
                pieces = clip_polyline(pts, rect)
                if pieces:
                    features.append({"id": f"way:{way.id}", "kind": "way", "map_id": doc.map_id,
                                     "frame_id": doc.frame_id, "tags": dict(way.tags),
                                     "geometry": [[list(p) for p in piece] for piece in pieces]})
        elif _rect_meets_disc(rect, doc.frame.anchor):
            for node in doc.nodes.values():
                features.append(_node_feature(node, doc, node.position))
            for way in doc.ways.values():
                pts = [list(doc.nodes[n].position) for n in way.node_ids]
                features.append({"id": f"way:{way.id}", "kind": "way", "map_id": doc.map_id,
                                 "frame_id": doc.frame_id, "tags": dict(way.tags),
                                 "geometry": [pts]})
        return {"cell": cell.token, "frame_id": doc.frame_id, "features": features}


def _rect_meets_disc(rect, anchor):
    if anchor is None:
        return False
    xmin, ymin, xmax, ymax = rect
    a = anchor.position
    nearest = (min(max(a.lon, xmin), xmax), min(max(a.lat, ymin), ymax))
    return geo_distance_m((a.lon, a.lat), nearest) <= anchor.uncertainty_m


def _node_feature(node, doc, pos):
    return {"id": f"node:{node.id}", "kind": "node", "map_id": doc.map_id,
            "frame_id": doc.frame_id, "tags": dict(node.tags), "geometry": list(pos)}


def rssi_distance(cue, fingerprint):
    keys = cue.keys() | fingerprint.keys()
    return math.sqrt(sum((cue.get(k, RSSI_FLOOR_DBM) - fingerprint.get(k, RSSI_FLOOR_DBM)) ** 2
                         for k in keys))


__all__ = ["MapService", "ServerConfig", "PoseEstimate", "Path", "rssi_distance"]

"""Client-side federation: discovery, fan-out, ranking and stitching across map servers."""
import heapq
import logging
import math
import ssl
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import httpx

from .. import errors
from ..cells import DEFAULT_LEVEL, CellId, cell_from_point
from ..discovery.resolver import descendants_at
from ..geometry import frame_distance, meters_to_degrees
from ..model import GEO, GeoPoint
from ..server.auth import Credentials
from ..server.graph import Path
from ..server.service import PoseEstimate
from .transport import DEFAULT_RETRIES, DEFAULT_TIMEOUT_S, ServerClient

log = logging.getLogger(__name__)

DEFAULT_TECH = "beacon-fingerprint"
TILE_MAX_PROBES = 4096
_MATCH_RANK = {"exact": 0, "suffix": 1}
_FAILURES = (errors.ServerUnavailable, errors.NotAuthorized, errors.ServiceNotImplemented,
             errors.RemoteError)


@dataclass(frozen=True)
class GeocodeCandidate:
    map_id: str
    server_id: str
    endpoint: str
    frame_id: str
    node_id: str
    position: tuple
    full_address: str
    match: str
    coarse: GeoPoint | None

    def to_dict(self):
        return {"map_id": self.map_id, "server_id": self.server_id, "frame_id": self.frame_id,
                "node_id": self.node_id, "position": list(self.position),
                "full_address": self.full_address, "match": self.match,
                "coarse": None if self.coarse is None else [self.coarse.lat, self.coarse.lon]}


@dataclass
class SearchResult:
    items: list
    warnings: list = field(default_factory=list)

    @property
    def degraded(self):
        return bool(self.warnings)


@dataclass(frozen=True)
class Leg:
    map_id: str
    frame_id: str
    path: Path

    def to_dict(self):
        return {"map_id": self.map_id, "frame_id": self.frame_id, **self.path.to_dict()}


@dataclass(frozen=True)
class StitchedPath:
    legs: tuple
    total_cost_cm: int

    @property
    def total_cost(self):
        return self.total_cost_cm / 100.0

    def joints(self):
        return [leg.path.nodes[-1] for leg in self.legs[:-1]]

    def to_dict(self):
        return {"legs": [leg.to_dict() for leg in self.legs], "total_cost": self.total_cost,
                "total_cost_cm": self.total_cost_cm, "joints": self.joints()}


@dataclass
class LocalPrior:
    last: PoseEstimate | None = None
    max_speed: float = 2.0
    timestamp: float = 0.0

    def __post_init__(self):
        if not self.max_speed > 0:
            raise ValueError("max_speed must be positive")


@dataclass(frozen=True)
class LocalizationResult:
    pose: PoseEstimate
    map_id: str
    server_id: str
    level: int
    discarded: tuple = ()

    def to_dict(self):
        return {"pose": self.pose.to_dict(), "map_id": self.map_id, "server_id": self.server_id,
                "level": self.level, "discarded": list(self.discarded)}


@dataclass
class TileComposition:
    features: dict
    local_features: dict
    failures: dict

    def feature_ids(self):
        return sorted({fid for _mid, fid in self.features})


@dataclass
class _RouteEnd:
    node_id: str
    server_id: str
    coarse: GeoPoint


_SSL_CONTEXT = None


def _ssl_context():
    # loading the CA bundle is slow; one verified context serves every session
    global _SSL_CONTEXT
    if _SSL_CONTEXT is None:
        _SSL_CONTEXT = ssl.create_default_context()
    return _SSL_CONTEXT


class FederationClient:
    """One logical client session: owns a resolver, an HTTP pool and per-session caches."""

    def __init__(self, resolver, level=DEFAULT_LEVEL, root_endpoint=None, credentials=None,
                 clock=None, search_cap=50, timeout=DEFAULT_TIMEOUT_S, retries=DEFAULT_RETRIES,
                 max_workers=8):
        self.resolver = resolver
        self.level = level
        self.root_endpoint = root_endpoint
        self._credentials = credentials if credentials is not None else Credentials()
        self.clock = clock or time.monotonic
        self.search_cap = search_cap
        self.timeout = timeout
        self.retries = retries
        self.http = httpx.Client(limits=httpx.Limits(max_keepalive_connections=32),
                                 verify=_ssl_context())
        self._pool = ThreadPoolExecutor(max_workers=max_workers)
        self._portal_cache = {}
        self._portal_list_cache = {}
        self._root_id = None
        self._root_cache = {}
        self._meta_cache = {}
        self._cells_cache = {}

    def close(self):
        self._pool.shutdown(wait=False)
        self.http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def credentials_for(self, server_id):
        if isinstance(self._credentials, dict):
            return self._credentials.get(server_id, self._credentials.get("*", Credentials()))
        return self._credentials

    def server(self, record_or_endpoint, server_id=None):
        if isinstance(record_or_endpoint, str):
            endpoint = record_or_endpoint
        else:
            endpoint = record_or_endpoint.endpoint
            server_id = record_or_endpoint.server_id
        return ServerClient(endpoint, self.credentials_for(server_id), self.http, self.timeout,
                            self.retries)

    # -- discovery ---------------------------------------------------------

    def discover_servers(self, p=None, area=None, service=None, level=None, tech=None):
        """Ranked DiscoveryHits at a point or over a polygon, filtered by service."""
        level = self.level if level is None else level
        if p is not None:
            hits = self.resolver.discover_hits(p, level)
        elif area is not None:
            hits = self.resolver.discover_area(area, level)
        else:
            raise ValueError("need a point or an area")
        if service is not None:
            hits = [h for h in hits if h.record.offers(service)]
        if tech is not None:
            hits = [h for h in hits if tech in h.record.localization_techs]
        return hits

    def _discover_disc(self, p, radius_m, service):
        dlon, dlat = meters_to_degrees(radius_m, p.lat)
        lat_lo, lat_hi = max(-90.0, p.lat - dlat), min(90.0, p.lat + dlat)
        box = [(p.lon - dlon, lat_lo), (p.lon + dlon, lat_lo),
               (p.lon + dlon, lat_hi), (p.lon - dlon, lat_hi)]
        if dlon >= 180.0:
            return self.discover_servers(p=p, service=service, level=0)
        return self.discover_servers(area=box, service=service)

    def _fan_out(self, hits, fn):
        """Run fn(hit) for each hit concurrently; returns [(hit, result | exception)] in hit order."""
        def run(hit):
            try:
                return fn(hit)
            except _FAILURES + (errors.FedMapError,) as exc:
                return exc
        if len(hits) <= 1:
            results = [run(h) for h in hits]
        else:
            results = list(self._pool.map(run, hits))
        return list(zip(hits, results))

    # -- geocode -----------------------------------------------------------

    def federated_geocode(self, address):
        if not address or not address.strip("/ "):
            raise ValueError("address must be non-empty")
        if self.root_endpoint is None:
            raise errors.RootUnavailable("no root server configured")
        root = self.server(self.root_endpoint)
        labels = [lbl for lbl in address.strip().strip("/").split("/") if lbl]
        coarse = None
        candidates = []
        for k in range(len(labels), 0, -1):
            prefix = "/".join(labels[:k])
            env = self._root_cache.get(prefix)
            if env is None:
                try:
                    env = root.geocode(prefix)
                except errors.ServerUnavailable as exc:
                    raise errors.RootUnavailable(str(exc)) from exc
                except errors.NotAuthorized as exc:
                    raise errors.RootUnavailable(f"root denied geocode: {exc.reason}") from exc
                # the root's coarse index is near-static; keep it for the session
                self._root_cache[prefix] = env
            if not env["result"]:
                continue
            if env["frame_id"] != GEO:
                raise errors.RootUnavailable("root server must use the geo frame")
            x, y = env["result"][0]["position"]
            coarse = GeoPoint(y, x)
            if k == len(labels):
                if self._root_id is None:
                    self._root_id = root.info()["result"]["server_id"]
                candidates.extend(self._candidates(env, self._root_id, self.root_endpoint, coarse))
            break
        if coarse is None:
            return []
        hits = self.discover_servers(p=coarse, service="geocode")
        hits = [h for h in hits if h.record.endpoint.rstrip("/") != self.root_endpoint.rstrip("/")]
        for hit, res in self._fan_out(hits, lambda h: self.server(h.record).geocode(address)):
            if isinstance(res, Exception):
                log.warning("geocode at %s failed: %s", hit.record.server_id, res)
                continue
            candidates.extend(self._candidates(res, hit.record.server_id, hit.record.endpoint, coarse))
        seen = set()
        out = []
        for c in sorted(candidates, key=lambda c: (_MATCH_RANK[c.match], c.map_id, c.node_id)):
            if (c.map_id, c.node_id) in seen:
                continue
            seen.add((c.map_id, c.node_id))
            out.append(c)
        return out

    @staticmethod
    def _candidates(env, server_id, endpoint, coarse):
        out = []
        for r in env["result"]:
            pos = tuple(r["position"])
            c = GeoPoint(pos[1], pos[0]) if env["frame_id"] == GEO else coarse
            out.append(GeocodeCandidate(env["map_id"], server_id, endpoint, env["frame_id"],
                                        r["node_id"], pos, r["full_address"], r["match"], c))
        return out

    # -- search ------------------------------------------------------------

    def federated_search(self, keywords, p, radius_m):
        keywords = [k for k in keywords if k]
        if not keywords:
            raise ValueError("at least one keyword is required")
        hits = self._discover_disc(p, radius_m, "search")
        if not hits:
            raise errors.AllServersFailed("no discovered server offers search")

        def ask(hit):
            return self.server(hit.record).search(keywords, p.lon, p.lat, radius_m, frame_id=GEO)

        responses = []
        warnings = []
        for hit, res in self._fan_out(hits, ask):
            if isinstance(res, Exception):
                warnings.append({"server_id": hit.record.server_id, "error": type(res).__name__})
            else:
                responses.append((hit.record.server_id, res))
        if not responses:
            raise errors.AllServersFailed(f"every search server failed: {warnings}")
        return SearchResult(merge_search(responses, self.search_cap), warnings)

    # -- routing -----------------------------------------------------------

    def _route_end(self, spec):
        if isinstance(spec, GeoPoint):
            for hit in self.discover_servers(p=spec, service="route"):
                srv = self.server(hit.record)
                try:
                    env = srv.route((spec.lon, spec.lat), (spec.lon, spec.lat))
                except _FAILURES + (errors.SnapFailed, errors.Unreachable, errors.UnknownNode):
                    continue
                if env["frame_id"] != GEO:
                    continue
                return _RouteEnd(env["result"]["nodes"][0], hit.record.server_id, spec)
            raise errors.GeocodeFailed(f"no route server can snap {spec}")
        cands = self.federated_geocode(spec)
        for c in cands:
            if c.coarse is not None:
                return _RouteEnd(c.node_id, c.server_id, c.coarse)
        raise errors.GeocodeFailed(f"cannot geocode {spec!r}")

    def _line_samples(self, a, b):
        cell_lat = 180.0 / (1 << self.level)
        cell_lon = 360.0 / (1 << self.level)
        n = math.ceil(max(abs(b.lat - a.lat) / (cell_lat / 2.0),
                          abs(b.lon - a.lon) / (cell_lon / 2.0), 1.0))
        return [GeoPoint(a.lat + (b.lat - a.lat) * i / n, a.lon + (b.lon - a.lon) * i / n)
                for i in range(n + 1)]

    def _portals(self, server_id, srv):
        if server_id not in self._portal_list_cache:
            env = srv.portals()
            self._portal_list_cache[server_id] = (env["map_id"], env["frame_id"], env["result"])
        return self._portal_list_cache[server_id]

    def _fill_costs(self, server_id, srv, entries):
        missing = [e for e in entries if (server_id, e) not in self._portal_cache]
        if not missing:
            return
        env = srv.portal_matrix(missing)
        for e in missing:
            row = env["result"].get(e)
            self._portal_cache[(server_id, e)] = None if row is None else \
                {p: int(c) for p, c in row.items()}

    def _portal_cells(self, server_id, srv):
        key = (server_id, self.level)
        if key not in self._cells_cache:
            _mid, frame_id, portals = self._portals(server_id, srv)
            cells = set()
            if frame_id == GEO:
                for p in portals:
                    x, y = p["position"]
                    cells.add(cell_from_point(GeoPoint(y, x), self.level))
            self._cells_cache[key] = sorted(cells)
        return self._cells_cache[key]

    def route_servers(self, s, t, expand=True):
        """Route-capable servers along the straight line s->t, then (optionally)
        every server discovered at the geo position of a known portal."""
        cells = []
        seen_cells = set()
        for pt in self._line_samples(s.coarse, t.coarse):
            c = cell_from_point(pt, self.level)
            if c not in seen_cells:
                seen_cells.add(c)
                cells.append(c)
        servers = {}
        for hit in self.resolver.discover_cells(cells):
            if hit.record.offers("route"):
                servers[hit.record.server_id] = hit.record
        for end in (s, t):
            if end.server_id not in servers:
                for hit in self.discover_servers(p=end.coarse, service="route"):
                    servers.setdefault(hit.record.server_id, hit.record)
        if not expand:
            return servers
        frontier = list(servers)
        probed = set()
        while frontier:
            sid = frontier.pop()
            try:
                portal_cells = self._portal_cells(sid, self.server(servers[sid]))
            except _FAILURES as exc:
                log.warning("portal list from %s failed: %s", sid, exc)
                continue
            new_cells = []
            for c in portal_cells:
                if c not in probed:
                    probed.add(c)
                    new_cells.append(c)
            for hit in self.resolver.discover_cells(new_cells):
                if hit.record.offers("route") and hit.record.server_id not in servers:
                    servers[hit.record.server_id] = hit.record
                    frontier.append(hit.record.server_id)
        return servers

    def _server_meta(self, sid, rec):
        """(map_id, frame_id, {portal: {portal: cost_cm}}) for one server, cached per session."""
        if sid not in self._meta_cache:
            srv = self.server(rec)
            map_id, frame_id, portals = self._portals(sid, srv)
            ids = [p["node_id"] for p in portals]
            self._fill_costs(sid, srv, ids)
            adj = {}
            for e in ids:
                row = self._portal_cache.get((sid, e))
                if row:
                    adj[e] = {p: c for p, c in row.items() if p != e}
            self._meta_cache[sid] = (map_id, frame_id, adj)
        return self._meta_cache[sid]

    def federated_route(self, src, dst, expand=True):
        s = self._route_end(src)
        t = self._route_end(dst)
        servers = self.route_servers(s, t, expand)

        # meta-graph over global node ids (src, dst, portals); each server
        # contributes its portal cost matrix, plus rows for src/dst it holds
        ordered = sorted(servers)
        metas = {}
        for sid, res in zip(ordered, self._pool.map(
                lambda sid: _safe(self._server_meta, sid, servers[sid]), ordered)):
            if isinstance(res, Exception):
                log.warning("route data from %s failed: %s", sid, res)
                continue
            metas[sid] = res
        extra = {}

        def add_extra(sid, u, v, cost):
            if u == v:
                return
            extra.setdefault(sid, {}).setdefault(u, {})[v] = cost
            extra[sid].setdefault(v, {})[u] = cost

        for end in (s, t):
            sid = end.server_id
            if sid not in metas or end.node_id in metas[sid][2]:
                continue
            try:
                self._fill_costs(sid, self.server(servers[sid]), [end.node_id])
            except _FAILURES + (errors.FedMapError,) as exc:
                log.warning("portal costs from %s failed: %s", sid, exc)
                continue
            for p, c in (self._portal_cache.get((sid, end.node_id)) or {}).items():
                add_extra(sid, end.node_id, p, c)
        if s.server_id == t.server_id and s.server_id in metas:
            try:
                env = self.server(servers[s.server_id]).route(s.node_id, t.node_id)
                add_extra(s.server_id, s.node_id, t.node_id, int(env["result"]["cost_cm"]))
            except errors.Unreachable:
                pass

        def neighbors(u):
            # cheapest (cost, server_id) per neighbor across every contributing server
            out = {}
            for sid in metas:
                for table in (metas[sid][2], extra.get(sid, {})):
                    for v, c in table.get(u, {}).items():
                        cur = out.get(v)
                        if cur is None or (c, sid) < cur:
                            out[v] = (c, sid)
            return out

        meta = _meta_dijkstra(neighbors, s.node_id, t.node_id)
        if meta is None:
            raise errors.NoRoute(f"no stitched route from {s.node_id!r} to {t.node_id!r}")
        hops, total = meta
        # consecutive hops served by one server become one leg; meta-path
        # optimality means the direct route there costs the same as the hops
        runs = []
        for u, v in zip(hops, hops[1:]):
            _cost, sid = neighbors(u)[v]
            if runs and runs[-1][0] == sid:
                runs[-1][2] = v
            else:
                runs.append([sid, u, v])
        legs = []
        for sid, u, v in runs:
            env = self.server(servers[sid]).route(u, v)
            path = Path.from_dict(env["result"])
            map_id, frame_id, _adj = metas[sid]
            if legs and legs[-1].map_id == map_id:
                prev = legs[-1]
                legs[-1] = Leg(map_id, frame_id,
                               Path(prev.path.nodes + path.nodes[1:], prev.path.cost_cm + path.cost_cm))
            else:
                legs.append(Leg(map_id, frame_id, path))
        if not legs:
            # src and dst are the same node
            sid = s.server_id
            env = self.server(servers[sid]).route(s.node_id, t.node_id)
            legs.append(Leg(env["map_id"], env["frame_id"], Path.from_dict(env["result"])))
        return StitchedPath(tuple(legs), sum(leg.path.cost_cm for leg in legs))

    # -- localization ------------------------------------------------------

    def federated_localize(self, cues, coarse, prior=None, tech=DEFAULT_TECH):
        if not cues:
            raise ValueError("at least one cue is required")
        hits = self.discover_servers(p=coarse, service="localize", tech=tech)
        now = self.clock()
        survivors = []
        discarded = []
        for hit, res in self._fan_out(hits, lambda h: self.server(h.record).localize(cues)):
            if isinstance(res, Exception):
                discarded.append({"server_id": hit.record.server_id, "reason": type(res).__name__})
                continue
            pose = PoseEstimate.from_dict(res["result"])
            if prior is not None and prior.last is not None and prior.last.frame_id == pose.frame_id:
                moved = frame_distance(pose.frame_id, prior.last.position, pose.position)
                if moved > prior.max_speed * max(0.0, now - prior.timestamp):
                    discarded.append({"server_id": hit.record.server_id, "reason": "motion-bound"})
                    continue
            survivors.append((pose, res["map_id"], hit.record.server_id, hit.level))
        if not survivors:
            raise errors.NoCandidates(f"no plausible localization: {discarded}")
        pose, map_id, sid, level = min(survivors, key=lambda c: (-c[0].confidence, -c[3], c[1]))
        if prior is not None:
            prior.last = pose
            prior.timestamp = now
        return LocalizationResult(pose, map_id, sid, level, tuple(d["server_id"] for d in discarded))

    # -- tiles -------------------------------------------------------------

    def _tile_hits(self, cell):
        # records may sit at any descendant down to the registration level, and
        # DNS cannot list a subtree, so probe every descendant at that level
        depth = self.level
        while depth > cell.level and 4 ** (depth - cell.level) > TILE_MAX_PROBES:
            depth -= 1
        if depth < self.level:
            log.warning("tile %s is too coarse to probe fully; probing to level %d",
                        cell.token, depth)
        if cell.level >= depth:
            return self.resolver.discover_cells([cell])
        return self.resolver.discover_cells(descendants_at(cell, depth))

    def federated_tiles(self, cells):
        cells = [c if isinstance(c, CellId) else CellId.from_token(c) for c in cells]
        if not cells:
            raise ValueError("need at least one cell")
        features = {}
        local = {}
        failures = {}
        for cell in cells:
            hits = [h for h in self._tile_hits(cell) if h.record.offers("tile")]
            hits.sort(key=lambda h: h.record.server_id)
            for hit, res in self._fan_out(hits, lambda h, c=cell: self.server(h.record).tile(c)):
                if isinstance(res, Exception):
                    failures.setdefault(cell.token, []).append(
                        {"server_id": hit.record.server_id, "error": type(res).__name__})
                    continue
                for f in res["result"]["features"]:
                    if f["frame_id"] == GEO:
                        features.setdefault((f["map_id"], f["id"]), f)
                    else:
                        local.setdefault(f["frame_id"], {}).setdefault((f["map_id"], f["id"]), f)
        return TileComposition(features, local, failures)


def _safe(fn, *args):
    try:
        return fn(*args)
    except _FAILURES as exc:
        return exc


def merge_search(responses, cap):
    """Deterministic fold over per-server responses: score desc, then (map_id, node_id).

    A node id seen from several maps (a portal) is kept once, at its best rank.
    """
    items = []
    for server_id, env in responses:
        for r in env["result"]:
            items.append({"map_id": env["map_id"], "server_id": server_id,
                          "frame_id": env["frame_id"], **r})
    items.sort(key=lambda r: (-r["score"], r["map_id"], r["node_id"]))
    out = []
    seen = set()
    for r in items:
        if r["node_id"] in seen:
            continue
        seen.add(r["node_id"])
        out.append(r)
        if len(out) >= cap:
            break
    return out


def _meta_dijkstra(neighbors, source, target):
    if source == target:
        return [source], 0
    best = {source: (0, (source,))}
    done = set()
    heap = [(0, (source,))]
    while heap:
        cost, path = heapq.heappop(heap)
        u = path[-1]
        if u in done or best[u] != (cost, path):
            continue
        done.add(u)
        if u == target:
            return list(path), cost
        for v, (w, _sid) in neighbors(u).items():
            if v in done:
                continue
            cand = (cost + w, path + (v,))
            if v not in best or cand < best[v]:
                best[v] = cand
                heapq.heappush(heap, cand)
    return None


__all__ = ["FederationClient", "GeocodeCandidate", "SearchResult", "Leg", "StitchedPath",
           "LocalPrior", "LocalizationResult", "TileComposition", "merge_search"]

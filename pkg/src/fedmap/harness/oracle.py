"""Centralized ground truth: every geo-frame document merged into one map."""
from ..errors import ScenarioError, Unreachable
from ..model import GEO, parse_map_document
from ..server.auth import AuthPolicy, Credentials
from ..server.service import DEFAULT_SEARCH_CAP, MapService, ServerConfig

ORACLE_CREDS = Credentials()


def merge_documents(docs, map_id="oracle"):
    """Id-based union of geo documents. Conflicting positions for one id are an error."""
    nodes, ways, relations = {}, {}, {}
    xs, ys = [], []
    for doc in docs:
        if not doc.frame.is_geo:
            raise ScenarioError(f"cannot merge local-frame document {doc.map_id!r}")
        for x, y in doc.boundary:
            xs.append(x)
            ys.append(y)
        for n in doc.nodes.values():
            prev = nodes.get(n.id)
            if prev is None:
                nodes[n.id] = {"id": n.id, "x": n.x, "y": n.y, "tags": dict(n.tags),
                               "portal": n.is_portal}
                continue
            if (prev["x"], prev["y"]) != (n.x, n.y):
                raise ScenarioError(f"node {n.id!r} has conflicting positions across documents")
            for k, v in n.tags.items():
                prev["tags"].setdefault(k, v)
            prev["portal"] = prev["portal"] or n.is_portal
        for w in doc.ways.values():
            prev = ways.get(w.id)
            if prev is not None and prev["nodes"] != list(w.node_ids):
                raise ScenarioError(f"way {w.id!r} differs across documents")
            ways.setdefault(w.id, {"id": w.id, "nodes": list(w.node_ids), "tags": dict(w.tags)})
        for r in doc.relations.values():
            relations.setdefault(r.id, {"id": r.id, "tags": dict(r.tags),
                                        "members": [{"ref": m.ref, "role": m.role}
                                                    for m in r.members]})
    if not xs:
        raise ScenarioError("nothing to merge")
    xmin, xmax, ymin, ymax = min(xs), max(xs), min(ys), max(ys)
    data = {"map_id": map_id, "frame": {"frame_id": GEO}, "address_prefix": "",
            "boundary": [[xmin, ymin], [xmax, ymin], [xmax, ymax], [xmin, ymax]],
            "nodes": list(nodes.values()), "ways": list(ways.values()),
            "relations": list(relations.values())}
    return parse_map_document(data)


class OracleWorld:
    """Per-service merged indices, like a centralized provider preprocessing its data.

    Only documents whose servers advertise a service feed that service's index.
    """

    def __init__(self, entries, search_cap=DEFAULT_SEARCH_CAP):
        # entries: [(MapDocument, set of advertised services)]
        self.address_index = {}
        for doc, _services in entries:
            for n in doc.nodes.values():
                addr = n.tags.get("addr")
                if addr:
                    full = f"{doc.address_prefix}/{addr}" if doc.address_prefix else addr
                    self.address_index.setdefault(full, n.id)
        self.services = {}
        for service in ("route", "search", "tile"):
            docs = [d for d, svc in entries if service in svc and d.frame.is_geo]
            if not docs:
                continue
            merged = merge_documents(docs)
            cfg = ServerConfig("oracle", policies={service: AuthPolicy()}, search_cap=search_cap)
            self.services[service] = MapService(merged, cfg)

    def has(self, service):
        return service in self.services

    def resolve(self, address):
        nid = self.address_index.get(address.strip().strip("/"))
        if nid is None:
            raise ScenarioError(f"oracle cannot resolve address {address!r}")
        return nid

    def oracle_route(self, src, dst):
        svc = self.services["route"]
        s = self.resolve(src) if isinstance(src, str) and src not in svc.doc.nodes else src
        t = self.resolve(dst) if isinstance(dst, str) and dst not in svc.doc.nodes else dst
        try:
            return svc.route(ORACLE_CREDS, s, t)
        except Unreachable:
            return None

    def oracle_search(self, keywords, center, radius_m):
        return self.services["search"].search(ORACLE_CREDS, keywords, (center.lon, center.lat),
                                              radius_m)

    def oracle_tile(self, cell):
        return self.services["tile"].render_tile(ORACLE_CREDS, cell)

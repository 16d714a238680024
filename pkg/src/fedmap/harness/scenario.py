"""Scenario files: spin up servers and discovery, run federated queries, diff against the oracle."""
import json
import os
import time

from .. import errors
from ..cells import CellId
from ..client.federation import FederationClient, LocalPrior
from ..discovery import (DnsFrontend, DnsSource, NameRegistry, RegistrySource, Resolver,
                         SimClock, register_zone)
from ..errors import ScenarioError
from ..model import GeoPoint, load_map_file, registration_polygon
from ..server.auth import Credentials
from ..server.runner import ServerHandle
from ..server.service import MapService, ServerConfig
from .oracle import OracleWorld

QUERY_TYPES = ("discover", "geocode", "search", "route", "localize", "tiles")


def load_scenario(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}: malformed JSON ({exc.msg})") from None
    except OSError as exc:
        raise ScenarioError(f"{path}: {exc}") from None
    return validate_scenario(data, os.path.dirname(os.path.abspath(path)))


def validate_scenario(data, base_dir):
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a JSON object")
    for key in ("servers", "queries"):
        if not isinstance(data.get(key), list):
            raise ScenarioError(f"field '{key}' must be a list")
    seen_servers = set()
    for i, s in enumerate(data["servers"]):
        if not isinstance(s, dict) or "server_id" not in s or "map" not in s:
            raise ScenarioError(f"servers[{i}]: needs 'server_id' and 'map'")
        if s["server_id"] in seen_servers:
            raise ScenarioError(f"servers[{i}]: duplicate server_id {s['server_id']!r}")
        seen_servers.add(s["server_id"])
    seen_q = set()
    for i, q in enumerate(data["queries"]):
        if not isinstance(q, dict) or q.get("type") not in QUERY_TYPES:
            raise ScenarioError(f"queries[{i}]: 'type' must be one of {QUERY_TYPES}")
        qid = q.setdefault("id", f"q{i}")
        if qid in seen_q:
            raise ScenarioError(f"queries[{i}]: duplicate id {qid!r}")
        seen_q.add(qid)
    root = data.get("root")
    if root is not None and root not in seen_servers:
        raise ScenarioError(f"field 'root': unknown server {root!r}")
    data.setdefault("suffix", "maps.test")
    data.setdefault("level", 16)
    data.setdefault("discovery", "dns")
    if data["discovery"] not in ("dns", "registry"):
        raise ScenarioError("field 'discovery' must be 'dns' or 'registry'")
    data["_base_dir"] = base_dir
    return data


def _credentials(raw):
    if raw is None:
        return None
    out = {}
    for sid, c in raw.items():
        out[sid] = Credentials(c.get("user_token"), c.get("app_token"))
    return out


class Deployment:
    """Running servers + registry (+ DNS frontend) + one federation client session."""

    def __init__(self, scenario, clock=None, discovery=None):
        self.scenario = scenario
        self.clock = clock or SimClock()
        self.level = int(scenario["level"])
        self.registry = NameRegistry(scenario["suffix"])
        self.services = {}
        self.handles = {}
        self.documents = {}
        self.warnings = []
        self.dns = None
        self.discovery_mode = discovery or scenario.get("discovery", "dns")
        base = scenario["_base_dir"]
        map_ids = {}
        for i, raw in enumerate(scenario["servers"]):
            cfg_data = dict(raw)
            cfg_data.setdefault("registration_level", self.level)
            try:
                cfg = ServerConfig.from_dict(cfg_data, base)
                doc = load_map_file(cfg.map_path)
            except (errors.ParseError, errors.IntegrityError, ValueError, OSError) as exc:
                raise ScenarioError(f"servers[{i}] ({raw.get('server_id')}): {exc}") from None
            if doc.map_id in map_ids:
                raise ScenarioError(f"servers[{i}]: duplicate map_id {doc.map_id!r} "
                                    f"(also served by {map_ids[doc.map_id]})")
            map_ids[doc.map_id] = cfg.server_id
            self.warnings.extend(doc.warnings)
            self.documents[cfg.server_id] = doc
            self.services[cfg.server_id] = MapService(doc, cfg)
        self.client = None
        self.oracle = None

    def start(self):
        try:
            for sid, svc in self.services.items():
                self.handles[sid] = ServerHandle(svc, svc.config.host, svc.config.port).launch()
            for h in self.handles.values():
                h.wait_started()
            for sid, svc in self.services.items():
                rec = svc.config.record(self.handles[sid].endpoint)
                register_zone(self.registry, registration_polygon(svc.doc), rec,
                              svc.config.registration_level)
            if self.discovery_mode == "dns":
                self.dns = DnsFrontend(self.registry).start()
                source = DnsSource(self.dns.address, self.registry.suffix)
            else:
                source = RegistrySource(self.registry)
            resolver = Resolver(source, clock=self.clock)
            root = self.scenario.get("root")
            self.client = FederationClient(
                resolver, level=self.level,
                root_endpoint=self.handles[root].endpoint if root else None,
                credentials=_credentials(self.scenario.get("credentials")), clock=self.clock)
        except Exception:
            self.stop()
            raise
        return self

    def build_oracle(self):
        entries = [(svc.doc, svc.config.services) for svc in self.services.values()]
        self.oracle = OracleWorld(entries)
        return self.oracle

    def stop(self):
        if self.client is not None:
            self.client.close()
        for h in self.handles.values():
            h.signal_stop()
        for h in self.handles.values():
            h.stop()
        self.handles.clear()
        if self.dns is not None:
            self.dns.stop()
            self.dns = None

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


def _point(raw, what):
    try:
        if isinstance(raw, dict):
            return GeoPoint(raw["lat"], raw["lon"])
        lat, lon = raw
        return GeoPoint(lat, lon)
    except (TypeError, ValueError, KeyError) as exc:
        raise ScenarioError(f"{what}: expected [lat, lon], got {raw!r} ({exc})") from None


def _endpoint_spec(raw, what):
    if isinstance(raw, str):
        return raw
    if isinstance(raw, dict) and "point" in raw:
        return _point(raw["point"], what)
    raise ScenarioError(f"{what}: expected an address string or {{'point': [lat, lon]}}")


class _Runner:
    def __init__(self, dep, use_oracle, wall_clock):
        self.dep = dep
        self.client = dep.client
        self.use_oracle = use_oracle
        self.timer = time.perf_counter if wall_clock else dep.clock
        self.prior = None

    def run(self, q):
        entry = {"id": q["id"], "type": q["type"], "ok": True, "checks": []}
        t0 = self.timer()
        try:
            output, oracle_part = getattr(self, "_q_" + q["type"])(q)
            entry["output"] = output
        except errors.ScenarioError:
            raise
        except errors.FedMapError as exc:
            entry["ok"] = False
            entry["error"] = {"kind": type(exc).__name__, "detail": str(exc)}
            entry["output"] = None
            oracle_part = None
        entry["latency_ms"] = round((self.timer() - t0) * 1000.0, 3)
        if oracle_part is not None:
            entry["oracle"] = oracle_part
        expect = q.get("expect")
        if expect is not None:
            entry["checks"] = _check_expectations(q, entry, expect)
        return entry

    def _q_discover(self, q):
        p = _point(q.get("point"), f"{q['id']}.point")
        hits = self.client.discover_servers(p=p, service=q.get("service"))
        return [{"server_id": h.record.server_id, "level": h.level,
                 "services": sorted(h.record.services)} for h in hits], None

    def _q_geocode(self, q):
        if not q.get("address"):
            raise ScenarioError(f"{q['id']}: 'address' is required")
        return [c.to_dict() for c in self.client.federated_geocode(q["address"])], None

    def _q_search(self, q):
        keywords = q.get("keywords")
        if not keywords:
            raise ScenarioError(f"{q['id']}: 'keywords' is required")
        center = _point(q.get("center"), f"{q['id']}.center")
        radius = float(q.get("radius_m", 300.0))
        res = self.client.federated_search(keywords, center, radius)
        out = {"items": res.items, "warnings": res.warnings}
        oracle_part = None
        if self.use_oracle and self.dep.oracle.has("search"):
            ref = self.dep.oracle.oracle_search(keywords, center, radius)
            fed = [(r["node_id"], r["score"]) for r in res.items]
            orc = [(r["node_id"], r["score"]) for r in ref]
            oracle_part = {"result": ref, "equal": fed == orc}
        return out, oracle_part

    def _q_route(self, q):
        src = _endpoint_spec(q.get("src"), f"{q['id']}.src")
        dst = _endpoint_spec(q.get("dst"), f"{q['id']}.dst")
        oracle_part = None
        try:
            stitched = self.client.federated_route(src, dst, expand=q.get("expand", True))
            out = stitched.to_dict()
        except errors.NoRoute:
            stitched = None
            out = None
        if self.use_oracle and self.dep.oracle.has("route") and isinstance(src, str) \
                and isinstance(dst, str):
            try:
                ref = self.dep.oracle.oracle_route(src, dst)
            except ScenarioError as exc:
                oracle_part = {"skipped": str(exc)}
            else:
                fed_cm = None if stitched is None else stitched.total_cost_cm
                ref_cm = None if ref is None else ref.cost_cm
                diff = None if fed_cm is None or ref_cm is None else fed_cm - ref_cm
                oracle_part = {"cost_cm": ref_cm, "diff_cm": diff,
                               "equal": fed_cm == ref_cm}
        if stitched is None:
            out = {"legs": [], "joints": [], "total_cost": None, "total_cost_cm": None,
                   "no_route": True}
        return out, oracle_part

    def _q_localize(self, q):
        cues = q.get("cues")
        if not cues:
            raise ScenarioError(f"{q['id']}: 'cues' is required")
        coarse = _point(q.get("coarse"), f"{q['id']}.coarse")
        if isinstance(self.dep.clock, SimClock) and q.get("elapsed_s"):
            self.dep.clock.advance(float(q["elapsed_s"]))
        if self.prior is None:
            self.prior = LocalPrior(max_speed=float(q.get("max_speed", 2.0)),
                                    timestamp=self.dep.clock())
        res = self.client.federated_localize(cues, coarse, self.prior)
        return res.to_dict(), None

    def _q_tiles(self, q):
        try:
            cells = [CellId.from_token(t) for t in q.get("cells", [])]
        except ValueError as exc:
            raise ScenarioError(f"{q['id']}.cells: {exc}") from None
        comp = self.client.federated_tiles(cells)
        out = {"features": sorted(comp.feature_ids()),
               "local_frames": {f: sorted(fid for _m, fid in feats)
                                for f, feats in comp.local_features.items()},
               "failures": comp.failures}
        oracle_part = None
        if self.use_oracle and self.dep.oracle.has("tile"):
            fed = {(fid, json.dumps(f["geometry"])) for (_m, fid), f in comp.features.items()}
            orc = set()
            for cell in cells:
                for f in self.dep.oracle.oracle_tile(cell)["features"]:
                    orc.add((f["id"], json.dumps(f["geometry"])))
            oracle_part = {"features": sorted(fid for fid, _g in orc), "equal": fed == orc}
        return out, oracle_part


def _check_expectations(q, entry, expect):
    out = entry.get("output")
    checks = []

    def check(name, ok, detail=""):
        checks.append({"check": name, "ok": bool(ok), "detail": detail})

    if "error" in expect:
        got = entry.get("error", {}).get("kind")
        check("error", got == expect["error"], f"got {got}")
        return checks
    if out is None:
        check("ok", False, entry.get("error", {}).get("detail", "no output"))
        return checks
    t = q["type"]
    if t == "search":
        maps = sorted({r["map_id"] for r in out["items"]})
        if "map_ids" in expect:
            check("map_ids", maps == sorted(expect["map_ids"]), f"got {maps}")
        if "top_node" in expect:
            top = out["items"][0]["node_id"] if out["items"] else None
            check("top_node", top == expect["top_node"], f"got {top}")
    elif t == "route":
        if "legs" in expect:
            check("legs", len(out["legs"]) == expect["legs"], f"got {len(out['legs'])}")
        if "joints" in expect:
            check("joints", out["joints"] == expect["joints"], f"got {out['joints']}")
        if "map_ids" in expect:
            got = [leg["map_id"] for leg in out["legs"]]
            check("map_ids", got == expect["map_ids"], f"got {got}")
        if "endpoints" in expect:
            got = [out["legs"][0]["nodes"][0], out["legs"][-1]["nodes"][-1]]
            check("endpoints", got == expect["endpoints"], f"got {got}")
    elif t == "localize":
        if "map_id" in expect:
            check("map_id", out["map_id"] == expect["map_id"], f"got {out['map_id']}")
    elif t == "geocode":
        if "node_ids" in expect:
            got = [c["node_id"] for c in out]
            check("node_ids", got == expect["node_ids"], f"got {got}")
    elif t == "discover":
        if "server_ids" in expect:
            got = [h["server_id"] for h in out]
            check("server_ids", got == expect["server_ids"], f"got {got}")
    elif t == "tiles":
        if "features_include" in expect:
            missing = sorted(set(expect["features_include"]) - set(out["features"]))
            check("features_include", not missing, f"missing {missing}")
    return checks


def run_scenario(path, oracle=None, wall_clock=False, discovery=None):
    """Run a scenario file end to end and return the report dict."""
    scenario = load_scenario(path) if isinstance(path, str) else path
    use_oracle = scenario.get("oracle", False) if oracle is None else oracle
    with Deployment(scenario, discovery=discovery) as dep:
        if use_oracle:
            dep.build_oracle()
        runner = _Runner(dep, use_oracle, wall_clock)
        results = [runner.run(q) for q in scenario["queries"]]
    violations = []
    diffs = []
    for r in results:
        for c in r["checks"]:
            if not c["ok"]:
                violations.append({"query": r["id"], **c})
        if "oracle" in r and r["oracle"].get("equal") is False:
            diffs.append(r["id"])
        if not r["ok"] and not r.get("checks"):
            violations.append({"query": r["id"], "check": "ok", "ok": False,
                               "detail": r["error"]["detail"]})
    return {
        "scenario": scenario.get("name", ""),
        "seed": scenario.get("seed"),
        "oracle": bool(use_oracle),
        "warnings": dep.warnings,
        "queries": results,
        "summary": {"queries": len(results), "violations": len(violations),
                    "oracle_diffs": len(diffs)},
        "violations": violations,
        "oracle_diffs": diffs,
        "passed": not violations and not diffs,
    }

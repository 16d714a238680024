"""Command-line entry points: ``of-sim`` (scenarios) and ``of-query`` (thin client)."""
import argparse
import json
import sys
import time

from .. import errors
from ..cells import CellId
from ..client.federation import FederationClient, LocalPrior
from ..discovery import DnsFrontend, DnsSource, Resolver
from ..model import GeoPoint
from ..server.auth import Credentials


def _dump(obj, out=None):
    text = json.dumps(obj, indent=2, sort_keys=False)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def sim_main(argv=None):
    parser = argparse.ArgumentParser(prog="of-sim", description="Run federated-map scenarios.")
    sub = parser.add_subparsers(dest="cmd", required=True)

    run = sub.add_parser("run", help="run a scenario and emit a report")
    run.add_argument("scenario")
    run.add_argument("--oracle", action="store_true", help="diff against the centralized oracle")
    run.add_argument("--report", help="write the JSON report here instead of stdout")
    run.add_argument("--wall-clock", action="store_true", help="record real latencies")
    run.add_argument("--discovery", choices=["dns", "registry"])

    gen = sub.add_parser("gen", help="generate a random world")
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--zones", type=int, required=True)
    gen.add_argument("--nodes", type=int, required=True)
    gen.add_argument("--portal-density", type=float, default=1.0)
    gen.add_argument("--out", required=True)

    serve = sub.add_parser("serve", help="keep a scenario's servers and DNS frontend running")
    serve.add_argument("scenario")
    serve.add_argument("--dns-port", type=int, default=5353)

    sub.add_parser("walkthrough", help="print the path of the packaged grocery scenario")

    args = parser.parse_args(argv)
    if args.cmd == "walkthrough":
        from ..data import walkthrough_scenario_path
        print(walkthrough_scenario_path())
        return 0
    if args.cmd == "gen":
        from .generate import gen_random_world
        print(gen_random_world(args.seed, args.zones, args.nodes, args.portal_density, args.out))
        return 0

    from .scenario import Deployment, load_scenario, run_scenario
    try:
        if args.cmd == "run":
            report = run_scenario(args.scenario, oracle=True if args.oracle else None,
                                  wall_clock=args.wall_clock, discovery=args.discovery)
            _dump(report, args.report)
            for q in report["queries"]:
                status = "ok" if q["ok"] and all(c["ok"] for c in q["checks"]) else "FAIL"
                if "oracle" in q and q["oracle"].get("equal") is False:
                    status = "DIFF"
                print(f"{status:4} {q['type']:9} {q['id']}", file=sys.stderr)
            return 0 if report["passed"] else 1
        scenario = load_scenario(args.scenario)
        # the deployment's own client uses the registry; the public frontend gets a fixed port
        dep = Deployment(scenario, clock=time.monotonic, discovery="registry")
        with dep:
            dns = DnsFrontend(dep.registry, port=args.dns_port).start()
            print(f"dns {dns.address[0]}:{dns.address[1]} suffix {dep.registry.suffix}")
            for sid, h in dep.handles.items():
                print(f"server {sid} {h.endpoint}")
            try:
                while True:
                    time.sleep(1)
            except KeyboardInterrupt:
                pass
            finally:
                dns.stop()
        return 0
    except errors.ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 2


def _latlon(text):
    lat, lon = (float(v) for v in text.split(","))
    return GeoPoint(lat, lon)


def _endpoint_arg(text):
    try:
        return _latlon(text)
    except ValueError:
        return text


def query_main(argv=None):
    parser = argparse.ArgumentParser(prog="of-query",
                                     description="Query a live federated-map deployment.")
    parser.add_argument("--dns", default="127.0.0.1:5353", help="discovery frontend host:port")
    parser.add_argument("--suffix", default="maps.test")
    parser.add_argument("--level", type=int, default=16)
    parser.add_argument("--root", help="root/world map server URL (needed for geocode/route)")
    parser.add_argument("--user", help="X-OF-User token")
    parser.add_argument("--app", help="X-OF-App token")
    sub = parser.add_subparsers(dest="cmd", required=True)

    d = sub.add_parser("discover")
    d.add_argument("point", help="lat,lon")
    d.add_argument("--service")
    g = sub.add_parser("geocode")
    g.add_argument("address")
    s = sub.add_parser("search")
    s.add_argument("point", help="lat,lon")
    s.add_argument("keywords", nargs="+")
    s.add_argument("--radius", type=float, default=300.0)
    r = sub.add_parser("route")
    r.add_argument("src", help="address or lat,lon")
    r.add_argument("dst", help="address or lat,lon")
    lz = sub.add_parser("localize")
    lz.add_argument("point", help="coarse lat,lon")
    lz.add_argument("cues", nargs="+", help="beacon=dBm")
    t = sub.add_parser("tiles")
    t.add_argument("cells", nargs="+", help="cell tokens, e.g. 2122211320100312")

    args = parser.parse_args(argv)
    host, _, port = args.dns.rpartition(":")
    resolver = Resolver(DnsSource((host, int(port)), args.suffix))
    creds = Credentials(args.user, args.app)
    with FederationClient(resolver, level=args.level, root_endpoint=args.root,
                          credentials=creds) as client:
        try:
            if args.cmd == "discover":
                hits = client.discover_servers(p=_latlon(args.point), service=args.service)
                out = [{"server_id": h.record.server_id, "endpoint": h.record.endpoint,
                        "level": h.level, "services": sorted(h.record.services)} for h in hits]
            elif args.cmd == "geocode":
                out = [c.to_dict() for c in client.federated_geocode(args.address)]
            elif args.cmd == "search":
                res = client.federated_search(args.keywords, _latlon(args.point), args.radius)
                out = {"items": res.items, "warnings": res.warnings}
            elif args.cmd == "route":
                out = client.federated_route(_endpoint_arg(args.src), _endpoint_arg(args.dst)).to_dict()
            elif args.cmd == "localize":
                cues = {}
                for item in args.cues:
                    k, _, v = item.partition("=")
                    cues[k] = float(v)
                out = client.federated_localize(cues, _latlon(args.point), LocalPrior()).to_dict()
            else:
                comp = client.federated_tiles([CellId.from_token(c) for c in args.cells])
                out = {"features": list(comp.features.values()),
                       "local_frames": {f: list(v.values()) for f, v in comp.local_features.items()},
                       "failures": comp.failures}
        except errors.FedMapError as exc:
            print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
            return 1
    _dump(out)
    return 0


if __name__ == "__main__":
    sys.exit(sim_main())

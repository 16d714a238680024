"""Spatial discovery: cell-domain registry, caching resolver, DNS wire frontend."""
from .dnswire import DnsFrontend, resolve_via_dns, serve_dns
from .records import SERVICES, MapServerRecord
from .registry import (NameRegistry, deregister, export_zone_file, import_zone_file,
                       lookup_records, register_zone)
from .resolver import DiscoveryHit, DnsSource, RegistrySource, Resolver, SimClock, discover

__all__ = [
    "SERVICES", "MapServerRecord", "NameRegistry", "register_zone", "deregister",
    "lookup_records", "export_zone_file", "import_zone_file", "Resolver", "RegistrySource",
    "DnsSource", "DiscoveryHit", "SimClock", "discover", "DnsFrontend", "serve_dns",
    "resolve_via_dns",
]

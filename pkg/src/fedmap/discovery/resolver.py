"""TTL-caching resolver with walk-up discovery."""
import threading
import time
from dataclasses import dataclass

from ..cells import cell_from_point, cell_to_domain, cover_polygon
from ..errors import CoverTooLarge, ResolutionFailure
from .dnswire import resolve_via_dns

NEGATIVE_TTL_S = 30


class SimClock:
    """Manually advanced clock for deterministic TTL tests."""

    def __init__(self, start=0.0):
        self.now = float(start)

    def __call__(self):
        return self.now

    def advance(self, seconds):
        self.now += seconds
        return self.now


class RegistrySource:
    """Answers straight from an in-process NameRegistry."""

    def __init__(self, registry):
        self.registry = registry
        self.suffix = registry.suffix

    def query(self, name):
        return self.registry.lookup(name)


class DnsSource:
    """Answers over the UDP wire frontend."""

    def __init__(self, address, suffix, timeout=2.0, retries=1):
        self.address = tuple(address)
        self.suffix = suffix.strip().rstrip(".").lower()
        self.timeout = timeout
        self.retries = retries

    def query(self, name):
        return resolve_via_dns(name, self.address, self.timeout, self.retries)


@dataclass(frozen=True)
class DiscoveryHit:
    record: object
    level: int
    name: str


class Resolver:
    def __init__(self, source, clock=None, negative_ttl=NEGATIVE_TTL_S):
        self.source = source
        self.clock = clock or time.monotonic
        self.negative_ttl = negative_ttl
        self._cache = {}
        self._lock = threading.Lock()
        self.queries_sent = 0

    @property
    def suffix(self):
        return self.source.suffix

    def resolve(self, name):
        """Records at exactly `name`, from cache while unexpired."""
        key = name.strip().rstrip(".").lower()
        now = self.clock()
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None and now < hit[1]:
            return list(hit[0])
        try:
            records = self.source.query(key)
        except ResolutionFailure:
            raise
        except OSError as exc:
            raise ResolutionFailure(str(exc)) from exc
        self.queries_sent += 1
        if records:
            ttl = min(r.ttl_s for r in records)
        else:
            ttl = self.negative_ttl
        with self._lock:
            self._cache[key] = (tuple(records), now + ttl)
        return list(records)

    def flush(self):
        with self._lock:
            self._cache.clear()

    def discover_hits(self, p, level):
        """Walk up from the level cell of p to the world cell.

        Dedup by server_id keeps the deepest hit; ordering is
        (depth desc, priority asc, server_id asc).
        """
        cell = cell_from_point(p, level)
        return self._walk_up([cell])

    def discover(self, p, level):
        return [h.record for h in self.discover_hits(p, level)]

    def discover_cells(self, cells):
        return self._walk_up(cells)

    def discover_area(self, polygon, level, max_cells=4096):
        """Walk up from every level-`level` cell meeting the polygon.

        The covering collapses complete sibling quartets, but a collapsed cell's
        walk-up would miss records stored at its descendants, so the covering is
        expanded back to the query level first.
        """
        cells = []
        for c in sorted(cover_polygon(polygon, level, max_cells)):
            cells.extend(descendants_at(c, level))
            if len(cells) > max_cells:
                raise CoverTooLarge(f"area needs more than {max_cells} level-{level} cells")
        return self._walk_up(cells)

    def _walk_up(self, cells):
        best = {}
        names_done = set()
        for cell in cells:
            for lvl in range(cell.level, -1, -1):
                anc = cell.ancestor(lvl)
                name = cell_to_domain(anc, self.suffix)
                if name in names_done:
                    # every ancestor above this one was already resolved
                    break
                names_done.add(name)
                for rec in self.resolve(name):
                    prev = best.get(rec.server_id)
                    if prev is None or lvl > prev.level:
                        best[rec.server_id] = DiscoveryHit(rec, lvl, name)
        return sorted(best.values(),
                      key=lambda h: (-h.level, h.record.priority, h.record.server_id))


def descendants_at(cell, level):
    cells = [cell]
    while cells[0].level < level:
        cells = [ch for c in cells for ch in c.children()]
    return cells


def discover(res, p, level):
    return res.discover(p, level)

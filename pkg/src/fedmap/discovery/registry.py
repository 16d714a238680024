"""Hierarchical record store keyed by cell domains."""
import threading

from ..cells import cell_to_domain, cover_polygon
from ..errors import NameOutsideSuffix
from .records import MapServerRecord, rank_key

DEFAULT_MAX_CELLS = 4096


class _Label:
    __slots__ = ("children", "records")

    def __init__(self):
        self.children = {}
        self.records = {}


class NameRegistry:
    """Label tree rooted at `suffix`; each tree node holds records keyed by server_id."""

    def __init__(self, suffix="maps.test"):
        self.suffix = suffix.strip().rstrip(".").lower()
        self._root = _Label()
        self._lock = threading.Lock()
        self._by_server = {}

    def _labels(self, name):
        n = name.strip().rstrip(".").lower()
        if n == self.suffix:
            return []
        if not n.endswith("." + self.suffix):
            raise NameOutsideSuffix(f"{name!r} is not under {self.suffix!r}")
        return list(reversed(n[:-(len(self.suffix) + 1)].split(".")))

    def in_zone(self, name):
        try:
            self._labels(name)
        except NameOutsideSuffix:
            return False
        return True

    def add(self, name, record):
        labels = self._labels(name)
        canonical = ".".join(list(reversed(labels)) + [self.suffix])
        with self._lock:
            node = self._root
            for lbl in labels:
                node = node.children.setdefault(lbl, _Label())
            node.records[record.server_id] = record
            self._by_server.setdefault(record.server_id, set()).add(canonical)
        return canonical

    def lookup(self, name):
        labels = self._labels(name)
        with self._lock:
            node = self._root
            for lbl in labels:
                node = node.children.get(lbl)
                if node is None:
                    return []
            return sorted(node.records.values(), key=rank_key)

    def remove_server(self, server_id):
        removed = 0
        with self._lock:
            for name in self._by_server.pop(server_id, ()):
                node = self._root
                path = []
                for lbl in self._labels(name):
                    path.append((node, lbl))
                    node = node.children[lbl]
                if node.records.pop(server_id, None) is not None:
                    removed += 1
                # prune empty branches
                for parent, lbl in reversed(path):
                    child = parent.children[lbl]
                    if child.records or child.children:
                        break
                    del parent.children[lbl]
        return removed

    def names(self):
        out = []
        with self._lock:
            stack = [(self._root, [])]
            while stack:
                node, labels = stack.pop()
                if node.records:
                    out.append(".".join(list(reversed(labels)) + [self.suffix]))
                for lbl, child in node.children.items():
                    stack.append((child, labels + [lbl]))
        return out

    def items(self):
        """(name, record) pairs in zone-file order."""
        pairs = []
        for name in self.names():
            for rec in self.lookup(name):
                pairs.append((name, rec))
        pairs.sort(key=lambda nr: (_reversed_labels(nr[0]), nr[1].server_id))
        return pairs


def _reversed_labels(name):
    return list(reversed(name.split(".")))


def register_zone(reg, polygon, record, level, max_cells=DEFAULT_MAX_CELLS):
    """Store `record` under the domain of every cell in the polygon's covering."""
    cells = cover_polygon(polygon, level, max_cells)
    domains = sorted(reg.add(cell_to_domain(c, reg.suffix), record) for c in cells)
    return domains


def deregister(reg, server_id):
    return reg.remove_server(server_id)


def lookup_records(reg, name):
    return reg.lookup(name)


def export_zone_file(reg):
    lines = []
    for name, rec in reg.items():
        lines.append(f'{name} {rec.ttl_s} IN TXT "{rec.to_text()}"')
    return "\n".join(lines) + ("\n" if lines else "")


def import_zone_file(text, reg):
    count = 0
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith(";"):
            continue
        parts = line.split(None, 4)
        if len(parts) != 5 or parts[2] != "IN" or parts[3] != "TXT":
            raise ValueError(f"zone file line {lineno}: expected '<name> <ttl> IN TXT \"...\"'")
        payload = parts[4]
        if len(payload) < 2 or payload[0] != '"' or payload[-1] != '"':
            raise ValueError(f"zone file line {lineno}: TXT payload must be quoted")
        reg.add(parts[0], MapServerRecord.from_text(payload[1:-1], int(parts[1])))
        count += 1
    return count

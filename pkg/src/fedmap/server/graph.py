"""Undirected route graph over way nodes with centimeter-integer edge weights."""
import heapq
from dataclasses import dataclass

from ..geometry import frame_distance


@dataclass(frozen=True)
class Path:
    nodes: tuple
    cost_cm: int

    @property
    def cost(self):
        return self.cost_cm / 100.0

    def reversed(self):
        return Path(tuple(reversed(self.nodes)), self.cost_cm)

    def to_dict(self):
        return {"nodes": list(self.nodes), "cost": self.cost, "cost_cm": self.cost_cm}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["nodes"]), int(d["cost_cm"]))


def edge_weight_cm(frame_id, a, b):
    # quantized so that sums compare exactly across servers and the oracle
    return max(1, round(frame_distance(frame_id, a, b) * 100.0))


class RouteGraph:
    def __init__(self, adjacency):
        self.adj = adjacency

    @classmethod
    def from_document(cls, doc):
        adj = {}
        for way in doc.ways.values():
            for a, b in zip(way.node_ids, way.node_ids[1:]):
                w = edge_weight_cm(doc.frame_id, doc.nodes[a].position, doc.nodes[b].position)
                for u, v in ((a, b), (b, a)):
                    nbrs = adj.setdefault(u, {})
                    if v not in nbrs or w < nbrs[v]:
                        nbrs[v] = w
        return cls(adj)

    def __contains__(self, node_id):
        return node_id in self.adj

    def vertices(self):
        return self.adj.keys()

    def shortest_paths(self, source, targets=None):
        """Dijkstra from source. Equal-cost ties resolve to the lexicographically
        smallest node-id sequence. Returns {node: Path}, stopping early once all
        targets are settled."""
        remaining = set(targets) if targets is not None else None
        best = {source: (0, (source,))}
        done = {}
        heap = [(0, (source,))]
        while heap:
            cost, path = heapq.heappop(heap)
            u = path[-1]
            if u in done:
                continue
            if best[u] != (cost, path):
                continue
            done[u] = Path(path, cost)
            if remaining is not None:
                remaining.discard(u)
                if not remaining:
                    break
            for v, w in self.adj.get(u, {}).items():
                if v in done:
                    continue
                cand = (cost + w, path + (v,))
                cur = best.get(v)
                if cur is None or cand < cur:
                    best[v] = cand
                    heapq.heappush(heap, cand)
        return done

    def distances(self, source, targets=None):
        """Plain Dijkstra costs in cm; same values as shortest_paths without carrying paths."""
        remaining = set(targets) if targets is not None else None
        dist = {source: 0}
        done = {}
        heap = [(0, source)]
        while heap:
            cost, u = heapq.heappop(heap)
            if u in done:
                continue
            done[u] = cost
            if remaining is not None:
                remaining.discard(u)
                if not remaining:
                    break
            for v, w in self.adj.get(u, {}).items():
                c = cost + w
                if v not in done and c < dist.get(v, c + 1):
                    dist[v] = c
                    heapq.heappush(heap, (c, v))
        return done

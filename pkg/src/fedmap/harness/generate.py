"""Seeded random worlds: a region split into jagged strips, one map document per strip."""
import json
import math
import os
import random

from ..cells import cell_from_point
from ..geometry import point_in_polygon
from ..model import GeoPoint

VOCAB = ["cafe", "bakery", "pharmacy", "bookstore", "grocery", "parking", "fuel", "library",
         "bench", "atm", "florist", "hardware"]
REGION_W_DEG = 0.03
REGION_H_DEG = 0.02
BORDER_SAMPLES = 5
NEAREST_K = 3
GEN_LEVEL = 16


def _scaled(p, coslat):
    return (p[0] * coslat, p[1])


def _knn_edges(pts, k, coslat):
    edges = set()
    sp = [_scaled(p, coslat) for p in pts]
    n = len(pts)
    for i in range(n):
        dists = sorted((math.dist(sp[i], sp[j]), j) for j in range(n) if j != i)
        for _d, j in dists[:k]:
            edges.add((min(i, j), max(i, j)))
    # Prim's MST keeps the world connected
    in_tree = [False] * n
    best = [math.inf] * n
    parent = [-1] * n
    best[0] = 0.0
    for _ in range(n):
        u = min((i for i in range(n) if not in_tree[i]), key=lambda i: best[i])
        in_tree[u] = True
        if parent[u] >= 0:
            edges.add((min(u, parent[u]), max(u, parent[u])))
        for v in range(n):
            if not in_tree[v]:
                d = math.dist(sp[u], sp[v])
                if d < best[v]:
                    best[v] = d
                    parent[v] = u
    return sorted(edges)


def _zone_polygons(rng, lon0, lat0, zones):
    width = REGION_W_DEG / zones
    borders = []
    for i in range(zones + 1):
        x = lon0 + i * width
        if i in (0, zones):
            borders.append([(x, lat0), (x, lat0 + REGION_H_DEG)])
            continue
        pts = []
        for k in range(BORDER_SAMPLES):
            y = lat0 + REGION_H_DEG * k / (BORDER_SAMPLES - 1)
            pts.append((x + rng.uniform(-0.25, 0.25) * width, y))
        borders.append(pts)
    polys = []
    for i in range(zones):
        polys.append(borders[i] + list(reversed(borders[i + 1])))
    return polys


def build_world(seed, zones, nodes, portal_density):
    """Returns (documents: {filename: dict}, scenario: dict)."""
    if zones < 1 or nodes < zones:
        raise ValueError("need zones >= 1 and nodes >= zones")
    if not 0.0 <= portal_density <= 1.0:
        raise ValueError("portal_density must be in [0, 1]")
    rng = random.Random(seed)
    lat0 = round(rng.uniform(-50.0, 50.0), 4)
    lon0 = round(rng.uniform(-170.0, 170.0), 4)
    coslat = math.cos(math.radians(lat0 + REGION_H_DEG / 2))
    polys = _zone_polygons(rng, lon0, lat0, zones)

    # every zone gets at least one node so no document is empty
    pts, zone_of = [], []
    while len(pts) < nodes:
        p = (round(lon0 + rng.uniform(0, REGION_W_DEG), 7), round(lat0 + rng.uniform(0, REGION_H_DEG), 7))
        z = next((i for i, poly in enumerate(polys) if point_in_polygon(p, poly)), None)
        if z is None:
            continue
        missing = [i for i in range(zones) if i not in zone_of]
        if missing and len(pts) >= nodes - len(missing) and z not in missing:
            continue
        pts.append(p)
        zone_of.append(z)

    ids = [f"z{zone_of[i]}:n{i}" for i in range(nodes)]
    tags = []
    for i in range(nodes):
        word = rng.choice(VOCAB)
        t = {"addr": f"n{i}", "amenity": word, "name": f"{word} {i}"}
        if rng.random() < 0.3:
            t["cuisine" if word == "cafe" else "note"] = rng.choice(VOCAB)
        tags.append(t)

    members = [dict() for _ in range(zones)]  # node index -> portal flag
    ways = [[] for _ in range(zones)]
    for i in range(nodes):
        members[zone_of[i]][i] = False
    for u, v in _knn_edges(pts, NEAREST_K, coslat):
        zu, zv = zone_of[u], zone_of[v]
        way = {"id": f"w{u}_{v}", "nodes": [ids[u], ids[v]], "tags": {"highway": "footway"}}
        if zu == zv:
            ways[zu].append(way)
            continue
        if rng.random() < portal_density:
            # complete portal set: the edge and both endpoints live in both zones
            for z in (zu, zv):
                ways[z].append(way)
                members[z][u] = True
                members[z][v] = True
        else:
            # incomplete: only zu knows this edge, and nobody marks it a portal
            ways[zu].append(way)
            members[zu].setdefault(v, False)

    prefix = f"SIM/{seed}"
    documents = {}
    servers = []
    for z in range(zones):
        map_id = f"zone{z}"
        node_list = []
        for i in sorted(members[z]):
            item = {"id": ids[i], "x": pts[i][0], "y": pts[i][1], "tags": tags[i]}
            if members[z][i]:
                item["portal"] = True
            node_list.append(item)
        documents[f"{map_id}.json"] = {
            "map_id": map_id, "frame": {"frame_id": "geo"},
            "address_prefix": f"{prefix}/{map_id}",
            "boundary": [[round(x, 7), round(y, 7)] for x, y in polys[z]],
            "nodes": node_list, "ways": ways[z], "relations": [],
        }
        servers.append({"server_id": map_id, "map": f"{map_id}.json", "priority": 10,
                        "services": ["geocode", "reverse_geocode", "search", "route", "tile"]})

    root_nodes = []
    for z in range(zones):
        first = min(i for i in range(nodes) if zone_of[i] == z)
        root_nodes.append({"id": f"root:zone{z}", "x": pts[first][0], "y": pts[first][1],
                           "tags": {"addr": f"zone{z}", "place": "district"}})
    documents["root.json"] = {
        "map_id": "root", "frame": {"frame_id": "geo"}, "address_prefix": prefix,
        "boundary": [[lon0, lat0], [lon0 + REGION_W_DEG, lat0],
                     [lon0 + REGION_W_DEG, lat0 + REGION_H_DEG], [lon0, lat0 + REGION_H_DEG]],
        "nodes": root_nodes, "ways": [], "relations": [],
    }
    servers.append({"server_id": "root", "map": "root.json", "priority": 50,
                    "services": ["geocode"]})

    queries = []
    for q in range(20):
        a, b = rng.sample(range(nodes), 2)
        queries.append({"id": f"route-{q}", "type": "route",
                        "src": f"{prefix}/zone{zone_of[a]}/n{a}",
                        "dst": f"{prefix}/zone{zone_of[b]}/n{b}"})
    for q in range(5):
        center = [round(lat0 + rng.uniform(0, REGION_H_DEG), 7),
                  round(lon0 + rng.uniform(0, REGION_W_DEG), 7)]
        queries.append({"id": f"search-{q}", "type": "search",
                        "keywords": rng.sample(VOCAB, rng.randint(1, 2)),
                        "center": center, "radius_m": 300.0})
    for q in range(4):
        p = GeoPoint(lat0 + rng.uniform(0, REGION_H_DEG), lon0 + rng.uniform(0, REGION_W_DEG))
        lvl = rng.choice([GEN_LEVEL, GEN_LEVEL + 1])
        queries.append({"id": f"tiles-{q}", "type": "tiles",
                        "cells": [cell_from_point(p, lvl).token]})

    scenario = {
        "name": f"random-world-{seed}", "seed": seed, "suffix": "maps.test",
        "level": GEN_LEVEL, "root": "root", "oracle": True, "servers": servers,
        "queries": queries,
    }
    return documents, scenario


def gen_random_world(seed, zones, nodes, portal_density, out_dir):
    documents, scenario = build_world(seed, zones, nodes, portal_density)
    os.makedirs(out_dir, exist_ok=True)
    for name, doc in documents.items():
        with open(os.path.join(out_dir, name), "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")
    path = os.path.join(out_dir, "scenario.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario, fh, indent=1)
        fh.write("\n")
    return path

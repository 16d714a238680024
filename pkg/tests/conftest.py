import contextlib
import json
import os
import time

import pytest

from fedmap.data import walkthrough_scenario_path

WALK_DIR = os.path.dirname(walkthrough_scenario_path())

# criterion number -> (passed, title, detail); filled by test_acceptance.py
ACCEPTANCE = {}


@contextlib.contextmanager
def criterion(number, title):
    """Record one acceptance criterion's outcome for the end-of-run summary."""
    info = {"detail": ""}
    t0 = time.perf_counter()
    try:
        yield info
    except BaseException as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        ACCEPTANCE[number] = (False, title, f"{msg} ({time.perf_counter() - t0:.1f}s)")
        raise
    ACCEPTANCE[number] = (True, title, f"{info['detail']} ({time.perf_counter() - t0:.1f}s)")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, title, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title}  {detail}")


def geo_doc(map_id, nodes, ways=(), boundary=None, prefix="", relations=()):
    """Small geo document dict. nodes: [(id, lon, lat, tags, portal)]."""
    if boundary is None:
        xs = [n[1] for n in nodes] or [0.0]
        ys = [n[2] for n in nodes] or [0.0]
        pad = 0.001
        boundary = [[min(xs) - pad, min(ys) - pad], [max(xs) + pad, min(ys) - pad],
                    [max(xs) + pad, max(ys) + pad], [min(xs) - pad, max(ys) + pad]]
    return {
        "map_id": map_id, "frame": {"frame_id": "geo"}, "address_prefix": prefix,
        "boundary": boundary,
        "nodes": [{"id": n[0], "x": n[1], "y": n[2], "tags": n[3] if len(n) > 3 else {},
                   "portal": n[4] if len(n) > 4 else False} for n in nodes],
        "ways": [{"id": w[0], "nodes": list(w[1]), "tags": w[2] if len(w) > 2 else {}}
                 for w in ways],
        "relations": list(relations),
    }


def local_doc(map_id, nodes, ways=(), anchor=(40.0, -80.0, 20.0), size=100.0, prefix=""):
    doc = geo_doc(map_id, nodes, ways, boundary=[[-size, -size], [size, -size], [size, size],
                                                 [-size, size]], prefix=prefix)
    doc["frame"] = {"frame_id": f"{map_id}-local",
                    "anchor": {"lat": anchor[0], "lon": anchor[1], "uncertainty_m": anchor[2]}}
    return doc


def write_scenario(tmp_path, docs, servers, queries=(), **extra):
    """Write docs {filename: dict} and a scenario; returns the scenario path."""
    for name, doc in docs.items():
        (tmp_path / name).write_text(json.dumps(doc))
    scenario = {"servers": servers, "queries": list(queries), **extra}
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(scenario))
    return str(path)


@pytest.fixture
def walk_dir():
    return WALK_DIR

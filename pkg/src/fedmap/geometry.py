"""Planar geometry helpers: point-in-polygon, segment tests, clipping, distances.

Coordinates are (x, y) tuples. In the geographic frame x is longitude and
y is latitude, both in degrees.
"""
import math

METERS_PER_DEG_LAT = 111_320.0


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def point_segment_distance(p, a, b):
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    seg2 = dx * dx + dy * dy
    if seg2 == 0.0:
        return math.hypot(p[0] - ax, p[1] - ay)
    t = ((p[0] - ax) * dx + (p[1] - ay) * dy) / seg2
    t = max(0.0, min(1.0, t))
    return math.hypot(p[0] - (ax + t * dx), p[1] - (ay + t * dy))


def on_segment(p, a, b, eps=0.0):
    if eps > 0.0:
        return point_segment_distance(p, a, b) <= eps
    if _cross(a, b, p) != 0:
        return False
    return (min(a[0], b[0]) <= p[0] <= max(a[0], b[0])
            and min(a[1], b[1]) <= p[1] <= max(a[1], b[1]))


def point_in_polygon(p, poly, eps=0.0):
    """Ray-casting containment; points on (or within eps of) an edge count as inside."""
    n = len(poly)
    for i in range(n):
        if on_segment(p, poly[i], poly[(i + 1) % n], eps):
            return True
    x, y = p
    inside = False
    j = n - 1
    for i in range(n):
        xi, yi = poly[i]
        xj, yj = poly[j]
        if (yi > y) != (yj > y):
            x_cross = xi + (y - yi) * (xj - xi) / (yj - yi)
            if x < x_cross:
                inside = not inside
        j = i
    return inside


def segments_intersect(p1, p2, q1, q2):
    """Closed-segment intersection test (touching counts)."""
    d1 = _cross(q1, q2, p1)
    d2 = _cross(q1, q2, p2)
    d3 = _cross(p1, p2, q1)
    d4 = _cross(p1, p2, q2)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and \
            ((d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)):
        return True
    if d1 == 0 and on_segment(p1, q1, q2):
        return True
    if d2 == 0 and on_segment(p2, q1, q2):
        return True
    if d3 == 0 and on_segment(q1, p1, p2):
        return True
    if d4 == 0 and on_segment(q2, p1, p2):
        return True
    return False


def is_simple_polygon(poly):
    n = len(poly)
    if n < 3:
        return False
    for i in range(n):
        if poly[i] == poly[(i + 1) % n]:
            return False
    # zero area polygons are degenerate
    if polygon_area(poly) == 0.0:
        return False
    edges = [(poly[i], poly[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                # adjacent edges share exactly one vertex; reject overlap
                a, b = edges[i]
                c, d = edges[j]
                shared = b if j == i + 1 else a
                other_i = a if shared == b else b
                other_j = d if shared == c else c
                if _cross(shared, other_i, other_j) == 0 and \
                        (other_i[0] - shared[0]) * (other_j[0] - shared[0]) + \
                        (other_i[1] - shared[1]) * (other_j[1] - shared[1]) > 0:
                    return False
                continue
            if segments_intersect(edges[i][0], edges[i][1], edges[j][0], edges[j][1]):
                return False
    return True


def polygon_area(poly):
    s = 0.0
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        s += x1 * y2 - x2 * y1
    return s / 2.0


def winding_number(p, poly):
    """Winding number of poly around p (0 means outside)."""
    wn = 0
    n = len(poly)
    for i in range(n):
        a = poly[i]
        b = poly[(i + 1) % n]
        if a[1] <= p[1]:
            if b[1] > p[1] and _cross(a, b, p) > 0:
                wn += 1
        elif b[1] <= p[1] and _cross(a, b, p) < 0:
            wn -= 1
    return wn


def bbox(points):
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    return min(xs), min(ys), max(xs), max(ys)


def rect_intersects_polygon(rect, poly):
    """rect = (xmin, ymin, xmax, ymax), closed. Edge intersection plus mutual containment."""
    xmin, ymin, xmax, ymax = rect
    pxmin, pymin, pxmax, pymax = bbox(poly)
    if pxmax < xmin or pxmin > xmax or pymax < ymin or pymin > ymax:
        return False
    for x, y in poly:
        if xmin <= x <= xmax and ymin <= y <= ymax:
            return True
    corners = [(xmin, ymin), (xmax, ymin), (xmax, ymax), (xmin, ymax)]
    if point_in_polygon(corners[0], poly):
        return True
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        for k in range(4):
            if segments_intersect(a, b, corners[k], corners[(k + 1) % 4]):
                return True
    return False


def rect_inside_polygon(rect, poly):
    """True only when the closed rect lies in the polygon's interior."""
    xmin, ymin, xmax, ymax = rect
    corners = [(xmin, ymin), (xmax, ymin), (xmax, ymax), (xmin, ymax)]
    n = len(poly)
    for c in corners:
        if not point_in_polygon(c, poly):
            return False
        for i in range(n):
            if on_segment(c, poly[i], poly[(i + 1) % n]):
                return False
    for x, y in poly:
        if xmin <= x <= xmax and ymin <= y <= ymax:
            return False
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        for k in range(4):
            if segments_intersect(a, b, corners[k], corners[(k + 1) % 4]):
                return False
    return True


_INSIDE, _LEFT, _RIGHT, _BOTTOM, _TOP = 0, 1, 2, 4, 8


def _outcode(x, y, rect):
    xmin, ymin, xmax, ymax = rect
    code = _INSIDE
    if x < xmin:
        code |= _LEFT
    elif x > xmax:
        code |= _RIGHT
    if y < ymin:
        code |= _BOTTOM
    elif y > ymax:
        code |= _TOP
    return code


def clip_segment(a, b, rect):
    """Cohen-Sutherland clipping of segment a-b to a closed rect.

    Returns the clipped (a', b') or None when the segment misses the rect.
    """
    xmin, ymin, xmax, ymax = rect
    x0, y0 = a
    x1, y1 = b
    c0 = _outcode(x0, y0, rect)
    c1 = _outcode(x1, y1, rect)
    while True:
        if not (c0 | c1):
            return (x0, y0), (x1, y1)
        if c0 & c1:
            return None
        c = c0 or c1
        if c & _TOP:
            x = x0 + (x1 - x0) * (ymax - y0) / (y1 - y0)
            y = ymax
        elif c & _BOTTOM:
            x = x0 + (x1 - x0) * (ymin - y0) / (y1 - y0)
            y = ymin
        elif c & _RIGHT:
            y = y0 + (y1 - y0) * (xmax - x0) / (x1 - x0)
            x = xmax
        else:
            y = y0 + (y1 - y0) * (xmin - x0) / (x1 - x0)
            x = xmin
        # guard against float drift pushing the intersection off the boundary
        x = min(max(x, xmin), xmax)
        y = min(max(y, ymin), ymax)
        if c == c0:
            x0, y0 = x, y
            c0 = _outcode(x0, y0, rect)
        else:
            x1, y1 = x, y
            c1 = _outcode(x1, y1, rect)


def clip_polyline(points, rect):
    """Clip a polyline to rect, returning a list of polylines (each a list of points)."""
    pieces = []
    current = None
    for a, b in zip(points, points[1:]):
        seg = clip_segment(a, b, rect)
        if seg is None:
            current = None
            continue
        s, e = seg
        if current is not None and current[-1] == s:
            current.append(e)
        else:
            current = [s, e]
            pieces.append(current)
        if e != b:
            current = None
    return pieces


def geo_distance_m(a, b):
    """Equirectangular distance in meters between (lon, lat) points."""
    lat_mid = math.radians((a[1] + b[1]) / 2.0)
    dx = (b[0] - a[0]) * METERS_PER_DEG_LAT * math.cos(lat_mid)
    dy = (b[1] - a[1]) * METERS_PER_DEG_LAT
    return math.hypot(dx, dy)


def planar_distance(a, b):
    return math.hypot(b[0] - a[0], b[1] - a[1])


def frame_distance(frame_id, a, b):
    if frame_id == "geo":
        return geo_distance_m(a, b)
    return planar_distance(a, b)


def meters_to_degrees(meters, lat):
    """Convert a metric radius to (dlon, dlat) degrees at the given latitude."""
    dlat = meters / METERS_PER_DEG_LAT
    coslat = max(math.cos(math.radians(lat)), 1e-9)
    return dlat / coslat, dlat

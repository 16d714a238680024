"""Plate-carree quadtree cells and their domain-name encoding.

A cell is a path of quadrant digits from the world rectangle
[-90, 90] x [-180, 180). Digit = 2 * north + east, so 0=SW, 1=SE, 2=NW, 3=NE.
"""
from dataclasses import dataclass

from .errors import CoverTooLarge, LevelOutOfRange, MalformedCellDomain
from .geometry import rect_inside_polygon, rect_intersects_polygon

MAX_LEVEL = 24
DEFAULT_LEVEL = 16
WORLD = (-90.0, 90.0, -180.0, 180.0)


@dataclass(frozen=True, order=True)
class CellId:
    digits: tuple = ()

    def __post_init__(self):
        digits = tuple(int(d) for d in self.digits)
        if len(digits) > MAX_LEVEL:
            raise LevelOutOfRange(f"cell level {len(digits)} exceeds {MAX_LEVEL}")
        if any(d not in (0, 1, 2, 3) for d in digits):
            raise ValueError(f"cell digits must be in 0..3: {digits}")
        object.__setattr__(self, "digits", digits)

    @property
    def level(self):
        return len(self.digits)

    @property
    def token(self):
        return "".join(str(d) for d in self.digits)

    @classmethod
    def from_token(cls, token):
        if any(ch not in "0123" for ch in token):
            raise ValueError(f"bad cell token {token!r}")
        return cls(tuple(int(ch) for ch in token))

    def parent(self):
        if not self.digits:
            return None
        return CellId(self.digits[:-1])

    def children(self):
        return [CellId(self.digits + (d,)) for d in range(4)]

    def ancestor(self, level):
        return CellId(self.digits[:level])

    def contains(self, other):
        return other.digits[:self.level] == self.digits

    def __str__(self):
        return self.token or "<world>"


@dataclass(frozen=True)
class CellBounds:
    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float

    @property
    def center(self):
        return ((self.lat_min + self.lat_max) / 2.0, (self.lon_min + self.lon_max) / 2.0)

    @property
    def rect(self):
        """(xmin, ymin, xmax, ymax) in (lon, lat) order."""
        return (self.lon_min, self.lat_min, self.lon_max, self.lat_max)

    def contains_point(self, lat, lon):
        return (self.lat_min <= lat <= self.lat_max) and (self.lon_min <= lon < self.lon_max)


def _check_level(level):
    if not isinstance(level, int) or isinstance(level, bool) or not 0 <= level <= MAX_LEVEL:
        raise LevelOutOfRange(f"level must be an int in [0, {MAX_LEVEL}], got {level!r}")


def cell_from_point(p, level):
    """Cell at `level` containing GeoPoint p; exact midpoints go north/east."""
    _check_level(level)
    lat_lo, lat_hi, lon_lo, lon_hi = WORLD
    digits = []
    for _ in range(level):
        lat_mid = (lat_lo + lat_hi) / 2.0
        lon_mid = (lon_lo + lon_hi) / 2.0
        north = p.lat >= lat_mid
        east = p.lon >= lon_mid
        digits.append(2 * north + east)
        if north:
            lat_lo = lat_mid
        else:
            lat_hi = lat_mid
        if east:
            lon_lo = lon_mid
        else:
            lon_hi = lon_mid
    return CellId(tuple(digits))


def cell_bounds(c):
    lat_lo, lat_hi, lon_lo, lon_hi = WORLD
    for d in c.digits:
        lat_mid = (lat_lo + lat_hi) / 2.0
        lon_mid = (lon_lo + lon_hi) / 2.0
        if d & 2:
            lat_lo = lat_mid
        else:
            lat_hi = lat_mid
        if d & 1:
            lon_lo = lon_mid
        else:
            lon_hi = lon_mid
    return CellBounds(lat_lo, lat_hi, lon_lo, lon_hi)


def cover_polygon(poly, level, max_cells):
    """Normalized covering of a (lon, lat) polygon by cells of `level`.

    All level cells intersecting the polygon, with complete sibling quartets
    collapsed into their parent until fixpoint. Raises CoverTooLarge once the
    normalized result is known to exceed max_cells.
    """
    _check_level(level)
    if max_cells < 1:
        raise ValueError("max_cells must be >= 1")
    poly = [tuple(map(float, p)) for p in poly]
    result = []

    def walk(cell):
        # returns True when the whole cell is part of the covering
        rect = cell_bounds(cell).rect
        if not rect_intersects_polygon(rect, poly):
            return False
        if cell.level == level or rect_inside_polygon(rect, poly):
            return True
        mark = len(result)
        full = [walk(ch) for ch in cell.children()]
        if all(full) and len(result) == mark:
            return True
        for ch, is_full in zip(cell.children(), full):
            if is_full:
                _emit(ch)
        return False

    def _emit(cell):
        result.append(cell)
        if len(result) > max_cells:
            raise CoverTooLarge(
                f"covering exceeds {max_cells} cells at level {level}; use a coarser level")

    if walk(CellId()):
        _emit(CellId())
    return set(result)


def _normalize_suffix(suffix):
    s = suffix.strip().rstrip(".").lower()
    if not s:
        raise ValueError("suffix must be a non-empty domain name")
    return s


def cell_to_domain(c, suffix):
    """Deepest digit leftmost, so DNS suffix order mirrors spatial containment."""
    suffix = _normalize_suffix(suffix)
    labels = [str(d) for d in reversed(c.digits)]
    return ".".join(labels + [suffix])


def domain_to_cell(name, suffix):
    suffix = _normalize_suffix(suffix)
    n = name.strip().rstrip(".").lower()
    if n == suffix:
        return CellId()
    if not n.endswith("." + suffix):
        raise MalformedCellDomain(f"{name!r} is not under {suffix!r}")
    labels = n[:-(len(suffix) + 1)].split(".")
    if any(lbl not in ("0", "1", "2", "3") for lbl in labels):
        raise MalformedCellDomain(f"{name!r} has a non-digit cell label")
    if len(labels) > MAX_LEVEL:
        raise MalformedCellDomain(f"{name!r} is deeper than level {MAX_LEVEL}")
    return CellId(tuple(int(lbl) for lbl in reversed(labels)))

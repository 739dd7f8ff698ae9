"""Geospatial primitives shared by the registry, preferences, and assignment.

Coordinates are WGS84 ``(lon, lat)`` pairs in degrees. Polygons follow the
GeoJSON convention: a polygon is a list of linear rings (first ring is the
outer boundary, subsequent rings are holes), each ring a closed list of
positions. Containment treats ring boundaries as inside, so a courier
standing exactly on the edge of a territory still counts as in-territory.

Great-circle distances use the haversine formula on a spherical Earth of
mean radius ``EARTH_RADIUS_M``; at city scale the spherical error is far
below dispatch-relevant magnitudes.
"""

from __future__ import annotations

import math
from typing import Any, Sequence

from .errors import INVALID_GEOMETRY, ProtocolError

EARTH_RADIUS_M = 6371000.0

LonLat = tuple[float, float]
Ring = list[LonLat]
# A geometry is a list of polygons; each polygon a list of rings.
Geometry = list[list[Ring]]


def validate_lon_lat(lon: float, lat: float) -> None:
    if not (isinstance(lon, (int, float)) and isinstance(lat, (int, float))):
        raise ProtocolError(INVALID_GEOMETRY, f"coordinates must be numbers: ({lon!r}, {lat!r})")
    if math.isnan(lon) or math.isnan(lat) or not (-180.0 <= lon <= 180.0) or not (-90.0 <= lat <= 90.0):
        raise ProtocolError(INVALID_GEOMETRY, f"coordinate out of range: ({lon}, {lat})")


def _parse_ring(raw: Sequence[Any], where: str) -> Ring:
    if not isinstance(raw, (list, tuple)) or len(raw) < 4:
        raise ProtocolError(INVALID_GEOMETRY, f"{where}: ring needs >= 4 positions")
    ring: Ring = []
    for pos in raw:
        if not isinstance(pos, (list, tuple)) or len(pos) < 2:
            raise ProtocolError(INVALID_GEOMETRY, f"{where}: position must be [lon, lat]")
        lon, lat = float(pos[0]), float(pos[1])
        validate_lon_lat(lon, lat)
        ring.append((lon, lat))
    if ring[0] != ring[-1]:
        raise ProtocolError(INVALID_GEOMETRY, f"{where}: ring is not closed")
    return ring


def parse_geometry(geojson: Any) -> Geometry:
    """Parse and validate a GeoJSON Polygon or MultiPolygon."""
    if not isinstance(geojson, dict):
        raise ProtocolError(INVALID_GEOMETRY, "geometry must be a GeoJSON object")
    gtype = geojson.get("type")
    coords = geojson.get("coordinates")
    if gtype == "Polygon":
        polys = [coords]
    elif gtype == "MultiPolygon":
        polys = coords
    else:
        raise ProtocolError(INVALID_GEOMETRY, f"unsupported geometry type: {gtype!r}")
    if not isinstance(polys, (list, tuple)) or not polys:
        raise ProtocolError(INVALID_GEOMETRY, f"{gtype}: empty coordinates")
    out: Geometry = []
    for pi, poly in enumerate(polys):
        if not isinstance(poly, (list, tuple)) or not poly:
            raise ProtocolError(INVALID_GEOMETRY, f"polygon {pi}: no rings")
        out.append([_parse_ring(ring, f"polygon {pi} ring {ri}") for ri, ring in enumerate(poly)])
    return out


def geometry_to_geojson(geom: Geometry) -> dict[str, Any]:
    """Inverse of :func:`parse_geometry`; single polygons stay ``Polygon``."""
    as_lists = [[[list(p) for p in ring] for ring in poly] for poly in geom]
    if len(as_lists) == 1:
        return {"type": "Polygon", "coordinates": as_lists[0]}
    return {"type": "MultiPolygon", "coordinates": as_lists}


def _on_segment(p: LonLat, a: LonLat, b: LonLat) -> bool:
    """True when p lies on the closed segment ab (exact arithmetic on floats)."""
    cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
    if cross != 0.0:
        return False
    return min(a[0], b[0]) <= p[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= p[1] <= max(a[1], b[1])


def _ring_contains(point: LonLat, ring: Ring) -> bool:
    """Even-odd ray cast with the boundary counted as inside."""
    x, y = point
    inside = False
    for i in range(len(ring) - 1):
        a, b = ring[i], ring[i + 1]
        if _on_segment(point, a, b):
            return True
        ax, ay = a
        bx, by = b
        # Half-open rule on the vertical span avoids double-counting vertices.
        if (ay > y) != (by > y):
            x_cross = ax + (y - ay) * (bx - ax) / (by - ay)
            if x < x_cross:
                inside = not inside
    return inside


def point_in_geometry(point: LonLat, geom: Geometry) -> bool:
    """Containment test across all polygons; holes punch out interior points.

    A point on any ring boundary (outer or hole) counts as inside.
    """
    validate_lon_lat(point[0], point[1])
    for poly in geom:
        outer, holes = poly[0], poly[1:]
        if not _ring_contains(point, outer):
            continue
        in_hole = False
        for hole in holes:
            on_hole_edge = any(
                _on_segment(point, hole[i], hole[i + 1]) for i in range(len(hole) - 1)
            )
            if on_hole_edge:
                continue
            if _ring_contains(point, hole):
                in_hole = True
                break
        if not in_hole:
            return True
    return False


def _segments_intersect(p1: LonLat, p2: LonLat, q1: LonLat, q2: LonLat) -> bool:
    def orient(a: LonLat, b: LonLat, c: LonLat) -> float:
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)):
        return True
    return (
        (d1 == 0 and _on_segment(p1, q1, q2))
        or (d2 == 0 and _on_segment(p2, q1, q2))
        or (d3 == 0 and _on_segment(q1, p1, p2))
        or (d4 == 0 and _on_segment(q2, p1, p2))
    )


def geometries_intersect(a: Geometry, b: Geometry) -> bool:
    """True when the two regions share at least one point (edges included)."""
    a_pts = [p for poly in a for ring in poly for p in ring]
    b_pts = [p for poly in b for ring in poly for p in ring]
    if any(point_in_geometry(p, b) for p in a_pts):
        return True
    if any(point_in_geometry(p, a) for p in b_pts):
        return True
    for poly_a in a:
        for ring_a in poly_a:
            for i in range(len(ring_a) - 1):
                for poly_b in b:
                    for ring_b in poly_b:
                        for j in range(len(ring_b) - 1):
                            if _segments_intersect(
                                ring_a[i], ring_a[i + 1], ring_b[j], ring_b[j + 1]
                            ):
                                return True
    return False


def haversine_m(a: LonLat, b: LonLat) -> float:
    """Great-circle distance in meters between two (lon, lat) points."""
    lon1, lat1, lon2, lat2 = map(math.radians, (a[0], a[1], b[0], b[1]))
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = math.sin(dlat / 2.0) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.atan2(math.sqrt(h), math.sqrt(1.0 - h))

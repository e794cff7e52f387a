"""GeoJSON and CSV serialization of road graphs."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any

from .graph import GraphBuilder, RoadGraph
from .raster import GeoPoint, RasterError


class GeoJSONError(ValueError):
    """Malformed road-graph GeoJSON. ``feature_index`` names the offending feature."""

    def __init__(self, msg: str, feature_index: int | None = None):
        if feature_index is not None:
            msg = f"feature {feature_index}: {msg}"
        super().__init__(msg)
        self.feature_index = feature_index


def to_geojson(g: RoadGraph) -> dict[str, Any]:
    features = []
    for i, (u, v) in enumerate(g.edges):
        props: dict[str, Any] = {"edge_id": i}
        cls = g.classes.get((u, v))
        if cls is not None:
            props["class"] = cls
        a, b = g.nodes[u], g.nodes[v]
        features.append({
            "type": "Feature",
            "geometry": {"type": "LineString", "coordinates": [[a.lon, a.lat], [b.lon, b.lat]]},
            "properties": props,
        })
    return {"type": "FeatureCollection", "features": features}


def dumps(g: RoadGraph) -> str:
    return json.dumps(to_geojson(g), sort_keys=True, separators=(",", ":")) + "\n"


def write_geojson(path: Path, g: RoadGraph) -> None:
    Path(path).write_text(dumps(g), encoding="utf-8")


def from_geojson(obj: dict[str, Any]) -> RoadGraph:
    """Build a graph from a FeatureCollection of LineStrings.

    Vertices with identical coordinates become one node; each consecutive
    vertex pair becomes an edge. MultiLineStrings are accepted. A ``class``
    property, when present, labels every edge of that feature.
    """
    if not isinstance(obj, dict) or obj.get("type") != "FeatureCollection":
        raise GeoJSONError("top level must be a FeatureCollection")
    feats = obj.get("features")
    if not isinstance(feats, list):
        raise GeoJSONError("FeatureCollection has no feature list")

    gb = GraphBuilder()
    ids: dict[tuple[float, float], int] = {}

    def node(coord, i) -> int:
        try:
            lon, lat = float(coord[0]), float(coord[1])
        except (TypeError, ValueError, IndexError):
            raise GeoJSONError(f"bad coordinate {coord!r}", i) from None
        key = (lon, lat)
        if key not in ids:
            try:
                ids[key] = gb.add_node(GeoPoint(lon, lat))
            except RasterError as exc:
                raise GeoJSONError(str(exc), i) from None
        return ids[key]

    for i, f in enumerate(feats):
        if not isinstance(f, dict) or f.get("type") != "Feature":
            raise GeoJSONError("not a Feature", i)
        geom = f.get("geometry") or {}
        gtype = geom.get("type")
        coords = geom.get("coordinates")
        if gtype == "LineString":
            lines = [coords]
        elif gtype == "MultiLineString":
            lines = coords
        else:
            raise GeoJSONError(f"unsupported geometry type {gtype!r}", i)
        if not isinstance(lines, list) or not all(isinstance(ln, list) and len(ln) >= 2 for ln in lines):
            raise GeoJSONError("line needs at least two vertices", i)
        cls = (f.get("properties") or {}).get("class")
        if cls is not None:
            try:
                cls = int(cls)
            except (TypeError, ValueError):
                raise GeoJSONError(f"non-integer class {cls!r}", i) from None
            if not 1 <= cls <= 10:
                raise GeoJSONError(f"class {cls} outside 1..10", i)
        for line in lines:
            vs = [node(c, i) for c in line]
            for a, b in zip(vs, vs[1:]):
                gb.add_edge(a, b, cls)
    return gb.build()


def read_geojson(path: Path) -> RoadGraph:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise GeoJSONError(f"{path}: invalid JSON ({exc})") from None
    return from_geojson(obj)


STATS_COLUMNS = ["county_id", "year", "total_length_km", "density_km_per_km2", "node_count", "edge_count"]


def write_stats_csv(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, STATS_COLUMNS, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({
                **r,
                "total_length_km": f"{r['total_length_km']:.6f}",
                "density_km_per_km2": f"{r['density_km_per_km2']:.6f}",
            })


def read_stats_csv(path: Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [
            {
                "county_id": r["county_id"],
                "year": int(r["year"]),
                "total_length_km": float(r["total_length_km"]),
                "density_km_per_km2": float(r["density_km_per_km2"]),
                "node_count": int(r["node_count"]),
                "edge_count": int(r["edge_count"]),
            }
            for r in csv.DictReader(fh)
        ]

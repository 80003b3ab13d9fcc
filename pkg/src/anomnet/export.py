"""GeoJSON link maps and node-degree tables."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .grid import GridSpec
from .netbuild import YearNetwork


@dataclass
class LinkMap:
    grid: GridSpec
    network: YearNetwork
    metric: str = ""

    @property
    def polarity(self) -> str:
        return self.network.polarity


def to_signed_lon(lon):
    """Map longitudes to [-180, 180)."""
    return (np.asarray(lon, dtype=np.float64) + 180.0) % 360.0 - 180.0


def edge_segments(lon1: float, lat1: float, lon2: float, lat2: float) -> list[list[list[float]]]:
    """Straight segment(s) between two points, split where the shorter
    longitudinal arc crosses the antimeridian.

    Inputs may use any longitude convention; output is in [-180, 180].
    """
    lon1 = float(to_signed_lon(lon1))
    lon2 = float(to_signed_lon(lon2))
    d = lon2 - lon1
    if d > 180.0:
        end = lon2 - 360.0
    elif d < -180.0:
        end = lon2 + 360.0
    else:
        return [[[lon1, lat1], [lon2, lat2]]]
    if -180.0 <= end <= 180.0:
        # shorter arc ends exactly on the antimeridian
        return [[[lon1, lat1], [end, lat2]]]
    edge = 180.0 if end > 180.0 else -180.0
    frac = (edge - lon1) / (end - lon1)
    lat_x = lat1 + frac * (lat2 - lat1)
    return [
        [[lon1, lat1], [edge, lat_x]],
        [[-edge, lat_x], [lon2, lat2]],
    ]


def link_features(link_map: LinkMap) -> list[dict]:
    grid, net = link_map.grid, link_map.network
    lats, lons = grid.node_lats(), grid.node_lons()
    features = []
    for m, n, w, tau in net.edges():
        props = {
            "m": m, "n": n, "weight": w, "tau": tau, "year": int(net.year),
            "polarity": net.polarity, "metric": link_map.metric,
        }
        for seg in edge_segments(lons[m], float(lats[m]), lons[n], float(lats[n])):
            features.append({
                "type": "Feature",
                "geometry": {"type": "LineString", "coordinates": seg},
                "properties": dict(props),
            })
    return features


def export_geojson(link_map: LinkMap, path) -> None:
    doc = {"type": "FeatureCollection", "features": link_features(link_map)}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=None, separators=(",", ":"))
        fh.write("\n")


def node_degrees(network: YearNetwork) -> dict[int, int]:
    """Degree per node with at least one edge, sorted by degree descending then id."""
    ends = np.concatenate([np.asarray(network.m, np.int64), np.asarray(network.n, np.int64)])
    if ends.size == 0:
        return {}
    ids, counts = np.unique(ends, return_counts=True)
    order = np.lexsort((ids, -counts))
    return {int(ids[i]): int(counts[i]) for i in order}


def export_node_degree_csv(network: YearNetwork, grid: GridSpec, path) -> None:
    lats, lons = grid.node_lats(), to_signed_lon(grid.node_lons())
    with open(path, "w", newline="") as fh:
        fh.write("node_id,lat,lon,degree\n")
        for node, deg in node_degrees(network).items():
            fh.write(f"{node},{float(lats[node])!r},{float(lons[node])!r},{deg}\n")

import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from anomnet.export import (
    LinkMap, edge_segments, export_geojson, export_node_degree_csv, link_features, node_degrees,
    to_signed_lon,
)
from anomnet.grid import GridSpec
from anomnet.netbuild import YearNetwork

GRID = GridSpec(3, 4, 30.0, 90.0, 30.0, 0.0)  # lons 0, 90, 180, 270


def network(pairs, year=2000, polarity="positive"):
    m, n = zip(*pairs) if pairs else ((), ())
    k = len(pairs)
    return YearNetwork(year, polarity, np.asarray(m, np.uint32), np.asarray(n, np.uint32),
                       np.linspace(4, 5, k), np.arange(k, dtype=np.int16))


def test_signed_lon():
    assert to_signed_lon([0, 90, 180, 270, 359, -190]).tolist() == [0, 90, -180, -90, -1, 170]


def test_empty_geojson(tmp_path):
    export_geojson(LinkMap(GRID, YearNetwork.empty(2000, "positive"), "t2m"), tmp_path / "m.geojson")
    doc = json.loads((tmp_path / "m.geojson").read_text())
    assert doc == {"type": "FeatureCollection", "features": []}


def test_adjacent_edge_single_segment(tmp_path):
    export_geojson(LinkMap(GRID, network([(0, 1)]), "t2m"), tmp_path / "m.geojson")
    doc = json.loads((tmp_path / "m.geojson").read_text())
    (feat,) = doc["features"]
    assert feat["geometry"] == {"type": "LineString", "coordinates": [[0.0, 30.0], [90.0, 30.0]]}
    assert feat["properties"] == {"m": 0, "n": 1, "weight": 4.0, "tau": 0, "year": 2000,
                                  "polarity": "positive", "metric": "t2m"}


def test_antimeridian_split():
    segs = edge_segments(170.0, 10.0, 190.0, 20.0)
    assert segs == [[[170.0, 10.0], [180.0, 15.0]], [[-180.0, 15.0], [-170.0, 20.0]]]
    back = edge_segments(-170.0, 20.0, 170.0, 10.0)
    assert back == [[[-170.0, 20.0], [-180.0, 15.0]], [[180.0, 15.0], [170.0, 10.0]]]


def test_no_split_when_short_arc_stays_inside():
    assert edge_segments(10.0, 0.0, 100.0, 5.0) == [[[10.0, 0.0], [100.0, 5.0]]]
    assert len(edge_segments(-100.0, 0.0, 60.0, 0.0)) == 1


def test_split_features_share_properties():
    g = GridSpec(1, 2, 0.0, 20.0, 0.0, 170.0)  # lons 170, 190
    feats = link_features(LinkMap(g, network([(0, 1)]), "wind"))
    assert len(feats) == 2 and feats[0]["properties"] == feats[1]["properties"]


@given(st.floats(-180, 179.99), st.floats(-80, 80), st.floats(-180, 179.99), st.floats(-80, 80))
def test_segments_stay_in_range_and_short(lon1, lat1, lon2, lat2):
    segs = edge_segments(lon1, lat1, lon2, lat2)
    span = 0.0
    for seg in segs:
        assert len(seg) == 2
        for lon, lat in seg:
            assert -180.0 <= lon <= 180.0
            assert min(lat1, lat2) - 1e-9 <= lat <= max(lat1, lat2) + 1e-9
        span += abs(seg[1][0] - seg[0][0])
    assert span <= 180.0 + 1e-9


def test_degrees_single_edge_and_star(tmp_path):
    assert node_degrees(network([(2, 5)])) == {2: 1, 5: 1}
    star = network([(0, 3), (3, 7), (3, 9)])
    assert list(node_degrees(star).items()) == [(3, 3), (0, 1), (7, 1), (9, 1)]
    export_node_degree_csv(star, GRID, tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0] == "node_id,lat,lon,degree"
    assert lines[1] == "3,30.0,-90.0,3"
    assert len(lines) == 5


def test_degree_csv_empty(tmp_path):
    export_node_degree_csv(YearNetwork.empty(2000, "negative"), GRID, tmp_path / "d.csv")
    assert (tmp_path / "d.csv").read_text() == "node_id,lat,lon,degree\n"

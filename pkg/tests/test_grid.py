import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from anomnet.errors import InvalidInputError, ParseError
from anomnet.grid import (
    GridSpec, NodeMask, haversine, load_mask, node_coords, node_index, pair_count, regrid_nearest,
    store_mask,
)
from anomnet.ingest import DAYS, MISSING, DailyField

DEFAULT = GridSpec()


def test_default_grid_dimensions():
    assert (DEFAULT.n_lat, DEFAULT.n_lon) == (73, 96)
    assert DEFAULT.node_count == 7008
    assert DEFAULT.lats()[0] == 90.0 and DEFAULT.lats()[-1] == -90.0


@pytest.mark.parametrize("ij, expected", [((0, 0), 0), ((72, 95), 7007), ((1, 0), 96)])
def test_node_index_examples(ij, expected):
    assert node_index(*ij, DEFAULT) == expected


@pytest.mark.parametrize("ij", [(-1, 0), (73, 0), (0, 96), (0, -1)])
def test_node_index_out_of_range(ij):
    with pytest.raises(IndexError):
        node_index(*ij, DEFAULT)


def test_node_coords_rejects_bad_id():
    with pytest.raises(IndexError):
        node_coords(7008, DEFAULT)


@given(st.integers(0, 7007))
def test_node_index_inverts_node_coords(node):
    assert node_index(*node_coords(node, DEFAULT), DEFAULT) == node


def test_node_index_is_bijection():
    g = GridSpec(5, 7, 10.0, 20.0)
    ids = [node_index(i, j, g) for i in range(5) for j in range(7)]
    assert sorted(ids) == list(range(35))


@pytest.mark.parametrize("kwargs", [
    dict(n_lat=0), dict(n_lon=0), dict(n_lat=74), dict(n_lon=97),
])
def test_gridspec_invariants(kwargs):
    with pytest.raises(InvalidInputError):
        GridSpec(**kwargs)


@pytest.mark.parametrize("k, pairs", [(7008, 24_552_528), (1330, 883_785), (1619, 1_309_771), (1, 0)])
def test_pair_count_reference_values(k, pairs):
    valid = np.zeros(7008, bool)
    valid[:k] = True
    assert pair_count(NodeMask(valid)) == pairs


@pytest.mark.parametrize("k", range(0, 101))
def test_pair_count_matches_enumeration(k):
    assert pair_count(k) == sum(1 for _ in itertools.combinations(range(k), 2))


def test_mask_csv_round_trip(tmp_path):
    g = GridSpec(3, 4, 30.0, 90.0)
    mask = NodeMask(np.arange(12) % 3 == 0)
    store_mask(mask, tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text().startswith("node_id,valid\n0,1\n1,0\n")
    assert load_mask(tmp_path / "m.csv", g) == mask


def test_mask_csv_rejects_incomplete(tmp_path):
    (tmp_path / "m.csv").write_text("node_id,valid\n0,1\n1,1\n")
    with pytest.raises(ParseError):
        load_mask(tmp_path / "m.csv", GridSpec(3, 4, 30.0, 90.0))


def test_mask_csv_rejects_bad_flag(tmp_path):
    (tmp_path / "m.csv").write_text("node_id,valid\n0,2\n")
    with pytest.raises(ParseError, match="line 2"):
        load_mask(tmp_path / "m.csv")


# ---------------------------------------------------------------------------
# regridding


def _field(grid, values_per_node):
    v = np.broadcast_to(np.asarray(values_per_node, np.float32), (1, DAYS, grid.node_count))
    return DailyField(grid, 2000, v.copy())


def brute_nearest(src: GridSpec, lat, lon):
    """Independent nearest search: spherical law of cosines over every source node."""
    best, best_d = None, None
    for node in range(src.node_count):
        slat, slon = src.coords(node)
        p1, p2 = np.radians(lat), np.radians(slat)
        c = np.sin(p1) * np.sin(p2) + np.cos(p1) * np.cos(p2) * np.cos(np.radians(lon - slon))
        d = np.arccos(np.clip(c, -1, 1))
        if best_d is None or d < best_d - 1e-12:
            best, best_d = node, d
    return best


def test_regrid_identity():
    g = GridSpec(4, 6, 30.0, 60.0, 45.0, 0.0)
    f = _field(g, np.arange(24))
    out = regrid_nearest(f, g)
    assert out.equals(f)
    assert regrid_nearest(out, g).equals(out)


def test_regrid_constant_from_finer_grid():
    fine = GridSpec(9, 16, 22.5, 22.5)
    coarse = GridSpec(5, 8, 45.0, 45.0)
    out = regrid_nearest(_field(fine, np.full(fine.node_count, 5.0)), coarse)
    assert np.all(out.values == 5.0)


def test_regrid_longitude_wraparound():
    # source columns at 350 and 0 (=360); target column at 359 and 352
    src = GridSpec(1, 2, 0.0, 10.0, 0.0, 350.0)
    f = _field(src, [350.0, 0.0])
    near_zero = regrid_nearest(f, GridSpec(1, 1, 0.0, 1.0, 0.0, 359.0))
    assert near_zero.values[0, 0, 0] == 0.0
    assert brute_nearest(src, 0.0, 359.0) == 1
    near_350 = regrid_nearest(f, GridSpec(1, 1, 0.0, 1.0, 0.0, 352.0))
    assert near_350.values[0, 0, 0] == 350.0


def test_regrid_matches_brute_force():
    src = GridSpec(7, 12, 30.0, 30.0, 90.0, 7.5)
    tgt = GridSpec(5, 9, 40.0, 40.0, 80.0, 3.0)
    out = regrid_nearest(_field(src, np.arange(src.node_count)), tgt)
    expected = [brute_nearest(src, *tgt.coords(t)) for t in range(tgt.node_count)]
    assert out.values[0, 0].astype(int).tolist() == expected


def test_regrid_pole_ties_pick_smallest_id():
    src = GridSpec(3, 4, 90.0, 90.0)  # row 0 is the north pole, four coincident centres
    out = regrid_nearest(_field(src, np.arange(12)), GridSpec(1, 3, 0.0, 120.0, 90.0, 0.0))
    assert out.values[0, 0].tolist() == [0.0, 0.0, 0.0]


def test_regrid_propagates_missing():
    g = GridSpec(2, 2, 90.0, 180.0, 45.0, 0.0)
    f = _field(g, [1.0, MISSING, 3.0, 4.0])
    out = regrid_nearest(f, GridSpec(2, 2, 90.0, 180.0, 44.0, 1.0))
    assert out.missing[0, 0].tolist() == [False, True, False, False]


def test_haversine_quarter_circle():
    assert haversine(0.0, 0.0, 0.0, 90.0) == pytest.approx(np.pi / 2)
    assert haversine(90.0, 0.0, 90.0, 123.0) == pytest.approx(0.0, abs=1e-12)

"""Regular latitude/longitude grids, node masks and nearest-neighbour regridding.

Rows run north to south starting at ``lat_origin``; columns run east from
``lon_origin`` and wrap at 360 degrees. Node ids are row-major:
``node_id = lat_index * n_lon + lon_index``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, ParseError


@dataclass(frozen=True)
class GridSpec:
    n_lat: int = 73
    n_lon: int = 96
    lat_step: float = 2.5
    lon_step: float = 3.75
    lat_origin: float = 90.0
    lon_origin: float = 0.0

    def __post_init__(self):
        if self.n_lat < 1 or self.n_lon < 1:
            raise InvalidInputError("grid needs at least one row and one column")
        if self.lat_step < 0 or self.lon_step <= 0:
            raise InvalidInputError("grid steps must be positive")
        if (self.n_lat - 1) * self.lat_step > 180:
            raise InvalidInputError("latitude span exceeds 180 degrees")
        if self.n_lon * self.lon_step > 360 + 1e-9:
            raise InvalidInputError("longitude span exceeds 360 degrees")

    @property
    def node_count(self) -> int:
        return self.n_lat * self.n_lon

    def lats(self) -> np.ndarray:
        """Row latitudes, north to south."""
        return self.lat_origin - self.lat_step * np.arange(self.n_lat)

    def lons(self) -> np.ndarray:
        """Column longitudes in [0, 360)."""
        return np.mod(self.lon_origin + self.lon_step * np.arange(self.n_lon), 360.0)

    def node_lats(self) -> np.ndarray:
        return np.repeat(self.lats(), self.n_lon)

    def node_lons(self) -> np.ndarray:
        return np.tile(self.lons(), self.n_lat)

    def coords(self, node_id: int) -> tuple[float, float]:
        """(lat, lon) of a node's centre, lon in [0, 360)."""
        i, j = node_coords(node_id, self)
        return float(self.lats()[i]), float(self.lons()[j])


def node_index(lat_index: int, lon_index: int, grid: GridSpec) -> int:
    if not 0 <= lat_index < grid.n_lat:
        raise IndexError(f"lat_index {lat_index} outside [0, {grid.n_lat})")
    if not 0 <= lon_index < grid.n_lon:
        raise IndexError(f"lon_index {lon_index} outside [0, {grid.n_lon})")
    return lat_index * grid.n_lon + lon_index


def node_coords(node_id: int, grid: GridSpec) -> tuple[int, int]:
    """Inverse of :func:`node_index`: ``(lat_index, lon_index)``."""
    if not 0 <= node_id < grid.node_count:
        raise IndexError(f"node id {node_id} outside [0, {grid.node_count})")
    return divmod(int(node_id), grid.n_lon)


@dataclass(frozen=True, eq=False)
class NodeMask:
    valid: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "valid", np.asarray(self.valid, dtype=bool).ravel())

    def __len__(self):
        return self.valid.size

    def __eq__(self, other):
        return isinstance(other, NodeMask) and np.array_equal(self.valid, other.valid)

    @classmethod
    def all_valid(cls, n: int) -> "NodeMask":
        return cls(np.ones(n, dtype=bool))

    @property
    def effective_size(self) -> int:
        return int(np.count_nonzero(self.valid))

    def nodes(self) -> np.ndarray:
        """Ids of valid nodes, ascending."""
        return np.flatnonzero(self.valid)

    def __and__(self, other: "NodeMask") -> "NodeMask":
        return NodeMask(self.valid & other.valid)


def pair_count(mask) -> int:
    """Unordered pairs among the valid nodes of ``mask``.

    Accepts a :class:`NodeMask` or a plain node count.
    """
    k = mask.effective_size if isinstance(mask, NodeMask) else int(mask)
    return k * (k - 1) // 2


def load_mask(path, grid: GridSpec | None = None) -> NodeMask:
    """Read a ``node_id,valid`` CSV."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["node_id", "valid"]:
            raise ParseError("mask header must be 'node_id,valid'", 1)
        ids, flags = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                node, flag = int(row[0]), int(row[1])
            except (ValueError, IndexError):
                raise ParseError(f"bad mask row {row!r}", lineno) from None
            if flag not in (0, 1):
                raise ParseError(f"valid must be 0 or 1, got {flag}", lineno)
            ids.append(node)
            flags.append(flag)
    ids = np.asarray(ids, dtype=np.int64)
    n = grid.node_count if grid is not None else len(ids)
    if len(ids) != n or not np.array_equal(np.sort(ids), np.arange(n)):
        raise ParseError(f"mask must list every node id 0..{n - 1} exactly once")
    valid = np.zeros(n, dtype=bool)
    valid[ids] = np.asarray(flags, dtype=bool)
    return NodeMask(valid)


def store_mask(mask: NodeMask, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("node_id,valid\n")
        for i, v in enumerate(mask.valid):
            fh.write(f"{i},{int(v)}\n")


def _coslat(lat):
    # exact zero at the poles so every longitude there is equidistant
    lat = np.asarray(lat, dtype=np.float64)
    return np.where(np.abs(lat) == 90.0, 0.0, np.cos(np.radians(lat)))


def haversine(lat1, lon1, lat2, lon2):
    """Central angle in radians between points given in degrees (broadcasts)."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dphi = p2 - p1
    dlam = np.radians(lon2 - lon1)
    h = np.sin(dphi / 2) ** 2 + _coslat(lat1) * _coslat(lat2) * np.sin(dlam / 2) ** 2
    return 2 * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def nearest_source_nodes(source: GridSpec, target: GridSpec, chunk: int = 512) -> np.ndarray:
    """For each target node, the id of the nearest source node.

    Brute force over all source nodes; ties go to the smallest source id
    (``argmin`` returns the first minimum).
    """
    if source.node_count == 0:
        raise InvalidInputError("empty source grid")
    slat, slon = source.node_lats(), source.node_lons()
    tlat, tlon = target.node_lats(), target.node_lons()
    out = np.empty(target.node_count, dtype=np.int64)
    for start in range(0, target.node_count, chunk):
        stop = min(start + chunk, target.node_count)
        d = haversine(tlat[start:stop, None], tlon[start:stop, None], slat[None, :], slon[None, :])
        out[start:stop] = np.argmin(d, axis=1)
    return out


def regrid_nearest(field, target: GridSpec):
    """Resample a :class:`~anomnet.ingest.DailyField` onto ``target``.

    Each target node copies the series of its nearest source node, missing
    entries included.
    """
    from .ingest import DailyField

    if field.grid == target:
        return DailyField(target, field.year_first, field.values.copy())
    idx = nearest_source_nodes(field.grid, target)
    return DailyField(target, field.year_first, np.ascontiguousarray(field.values[:, :, idx]))

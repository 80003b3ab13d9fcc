"""Synthetic fields with planted cross-node couplings at known delays."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import InvalidInputError
from .grid import GridSpec
from .ingest import DAYS, AnnualSeries, DailyField


@dataclass(frozen=True)
class PlantSpec:
    """Target series = coupling * (source shifted by ``delay`` days) + noise.

    A positive delay makes the target lag the source.
    """

    source_node: int
    target_node: int
    delay: int
    coupling: float = 1.0
    noise_sigma: float = 0.0

    def __post_init__(self):
        if self.source_node == self.target_node:
            raise InvalidInputError("plant source and target must differ")
        if not -1.0 <= self.coupling <= 1.0:
            raise InvalidInputError("coupling must lie in [-1, 1]")
        if self.noise_sigma < 0:
            raise InvalidInputError("noise_sigma must be non-negative")
        if abs(self.delay) >= DAYS:
            raise InvalidInputError(f"|delay| must be below {DAYS}")

    @classmethod
    def parse(cls, text: str) -> "PlantSpec":
        """``source:target:delay[:coupling[:noise_sigma]]``"""
        parts = text.split(":")
        if not 3 <= len(parts) <= 5:
            raise InvalidInputError(f"bad plant spec {text!r}")
        try:
            src, tgt, delay = int(parts[0]), int(parts[1]), int(parts[2])
            rest = [float(p) for p in parts[3:]]
        except ValueError:
            raise InvalidInputError(f"bad plant spec {text!r}") from None
        return cls(src, tgt, delay, *rest)

    def format(self) -> str:
        return f"{self.source_node}:{self.target_node}:{self.delay}:{self.coupling!r}:{self.noise_sigma!r}"


def shift_days(x: np.ndarray, delay: int) -> np.ndarray:
    """Shift along the last (day) axis, zero-filling at the year edges."""
    out = np.zeros_like(x)
    if delay > 0:
        out[..., delay:] = x[..., :-delay]
    elif delay < 0:
        out[..., :delay] = x[..., -delay:]
    else:
        out[...] = x
    return out


def _node_noise(seed: int, node: int, n_years: int) -> np.ndarray:
    return rng.generator(seed, rng.SYNTH_FIELD, node).standard_normal((n_years, DAYS))


def generate_field(grid: GridSpec, years, plants=(), base_sigma: float = 1.0, seed: int = 0,
                   threads: int | None = None) -> DailyField:
    """Independent Gaussian noise per node, then plants applied in order.

    ``years`` is a ``range`` or ``(first, last)`` inclusive pair. Each
    node's noise comes from its own stream keyed by (seed, node), so the
    result does not depend on ``threads``. A plant reads the current
    series of its source, so chained plants compose in list order.
    """
    if base_sigma <= 0:
        raise InvalidInputError("base_sigma must be positive")
    first, n_years = _year_span(years)
    n = grid.node_count
    for p in plants:
        for node in (p.source_node, p.target_node):
            if not 0 <= node < n:
                raise InvalidInputError(f"plant node {node} outside grid of {n} nodes")

    def one(node):
        return _node_noise(seed, node, n_years)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            noise = list(pool.map(one, range(n)))
    else:
        noise = [one(i) for i in range(n)]
    data = base_sigma * np.stack(noise, axis=-1)  # (year, day, node)

    for p in plants:
        src = data[:, :, p.source_node]
        # the target's own stream supplies the plant noise
        data[:, :, p.target_node] = (
            p.coupling * shift_days(src, p.delay) + p.noise_sigma * noise[p.target_node]
        )
    return DailyField(grid, first, data.astype(np.float32))


def _year_span(years) -> tuple[int, int]:
    if isinstance(years, range):
        if years.step != 1 or len(years) < 1:
            raise InvalidInputError("years must be a non-empty contiguous range")
        return years.start, len(years)
    first, last = years
    if last < first:
        raise InvalidInputError("last year precedes first year")
    return int(first), int(last) - int(first) + 1


def generate_annual_events(years, start: float, trend: float, noise_sigma: float = 0.0,
                           seed: int = 0) -> AnnualSeries:
    """Non-negative integer counts: ``start + trend * i + noise``, rounded.

    ``i`` counts years from the first one. Rounding is half-to-even.
    """
    first, n_years = _year_span(years)
    i = np.arange(n_years, dtype=np.float64)
    level = start + trend * i
    if noise_sigma > 0:
        level = level + noise_sigma * rng.generator(seed, rng.SYNTH_EVENTS).standard_normal(n_years)
    counts = np.maximum(np.rint(level), 0.0)
    return AnnualSeries(np.arange(first, first + n_years), counts)

"""Network summaries: link counts, heaviest-link trends, delay and weight
histograms, and correlation of annual counts with external event series."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidInputError, UndefinedCorrelationError
from .ingest import AnnualSeries
from .netbuild import LinkWeightSet, YearNetwork, _check_polarity, top_k


def links_per_year(networks: Iterable[YearNetwork]) -> AnnualSeries:
    networks = list(networks)
    polarities = {net.polarity for net in networks}
    if len(polarities) > 1:
        raise InvalidInputError("networks mix polarities")
    years = [net.year for net in networks]
    if len(set(years)) != len(years):
        raise InvalidInputError("more than one network for the same year")
    return AnnualSeries(years, [len(net) for net in networks])


def heaviest_links_per_year(weight_sets: Sequence[LinkWeightSet], polarity: str,
                            k_values: Iterable[int]) -> dict[int, AnnualSeries]:
    """Per-year counts of the k heaviest links pooled over all years.

    One global cut per k. Ties at the cut are broken by earlier year, then
    smaller (m, n). With fewer than k defined links everything survives.
    """
    _check_polarity(polarity)
    k_values = _check_k(k_values)
    # the global top-k of any year is a prefix of that year's own top-k
    candidates = [top_k(ws, polarity, max(k_values)) for ws in weight_sets]
    return {k: links_per_year(pooled_top_k(candidates, k)) for k in k_values}


def _check_k(k_values) -> list[int]:
    k_values = [int(k) for k in k_values]
    if not k_values:
        raise InvalidInputError("k_values must not be empty")
    if any(k < 1 for k in k_values):
        raise InvalidInputError("every k must be at least 1")
    return k_values


def pooled_top_k(networks: Sequence[YearNetwork], k: int) -> list[YearNetwork]:
    """The k heaviest edges across all networks, one cut for every year.

    Returns one network per input year (possibly empty), edges in pair order.
    """
    years = [net.year for net in networks]
    if len(set(years)) != len(years):
        raise InvalidInputError("more than one network for the same year")
    if not networks:
        return []
    w = np.concatenate([np.asarray(net.weight, np.float64) for net in networks])
    yr = np.concatenate([np.full(len(net), i, np.int64) for i, net in enumerate(networks)])
    m = np.concatenate([np.asarray(net.m, np.int64) for net in networks])
    n = np.concatenate([np.asarray(net.n, np.int64) for net in networks])
    year_key = np.asarray(years, np.int64)[yr]
    keep = np.zeros(w.size, dtype=bool)
    keep[np.lexsort((n, m, year_key, -w))[:k]] = True
    out = []
    offset = 0
    for net in networks:
        sel = np.flatnonzero(keep[offset:offset + len(net)])
        offset += len(net)
        out.append(YearNetwork(net.year, net.polarity, net.m[sel], net.n[sel], net.weight[sel], net.tau[sel]))
    return out


def delay_histogram(networks) -> dict[int, int]:
    """Edge count per delay, including empty delays inside the observed range."""
    if isinstance(networks, YearNetwork):
        networks = [networks]
    taus = [np.asarray(net.tau, dtype=np.int64) for net in networks]
    taus = np.concatenate(taus) if taus else np.empty(0, np.int64)
    if taus.size == 0:
        return {}
    lo, hi = int(taus.min()), int(taus.max())
    counts = np.bincount(taus - lo, minlength=hi - lo + 1)
    return {lo + i: int(c) for i, c in enumerate(counts)}


@dataclass
class WeightHistogram:
    edges: np.ndarray
    counts: np.ndarray
    label: str = "regular"

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def weight_histogram(weights, polarity: str, bin_width: float, label: str | None = None) -> WeightHistogram:
    """Uniform bins ``[i*w, (i+1)*w)`` from 0 up past the largest defined weight.

    Accepts one :class:`LinkWeightSet` or a sequence of them (pooled).
    """
    if not bin_width > 0:
        raise InvalidInputError("bin_width must be positive")
    sets = [weights] if isinstance(weights, LinkWeightSet) else list(weights)
    vals = [ws.defined_weights(polarity) for ws in sets]
    vals = np.concatenate(vals) if vals else np.empty(0)
    if label is None:
        label = sets[0].label if sets else "regular"
    return histogram_from_values(vals, bin_width, label)


def histogram_from_values(values, bin_width: float, label: str = "regular") -> WeightHistogram:
    if not bin_width > 0:
        raise InvalidInputError("bin_width must be positive")
    vals = np.asarray(values, dtype=np.float64)
    n_bins = int(math.floor(vals.max() / bin_width)) + 1 if vals.size else 1
    edges = bin_width * np.arange(n_bins + 1, dtype=np.float64)
    idx = np.clip(np.floor(vals / bin_width).astype(np.int64), 0, n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    return WeightHistogram(edges, counts, label)


def _overlap(a: AnnualSeries, b: AnnualSeries, lag: int = 0):
    """Values of a at year y and b at year y + lag, over the common years."""
    years, ia, ib = np.intersect1d(a.years, b.years - lag, return_indices=True)
    return a.values[ia], b.values[ib], years


def _r(x: np.ndarray, y: np.ndarray) -> float:
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("series is constant on the overlapping years")
    r = float(np.dot(dx, dy)) / (math.sqrt(sxx) * math.sqrt(syy))
    return min(1.0, max(-1.0, r))


def pearson(a: AnnualSeries, b: AnnualSeries) -> float:
    """Pearson r over the years both series cover.

    The (n - 1) factors of the sample covariance and standard deviations
    cancel, so none appear.
    """
    x, y, _ = _overlap(a, b)
    if x.size < 2:
        raise InvalidInputError("series share fewer than 2 years")
    return _r(x, y)


def best_lagged_pearson(a: AnnualSeries, b: AnnualSeries, max_lag: int) -> tuple[float, int]:
    """Lag in ``[-max_lag, max_lag]`` maximising ``|r|`` of a(y) against b(y + lag).

    Lags with fewer than 2 shared years or a constant side are skipped.
    Equal ``|r|`` goes to the smaller ``|lag|``, then the negative lag.
    """
    if max_lag < 0:
        raise InvalidInputError("max_lag must be non-negative")
    best = None
    for lag in sorted(range(-max_lag, max_lag + 1), key=lambda L: (abs(L), L)):
        x, y, _ = _overlap(a, b, lag)
        if x.size < 2:
            continue
        try:
            r = _r(x, y)
        except UndefinedCorrelationError:
            continue
        if best is None or abs(r) > abs(best[0]):
            best = (r, lag)
    if best is None:
        raise InvalidInputError("no lag gives at least 2 shared years with non-constant series")
    return best


# ---------------------------------------------------------------------------
# CSV writers


def store_weight_histogram(hist: WeightHistogram, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("bin_left,bin_right,count\n")
        for lo, hi, c in zip(hist.edges[:-1], hist.edges[1:], hist.counts):
            fh.write(f"{float(lo)!r},{float(hi)!r},{int(c)}\n")


def store_delay_histogram(hist: dict[int, int], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("tau,count\n")
        for tau, c in hist.items():
            fh.write(f"{tau},{c}\n")

"""Per-year delayed cross-covariance networks and their surrogates.

Floating-point contract
-----------------------
All arithmetic is float64 with a fixed summation order, so results do not
depend on how pairs are split across threads and can be matched bit for bit
by a plain-Python reimplementation:

* within-year mean: left-to-right sum over days 0..364, divided by 365;
* ``C(tau)``: left-to-right sum over aligned days ``d`` ascending of
  ``(a_m[d] - mean_m) * (a_n[d + tau] - mean_n)``, divided by the number of
  aligned days ``365 - |tau|`` (no wraparound at year edges);
* curve mean and variance: start from the ``tau = 0`` term, then add
  ``(x[-t] + x[t])`` for ``t = 1..tau_max``. Reversing the curve (swapping
  the pair) therefore gives identical statistics;
* the standard deviation is the sample (n - 1) one.

Ties in argmax/argmin go to the smallest ``|tau|``, then to the negative delay.
"""

from __future__ import annotations

import contextlib
import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import NamedTuple, Sequence

import numba
import numpy as np
from numba import njit, prange

from . import rng
from .errors import InvalidInputError, ParseError
from .grid import NodeMask
from .ingest import DAYS, MISSING, DailyField

EPSILON = 1e-12
FLAG_DEGENERATE = 1  # curve std below EPSILON
FLAG_COINCIDENT = 2  # surrogate pair whose year blocks came from the same input year

POLARITIES = ("positive", "negative")


def _check_polarity(polarity: str) -> str:
    if polarity not in POLARITIES:
        raise InvalidInputError(f"polarity must be one of {POLARITIES}, got {polarity!r}")
    return polarity


@dataclass(frozen=True)
class DelayRange:
    tau_max: int = 10

    def __post_init__(self):
        if self.tau_max < 0:
            raise InvalidInputError("tau_max must be non-negative")
        if self.tau_max >= DAYS:
            raise InvalidInputError(f"tau_max must be below {DAYS}")

    @property
    def size(self) -> int:
        return 2 * self.tau_max + 1

    def lags(self) -> np.ndarray:
        return np.arange(-self.tau_max, self.tau_max + 1)


@dataclass
class CrossCovCurve:
    m: int
    n: int
    year: int | None
    tau_max: int
    values: np.ndarray

    def lags(self) -> np.ndarray:
        return np.arange(-self.tau_max, self.tau_max + 1)


class LinkWeight(NamedTuple):
    P: float
    N: float
    tau_P: int
    tau_N: int
    defined: bool


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True)
def _center(x):
    s = 0.0
    for d in range(x.shape[0]):
        s += x[d]
    mean = s / x.shape[0]
    out = np.empty(x.shape[0])
    for d in range(x.shape[0]):
        out[d] = x[d] - mean
    return out


@njit(cache=True)
def _center_rows(X):
    out = np.empty(X.shape)
    for i in range(X.shape[0]):
        out[i] = _center(X[i])
    return out


@njit(cache=True)
def _curve_into(xm, xn, tau_max, out):
    # days outer, lags inner: each lag still accumulates over ascending days,
    # but the independent lag sums can proceed side by side
    T = xm.shape[0]
    L = 2 * tau_max + 1
    acc = np.zeros(L)
    for d in range(T):
        a = xm[d]
        if tau_max <= d < T - tau_max:
            base = d - tau_max
            for k in range(L):
                acc[k] += a * xn[base + k]
        else:
            for k in range(L):
                e = d + k - tau_max
                if 0 <= e < T:
                    acc[k] += a * xn[e]
    for k in range(L):
        out[k] = acc[k] / (T - abs(k - tau_max))


@njit(cache=True)
def _extrema(c, tau_max):
    L = 2 * tau_max + 1
    s = c[tau_max]
    for t in range(1, tau_max + 1):
        s += c[tau_max - t] + c[tau_max + t]
    mean = s / L
    d0 = c[tau_max] - mean
    ss = d0 * d0
    for t in range(1, tau_max + 1):
        a = c[tau_max - t] - mean
        b = c[tau_max + t] - mean
        ss += a * a + b * b
    std = math.sqrt(ss / (L - 1))
    if not std >= EPSILON:
        return math.nan, math.nan, 0, 0, True
    kmax = tau_max
    kmin = tau_max
    for t in range(1, tau_max + 1):
        for k in (tau_max - t, tau_max + t):
            if c[k] > c[kmax]:
                kmax = k
            if c[k] < c[kmin]:
                kmin = k
    P = (c[kmax] - mean) / std
    N = (mean - c[kmin]) / std
    return P, N, kmax - tau_max, kmin - tau_max, False


@njit(parallel=True, cache=True)
def _sweep(Xc, tau_max, P, N, tP, tN, flags):
    k = Xc.shape[0]
    L = 2 * tau_max + 1
    for i in prange(k - 1):
        buf = np.empty(L)
        base = i * k - (i * (i + 1)) // 2
        for j in range(i + 1, k):
            _curve_into(Xc[i], Xc[j], tau_max, buf)
            p, q, tp, tq, bad = _extrema(buf, tau_max)
            idx = base + j - i - 1
            P[idx] = p
            N[idx] = q
            tP[idx] = tp
            tN[idx] = tq
            flags[idx] = 1 if bad else 0


@contextlib.contextmanager
def _numba_threads(threads):
    if threads is None:
        yield
        return
    previous = numba.get_num_threads()
    numba.set_num_threads(max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS)))
    try:
        yield
    finally:
        numba.set_num_threads(previous)


# ---------------------------------------------------------------------------
# single pair


def _year_series(a) -> np.ndarray:
    a = np.asarray(a)
    if a.shape != (DAYS,):
        raise InvalidInputError(f"series must hold {DAYS} daily values, got shape {a.shape}")
    if np.any(a == MISSING) or not np.all(np.isfinite(a)):
        raise InvalidInputError("series contains missing values")
    return a.astype(np.float64)


def cross_covariance(a_m, a_n, delays: DelayRange, m: int = 0, n: int = 1, year=None) -> CrossCovCurve:
    """Covariance of ``a_m[d]`` with ``a_n[d + tau]`` for every delay in ``delays``.

    Positive ``tau`` means node n lags node m.
    """
    if not isinstance(delays, DelayRange):
        delays = DelayRange(int(delays))
    xm = _center(_year_series(a_m))
    xn = _center(_year_series(a_n))
    out = np.empty(delays.size)
    _curve_into(xm, xn, delays.tau_max, out)
    return CrossCovCurve(m, n, year, delays.tau_max, out)


def link_weights(curve) -> LinkWeight:
    """Positive and negative link weight of one cross-covariance curve.

    ``P = (max - mean) / std`` and ``N = (mean - min) / std`` over the delay
    grid; ``N`` is the magnitude of the negative-covariance weight. A curve
    whose std is below ``EPSILON`` is undefined (weights NaN, delays 0).
    """
    values = curve.values if isinstance(curve, CrossCovCurve) else curve
    c = np.asarray(values, dtype=np.float64)
    if c.ndim != 1 or c.size < 3 or c.size % 2 == 0:
        raise InvalidInputError("curve must have odd length >= 3 (symmetric delay grid)")
    p, q, tp, tq, bad = _extrema(c, (c.size - 1) // 2)
    return LinkWeight(p, q, int(tp), int(tq), not bad)


# ---------------------------------------------------------------------------
# all pairs


@dataclass(eq=False)
class LinkWeightSet:
    """Link weights for every unordered valid pair ``m < n`` of one year.

    Pairs are stored once, in lexicographic order. ``flags`` is zero for
    usable pairs; see ``FLAG_DEGENERATE`` and ``FLAG_COINCIDENT``.
    """

    year: int
    mask: NodeMask
    tau_max: int
    m: np.ndarray
    n: np.ndarray
    P: np.ndarray
    N: np.ndarray
    tau_P: np.ndarray
    tau_N: np.ndarray
    flags: np.ndarray
    label: str = dc_field(default="regular")

    def __len__(self):
        return self.m.size

    @property
    def defined(self) -> np.ndarray:
        return self.flags == 0

    def weights(self, polarity: str) -> np.ndarray:
        return self.P if _check_polarity(polarity) == "positive" else self.N

    def taus(self, polarity: str) -> np.ndarray:
        return self.tau_P if _check_polarity(polarity) == "positive" else self.tau_N

    def defined_weights(self, polarity: str) -> np.ndarray:
        return self.weights(polarity)[self.defined]

    def as_stored(self) -> "LinkWeightSet":
        """Copy with weights rounded to the float32 precision of ALW1 files."""
        return LinkWeightSet(
            self.year, self.mask, self.tau_max, self.m, self.n,
            self.P.astype(np.float32).astype(np.float64),
            self.N.astype(np.float32).astype(np.float64),
            self.tau_P, self.tau_N, self.flags, self.label,
        )

    def equals(self, other: "LinkWeightSet") -> bool:
        """Bitwise equality of every per-pair array."""
        if self.year != other.year or self.tau_max != other.tau_max:
            return False
        return all(
            a.dtype == b.dtype and a.shape == b.shape and a.tobytes() == b.tobytes()
            for a, b in (
                (self.m, other.m), (self.n, other.n), (self.P, other.P), (self.N, other.N),
                (self.tau_P, other.tau_P), (self.tau_N, other.tau_N), (self.flags, other.flags),
            )
        )


def year_mask(field: DailyField, year: int, mask: NodeMask | None = None) -> NodeMask:
    """Requested mask restricted to nodes with no missing day in ``year``."""
    complete = NodeMask(field.complete_nodes(year))
    if mask is None:
        return complete
    if len(mask) != field.grid.node_count:
        raise InvalidInputError("mask length differs from grid node count")
    return mask & complete


def build_link_weights(
    field: DailyField,
    year: int,
    mask: NodeMask | None = None,
    delays: DelayRange = DelayRange(),
    *,
    exclude_coincident: bool = True,
    threads: int | None = None,
) -> LinkWeightSet:
    """All-pairs link weights of one year.

    Each worker streams pairs through a private curve buffer, so memory is
    the per-pair outputs plus one curve per thread. When ``field`` is a
    surrogate (it carries ``year_source``) and ``exclude_coincident`` is set,
    pairs whose two year blocks were drawn from the same input year are
    flagged ``FLAG_COINCIDENT``: their dependence was not broken.
    """
    if not isinstance(delays, DelayRange):
        delays = DelayRange(int(delays))
    if delays.tau_max < 1:
        raise InvalidInputError("tau_max must be at least 1 so the delay curve has a spread")
    yi = field.year_index(year)
    eff = year_mask(field, year, mask)
    nodes = eff.nodes()
    k = nodes.size
    X = np.ascontiguousarray(field.values[yi][:, nodes].T, dtype=np.float64)
    npairs = k * (k - 1) // 2
    P = np.empty(npairs)
    N = np.empty(npairs)
    tP = np.empty(npairs, dtype=np.int16)
    tN = np.empty(npairs, dtype=np.int16)
    flags = np.empty(npairs, dtype=np.uint8)
    if k >= 2:
        with _numba_threads(threads):
            _sweep(_center_rows(X), delays.tau_max, P, N, tP, tN, flags)
    iu, ju = np.triu_indices(k, 1)
    m = nodes[iu].astype(np.uint32)
    n = nodes[ju].astype(np.uint32)
    if field.year_source is not None and exclude_coincident:
        src = field.year_source[yi]
        flags[src[m] == src[n]] |= FLAG_COINCIDENT
    label = "surrogate" if field.year_source is not None else "regular"
    return LinkWeightSet(year, eff, delays.tau_max, m, n, P, N, tP, tN, flags, label)


# ---------------------------------------------------------------------------
# surrogates


def year_permutations(n_years: int, node_count: int, seed: int, realization: int = 0,
                      threads: int | None = None) -> np.ndarray:
    """``(n_years, node_count)`` array; column ``i`` is node i's year order.

    Node i's permutation depends only on ``(seed, realization, i)``.
    """
    def one(i):
        return rng.permutation(n_years, seed, rng.SHUFFLE, realization, i)

    nodes = range(node_count)
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            cols = list(pool.map(one, nodes))
    else:
        cols = [one(i) for i in nodes]
    if not cols:
        return np.empty((n_years, 0), dtype=np.int64)
    return np.stack(cols, axis=1)


def shuffle_years(field: DailyField, seed: int, *, realization: int = 0,
                  threads: int | None = None) -> DailyField:
    """Surrogate field: each node's year blocks independently permuted.

    Day order inside every year block is untouched. The output records in
    ``year_source[y, node]`` which original year now sits at position ``y``.
    """
    perms = year_permutations(field.n_years, field.grid.node_count, seed, realization, threads)
    values = np.take_along_axis(field.values, perms[:, None, :], axis=0)
    source = perms if field.year_source is None else np.take_along_axis(field.year_source, perms, axis=0)
    return DailyField(field.grid, field.year_first, values, year_source=source)


# ---------------------------------------------------------------------------
# thresholds and networks


@dataclass(frozen=True)
class ThresholdConfig:
    mode: str = "surrogate_max"
    q: float | None = None
    value_override: float | None = None

    def __post_init__(self):
        if self.mode not in ("surrogate_max", "surrogate_quantile"):
            raise InvalidInputError(f"unknown threshold mode {self.mode!r}")
        if self.mode == "surrogate_quantile" and (self.q is None or not 0 < self.q <= 1):
            raise InvalidInputError("surrogate_quantile needs q in (0, 1]")


def _as_list(weight_sets):
    return [weight_sets] if isinstance(weight_sets, LinkWeightSet) else list(weight_sets)


def estimate_threshold(surrogate_weights, config: ThresholdConfig, polarity: str = "positive") -> float:
    """Threshold from one surrogate weight set or a pooled sequence of them."""
    if config.value_override is not None:
        return float(config.value_override)
    pooled = [ws.defined_weights(polarity) for ws in _as_list(surrogate_weights)]
    w = np.concatenate(pooled) if pooled else np.empty(0)
    if w.size == 0:
        raise InvalidInputError(f"no defined {polarity} surrogate weights")
    return threshold_from_values(w, config)


def threshold_from_values(values, config: ThresholdConfig) -> float:
    """Threshold from already pooled defined surrogate weights."""
    if config.value_override is not None:
        return float(config.value_override)
    w = np.asarray(values, dtype=np.float64)
    if w.size == 0:
        raise InvalidInputError("no defined surrogate weights")
    if config.mode == "surrogate_max":
        return float(w.max())
    # linear interpolation between order statistics
    return float(np.quantile(w, config.q, method="linear"))


@dataclass(eq=False)
class YearNetwork:
    year: int
    polarity: str
    m: np.ndarray
    n: np.ndarray
    weight: np.ndarray
    tau: np.ndarray

    def __len__(self):
        return self.m.size

    def edges(self) -> list[tuple[int, int, float, int]]:
        return [
            (int(a), int(b), float(w), int(t))
            for a, b, w, t in zip(self.m, self.n, self.weight, self.tau)
        ]

    def pairs(self) -> set[tuple[int, int]]:
        return {(int(a), int(b)) for a, b in zip(self.m, self.n)}

    @classmethod
    def empty(cls, year: int, polarity: str) -> "YearNetwork":
        return cls(year, polarity, np.empty(0, np.uint32), np.empty(0, np.uint32),
                   np.empty(0), np.empty(0, np.int16))


def _subnetwork(weights: LinkWeightSet, polarity: str, idx: np.ndarray) -> YearNetwork:
    return YearNetwork(
        weights.year, polarity, weights.m[idx], weights.n[idx],
        weights.weights(polarity)[idx], weights.taus(polarity)[idx],
    )


def apply_threshold(weights: LinkWeightSet, polarity: str, threshold: float) -> YearNetwork:
    """Keep defined pairs whose weight is strictly above ``threshold``."""
    if not math.isfinite(threshold):
        raise InvalidInputError("threshold must be finite")
    w = weights.weights(polarity)
    with np.errstate(invalid="ignore"):
        keep = weights.defined & (w > threshold)
    return _subnetwork(weights, polarity, np.flatnonzero(keep))


def top_k(weights: LinkWeightSet, polarity: str, k: int) -> YearNetwork:
    """The ``k`` heaviest defined pairs; ties go to the smaller (m, n)."""
    if k < 1:
        raise InvalidInputError("k must be at least 1")
    w = weights.weights(polarity)
    cand = np.flatnonzero(weights.defined)
    order = np.lexsort((weights.n[cand], weights.m[cand], -w[cand]))
    chosen = np.sort(cand[order[:k]])
    return _subnetwork(weights, polarity, chosen)


def build_surrogates(field: DailyField, seed: int, n_surrogates: int = 1, *,
                     threads: int | None = None) -> list[DailyField]:
    """``n_surrogates`` independently shuffled copies of ``field``."""
    return [shuffle_years(field, seed, realization=r, threads=threads) for r in range(n_surrogates)]


def pooled_threshold(surrogate_sets: Sequence[LinkWeightSet], config: ThresholdConfig,
                     polarity: str, per_year: bool = False):
    """Threshold pooled over all years, or a ``{year: threshold}`` map."""
    if not per_year:
        return estimate_threshold(surrogate_sets, config, polarity)
    by_year: dict[int, list[LinkWeightSet]] = {}
    for ws in surrogate_sets:
        by_year.setdefault(ws.year, []).append(ws)
    return {y: estimate_threshold(sets, config, polarity) for y, sets in sorted(by_year.items())}


# ---------------------------------------------------------------------------
# files

ALW_MAGIC = b"ALW1"
_ALW_HEADER = np.dtype([("magic", "S4"), ("year", "<i4"), ("node_count", "<u4"), ("tau_max", "<u2")])
ALW_RECORD = np.dtype([
    ("m", "<u4"), ("n", "<u4"), ("P", "<f4"), ("N", "<f4"),
    ("tau_P", "<i2"), ("tau_N", "<i2"), ("flags", "u1"),
])


def store_weights(weights: LinkWeightSet, path) -> None:
    """Write an ``ALW1`` file: 14-byte header then 21-byte packed pair records."""
    header = np.zeros(1, dtype=_ALW_HEADER)
    header[0] = (ALW_MAGIC, weights.year, len(weights.mask), weights.tau_max)
    rec = np.empty(len(weights), dtype=ALW_RECORD)
    rec["m"], rec["n"] = weights.m, weights.n
    rec["P"], rec["N"] = weights.P, weights.N
    rec["tau_P"], rec["tau_N"] = weights.tau_P, weights.tau_N
    rec["flags"] = weights.flags
    with open(path, "wb") as fh:
        fh.write(header.tobytes())
        fh.write(rec.tobytes())


def load_weights(path, label: str | None = None) -> LinkWeightSet:
    """Read an ``ALW1`` file.

    The mask is rebuilt from the nodes that appear in pairs, so a lone valid
    node (no pairs) is not recovered.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != ALW_MAGIC:
        raise ParseError("bad magic", 0, unit="byte")
    hsize = _ALW_HEADER.itemsize
    if len(raw) < hsize:
        raise ParseError("truncated header", len(raw), unit="byte")
    header = np.frombuffer(raw, dtype=_ALW_HEADER, count=1)[0]
    body = len(raw) - hsize
    if body % ALW_RECORD.itemsize:
        raise ParseError("truncated pair record", hsize + body - body % ALW_RECORD.itemsize, unit="byte")
    rec = np.frombuffer(raw, dtype=ALW_RECORD, offset=hsize)
    node_count = int(header["node_count"])
    m = rec["m"].astype(np.uint32)
    n = rec["n"].astype(np.uint32)
    if m.size and (np.any(m >= n) or int(n.max()) >= node_count):
        raise ParseError("pair ids out of order or outside node_count", hsize, unit="byte")
    valid = np.zeros(node_count, dtype=bool)
    valid[m] = True
    valid[n] = True
    flags = rec["flags"].astype(np.uint8)
    if label is None:
        label = "surrogate" if np.any(flags & FLAG_COINCIDENT) else "regular"
    return LinkWeightSet(
        int(header["year"]), NodeMask(valid), int(header["tau_max"]), m, n,
        rec["P"].astype(np.float64), rec["N"].astype(np.float64),
        rec["tau_P"].astype(np.int16), rec["tau_N"].astype(np.int16), flags, label,
    )


def store_edges(network: YearNetwork, path) -> None:
    """Edge list CSV ``m,n,weight,tau``."""
    with open(path, "w", newline="") as fh:
        fh.write("m,n,weight,tau\n")
        for a, b, w, t in network.edges():
            fh.write(f"{a},{b},{w!r},{t}\n")


def load_edges(path, year: int, polarity: str) -> YearNetwork:
    _check_polarity(polarity)
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if [h.strip() for h in next(reader, [])] != ["m", "n", "weight", "tau"]:
            raise ParseError("edge list header must be 'm,n,weight,tau'", 1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append((int(row[0]), int(row[1]), float(row[2]), int(row[3])))
            except (ValueError, IndexError):
                raise ParseError(f"bad edge row {row!r}", lineno) from None
    if not rows:
        return YearNetwork.empty(year, polarity)
    m, n, w, t = zip(*rows)
    return YearNetwork(year, polarity, np.asarray(m, np.uint32), np.asarray(n, np.uint32),
                       np.asarray(w, np.float64), np.asarray(t, np.int16))

"""Command-line pipeline: ``anomnet <command> ...``.

Exit status is 0 on success, 1 for domain or validation errors and 2 for
I/O or parse errors. All randomness derives from ``--seed``; when it is
omitted a fresh seed is drawn, printed and written to the run manifest.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__, analysis, export, netbuild, rng, synth
from .errors import AnomnetError, InvalidInputError, ParseError
from .grid import GridSpec, load_mask
from .ingest import (
    AnnualSeries, compute_anomaly, load_annual_series, load_field, store_annual_series, store_field,
)

POLARITIES = netbuild.POLARITIES


# ---------------------------------------------------------------------------
# run configuration


def _parse_years(text: str) -> tuple[int, int]:
    text = text.strip()
    if "-" in text[1:]:
        i = text.index("-", 1)
        first, last = int(text[:i]), int(text[i + 1:])
    else:
        first = last = int(text)
    if last < first:
        raise InvalidInputError(f"year range {text!r} is reversed")
    return first, last


def _parse_bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise InvalidInputError(f"not a boolean: {text!r}")


@dataclass
class RunConfig:
    """Everything ``build`` needs; also what the manifest records."""

    input: str = ""
    output: str = "run"
    metric: str = "anomaly"
    mask: str | None = None
    years: tuple[int, int] | None = None
    tau_max: int = 10
    threshold_mode: str = "surrogate_max"
    threshold_q: float | None = None
    threshold_override: float | None = None
    per_year_threshold: bool = False
    surrogate: bool = False
    surrogates: int = 1
    compute_anomaly: bool = False
    seed: int | None = None
    k_values: tuple[int, ...] = (200, 100, 50)
    bin_width: float = 0.1

    _CONVERTERS = {
        "years": _parse_years,
        "tau_max": int,
        "threshold_q": float,
        "threshold_override": float,
        "per_year_threshold": _parse_bool,
        "surrogate": _parse_bool,
        "surrogates": int,
        "compute_anomaly": _parse_bool,
        "seed": int,
        "k_values": lambda t: tuple(int(k) for k in str(t).replace(",", " ").split()),
        "bin_width": float,
    }

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def set(self, key: str, value) -> None:
        if key not in self.keys():
            raise InvalidInputError(f"unknown config key {key!r}")
        if isinstance(value, str):
            if value.strip().lower() in ("", "none"):
                value = None
            elif key in self._CONVERTERS:
                try:
                    value = self._CONVERTERS[key](value)
                except ValueError:
                    raise InvalidInputError(f"bad value for {key}: {value!r}") from None
        setattr(self, key, value)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        """``key = value`` lines; ``#`` starts a comment."""
        cfg = cls()
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ParseError("expected 'key = value'", lineno)
                key, value = (s.strip() for s in line.split("=", 1))
                try:
                    cfg.set(key, value)
                except InvalidInputError as exc:
                    raise ParseError(str(exc), lineno) from None
        return cfg

    def to_text(self) -> str:
        lines = []
        for key, value in self.as_dict().items():
            if key == "years" and value is not None:
                value = f"{value[0]}-{value[1]}"
            elif key == "k_values":
                value = ",".join(str(k) for k in value)
            lines.append(f"{key} = {'none' if value is None else value}")
        return "\n".join(lines) + "\n"

    def as_dict(self) -> dict:
        d = asdict(self)
        if d["years"] is not None:
            d["years"] = list(d["years"])
        d["k_values"] = list(d["k_values"])
        return d

    def validate(self) -> None:
        if not self.input:
            raise InvalidInputError("config needs an input field path")
        if not Path(self.input).exists():
            raise FileNotFoundError(f"input field not found: {self.input}")
        if self.mask is not None and not Path(self.mask).exists():
            raise FileNotFoundError(f"mask not found: {self.mask}")
        if self.tau_max < 1:
            raise InvalidInputError("tau_max must be ≥ 1 (a single delay has no spread for the link weights)")
        if self.surrogates < 1:
            raise InvalidInputError("surrogates must be ≥ 1")
        if not self.k_values or any(k < 1 for k in self.k_values):
            raise InvalidInputError("k_values must be positive")
        self.k_values = tuple(sorted(set(self.k_values), reverse=True))
        self.threshold_config()
        if not self.surrogate and self.threshold_override is None:
            raise InvalidInputError("without surrogates a threshold_override is required")

    def threshold_config(self) -> netbuild.ThresholdConfig:
        return netbuild.ThresholdConfig(self.threshold_mode, self.threshold_q, self.threshold_override)


# ---------------------------------------------------------------------------
# helpers


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(outdir: Path, config: dict, seed, command: str, skip=()) -> Path:
    outputs = {
        p.relative_to(outdir).as_posix(): _sha256(p)
        for p in sorted(outdir.rglob("*"))
        if p.is_file() and p.name != "manifest.json"
        and p.relative_to(outdir).parts[0] not in skip
    }
    doc = {
        "tool": "anomnet",
        "version": __version__,
        "command": command,
        "seed": seed,
        "config": config,
        "outputs": outputs,
    }
    path = outdir / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def _resolve_seed(seed):
    if seed is None:
        seed = rng.random_seed()
        print(f"seed: {seed}", file=sys.stderr)
    return int(seed)


def _parse_grid(text: str) -> GridSpec:
    parts = [p for p in text.replace(" ", "").split(",") if p]
    if len(parts) != 6:
        raise InvalidInputError("grid must be n_lat,n_lon,lat_step,lon_step,lat_origin,lon_origin")
    return GridSpec(int(parts[0]), int(parts[1]), *(float(p) for p in parts[2:]))


def _polarities(choice: str) -> tuple[str, ...]:
    return POLARITIES if choice == "both" else (choice,)


def _weight_year(path: Path) -> int:
    return int(path.stem.rsplit("_", 1)[1])


# ---------------------------------------------------------------------------
# commands


def cmd_anomaly(args) -> int:
    field_ = load_field(args.input)
    store_field(compute_anomaly(field_), args.output, args.format)
    return 0


def cmd_synth(args) -> int:
    seed = _resolve_seed(args.seed)
    grid = _parse_grid(args.grid)
    plants = [synth.PlantSpec.parse(p) for p in args.plant]
    f = synth.generate_field(grid, _parse_years(args.years), plants, args.base_sigma, seed,
                             threads=args.threads)
    store_field(f, args.output, args.format)
    if args.events:
        ev = synth.generate_annual_events(_parse_years(args.years), args.events_start,
                                          args.events_trend, args.events_noise, seed)
        store_annual_series(ev, args.events)
    return 0


def cmd_build(args) -> int:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    for key in RunConfig.keys():
        value = getattr(args, f"cfg_{key}", None)
        if value is not None:
            cfg.set(key, value)
    if args.seed is not None:
        cfg.seed = int(args.seed)
    cfg.validate()
    cfg.seed = _resolve_seed(cfg.seed)
    run_build(cfg, threads=args.threads)
    return 0


def run_build(cfg: RunConfig, threads: int | None = None) -> Path:
    """Regular and surrogate weights, thresholds, networks and summaries."""
    out = Path(cfg.output)
    for sub in ("weights", "edges"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    field_ = load_field(cfg.input)
    if cfg.compute_anomaly:
        field_ = compute_anomaly(field_)
    mask = load_mask(cfg.mask, field_.grid) if cfg.mask else None
    first, last = cfg.years if cfg.years else (field_.year_first, field_.year_last)
    years = range(first, last + 1)
    for y in (first, last):
        field_.year_index(y)
    delays = netbuild.DelayRange(cfg.tau_max)
    tcfg = cfg.threshold_config()

    # regular weights go straight to disk; only the values needed for
    # pooled statistics stay in memory
    regular_vals = {p: [] for p in POLARITIES}
    for year in years:
        ws = netbuild.build_link_weights(field_, year, mask, delays, threads=threads).as_stored()
        netbuild.store_weights(ws, out / "weights" / f"regular_{year}.alw")
        for p in POLARITIES:
            regular_vals[p].append(ws.defined_weights(p))

    surrogate_vals = {p: {} for p in POLARITIES}
    if cfg.surrogate:
        for r in range(cfg.surrogates):
            shuffled = netbuild.shuffle_years(field_, cfg.seed, realization=r, threads=threads)
            name = "surrogate" if cfg.surrogates == 1 else f"surrogate-r{r}"
            for year in years:
                ws = netbuild.build_link_weights(shuffled, year, mask, delays, threads=threads).as_stored()
                netbuild.store_weights(ws, out / "weights" / f"{name}_{year}.alw")
                for p in POLARITIES:
                    surrogate_vals[p].setdefault(year, []).append(ws.defined_weights(p))

    thresholds = {}
    with open(out / "thresholds.csv", "w") as fh:
        fh.write("polarity,year,threshold\n")
        for p in POLARITIES:
            if cfg.per_year_threshold:
                per = {}
                for year in years:
                    vals = surrogate_vals[p].get(year, [])
                    per[year] = netbuild.threshold_from_values(
                        np.concatenate(vals) if vals else np.empty(0), tcfg)
                    fh.write(f"{p},{year},{per[year]!r}\n")
                thresholds[p] = per
            else:
                vals = [v for vs in surrogate_vals[p].values() for v in vs]
                t = netbuild.threshold_from_values(np.concatenate(vals) if vals else np.empty(0), tcfg)
                fh.write(f"{p},all,{t!r}\n")
                thresholds[p] = {year: t for year in years}

    for p in POLARITIES:
        nets, candidates = [], []
        for year in years:
            ws = netbuild.load_weights(out / "weights" / f"regular_{year}.alw")
            net = netbuild.apply_threshold(ws, p, thresholds[p][year])
            netbuild.store_edges(net, out / "edges" / f"{p}_{year}.csv")
            nets.append(net)
            candidates.append(netbuild.top_k(ws, p, max(cfg.k_values)))
        store_annual_series(analysis.links_per_year(nets), out / f"links_per_year_{p}.csv")
        analysis.store_delay_histogram(analysis.delay_histogram(nets), out / f"delay_hist_{p}.csv")
        _write_heaviest(candidates, cfg.k_values, p, out)
        analysis.store_weight_histogram(
            analysis.histogram_from_values(np.concatenate(regular_vals[p]), cfg.bin_width, "regular"),
            out / f"hist_{p}_regular.csv")
        if cfg.surrogate:
            vals = [v for vs in surrogate_vals[p].values() for v in vs]
            analysis.store_weight_histogram(
                analysis.histogram_from_values(np.concatenate(vals), cfg.bin_width, "surrogate"),
                out / f"hist_{p}_surrogate.csv")

    (out / "run.cfg").write_text(cfg.to_text())
    # analyze may write into <run>/analysis; that belongs to its own manifest
    _write_manifest(out, cfg.as_dict(), cfg.seed, "build", skip=("analysis",))
    return out


def _write_heaviest(candidates, k_values, polarity, out: Path) -> None:
    for k in k_values:
        top = analysis.pooled_top_k(candidates, k)
        store_annual_series(analysis.links_per_year(top), out / f"heaviest_k{k}_{polarity}.csv")
        analysis.store_delay_histogram(analysis.delay_histogram(top), out / f"delay_hist_top{k}_{polarity}.csv")


def cmd_threshold(args) -> int:
    sets = [netbuild.load_weights(p) for p in args.weights]
    tcfg = netbuild.ThresholdConfig(args.mode, args.q, args.override)
    rows = []
    for p in _polarities(args.polarity):
        if args.per_year:
            for year, t in netbuild.pooled_threshold(sets, tcfg, p, per_year=True).items():
                rows.append(f"{p},{year},{t!r}")
        else:
            rows.append(f"{p},all,{netbuild.estimate_threshold(sets, tcfg, p)!r}")
    text = "polarity,year,threshold\n" + "\n".join(rows) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_topk(args) -> int:
    ws = netbuild.load_weights(args.weights)
    if args.threshold is not None:
        net = netbuild.apply_threshold(ws, args.polarity, args.threshold)
    else:
        net = netbuild.top_k(ws, args.polarity, args.k)
    netbuild.store_edges(net, args.output)
    return 0


def cmd_analyze(args) -> int:
    run = Path(args.run_dir)
    out = Path(args.output) if args.output else run / "analysis"
    out.mkdir(parents=True, exist_ok=True)
    k_values = sorted(set(args.k), reverse=True)
    weight_files = sorted((run / "weights").glob("regular_*.alw"), key=_weight_year)
    if not weight_files:
        raise FileNotFoundError(f"no regular weight files under {run / 'weights'}")
    events = load_annual_series(args.events) if args.events else None

    series: dict[tuple[str, str], AnnualSeries] = {}
    for p in _polarities(args.polarity):
        nets = []
        for wf in weight_files:
            year = _weight_year(wf)
            edge_file = run / "edges" / f"{p}_{year}.csv"
            nets.append(netbuild.load_edges(edge_file, year, p))
        links = analysis.links_per_year(nets)
        store_annual_series(links, out / f"links_per_year_{p}.csv")
        analysis.store_delay_histogram(analysis.delay_histogram(nets), out / f"delay_hist_{p}.csv")
        series[("links", p)] = links
        candidates = [netbuild.top_k(netbuild.load_weights(wf), p, max(k_values)) for wf in weight_files]
        for k in k_values:
            top = analysis.pooled_top_k(candidates, k)
            s = analysis.links_per_year(top)
            store_annual_series(s, out / f"heaviest_k{k}_{p}.csv")
            analysis.store_delay_histogram(analysis.delay_histogram(top), out / f"delay_hist_top{k}_{p}.csv")
            series[(f"heaviest_k{k}", p)] = s

    if events is not None:
        shared = np.intersect1d(events.years, next(iter(series.values())).years)
        if shared.size < 2:
            raise InvalidInputError(
                "event series and link counts share fewer than 2 years; nothing to correlate")
        with open(out / "correlation.csv", "w") as fh:
            fh.write("series,polarity,pearson_r,best_r,best_lag,overlap_years\n")
            for (name, p), s in series.items():
                r = _safe(lambda: analysis.pearson(events, s))
                best = _safe(lambda: analysis.best_lagged_pearson(events, s, args.max_lag))
                br, bl = best if best is not None else (None, None)
                fh.write(f"{name},{p},{_fmt(r)},{_fmt(br)},{'' if bl is None else bl},{shared.size}\n")
    _write_manifest(out, {"run_dir": str(run), "events": args.events, "k_values": k_values,
                          "polarity": args.polarity, "max_lag": args.max_lag}, None, "analyze")
    return 0


def _safe(fn):
    try:
        return fn()
    except InvalidInputError:
        return None


def _fmt(v) -> str:
    return "nan" if v is None else repr(float(v))


def cmd_export(args) -> int:
    if args.grid_field:
        grid = load_field(args.grid_field).grid
    else:
        grid = _parse_grid(args.grid)
    net = netbuild.load_edges(args.edges, args.year, args.polarity)
    if net.m.size and int(max(net.m.max(), net.n.max())) >= grid.node_count:
        raise InvalidInputError("edge list references nodes outside the grid")
    if args.geojson:
        export.export_geojson(export.LinkMap(grid, net, args.metric), args.geojson)
    if args.degrees:
        export.export_node_degree_csv(net, grid, args.degrees)
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _global_options(parser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, default=default, help="master random seed")
    parser.add_argument("--threads", type=int, default=default, help="worker threads (output does not depend on it)")
    parser.add_argument("--config", default=default, help="key = value run configuration file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anomnet", description=__doc__.splitlines()[0])
    _global_options(parser, suppress=False)
    parser.add_argument("--version", action="version", version=f"anomnet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        _global_options(p, suppress=True)
        p.set_defaults(func=func)
        return p

    p = add("anomaly", cmd_anomaly, "subtract the per-day climatology")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--format", choices=("bin", "csv"), default="bin")

    p = add("synth", cmd_synth, "generate a synthetic field with planted couplings")
    p.add_argument("output")
    p.add_argument("--grid", default="6,6,30,60,75,0", help="n_lat,n_lon,lat_step,lon_step,lat_origin,lon_origin")
    p.add_argument("--years", default="2000-2004")
    p.add_argument("--plant", action="append", default=[], help="source:target:delay[:coupling[:noise_sigma]]")
    p.add_argument("--base-sigma", type=float, default=1.0)
    p.add_argument("--format", choices=("bin", "csv"), default="bin")
    p.add_argument("--events", help="also write a synthetic annual event series here")
    p.add_argument("--events-start", type=float, default=5.0)
    p.add_argument("--events-trend", type=float, default=0.0)
    p.add_argument("--events-noise", type=float, default=0.0)

    p = add("build", cmd_build, "weights, surrogates, thresholds, networks and summaries")
    p.add_argument("--input", dest="cfg_input")
    p.add_argument("--output", dest="cfg_output")
    p.add_argument("--metric", dest="cfg_metric")
    p.add_argument("--mask", dest="cfg_mask")
    p.add_argument("--years", dest="cfg_years")
    p.add_argument("--tau-max", dest="cfg_tau_max")
    p.add_argument("--threshold-mode", dest="cfg_threshold_mode", choices=("surrogate_max", "surrogate_quantile"))
    p.add_argument("--threshold-q", dest="cfg_threshold_q")
    p.add_argument("--threshold-override", dest="cfg_threshold_override")
    p.add_argument("--per-year-threshold", dest="cfg_per_year_threshold", action="store_const", const="true")
    p.add_argument("--surrogate", dest="cfg_surrogate", action="store_const", const="true")
    p.add_argument("--no-surrogate", dest="cfg_surrogate", action="store_const", const="false")
    p.add_argument("--surrogates", dest="cfg_surrogates", help="number of shuffled realizations")
    p.add_argument("--anomaly", dest="cfg_compute_anomaly", action="store_const", const="true",
                   help="input is raw data; compute anomalies first")
    p.add_argument("--k", dest="cfg_k_values", help="comma-separated k values for heaviest links")
    p.add_argument("--bin-width", dest="cfg_bin_width")

    p = add("threshold", cmd_threshold, "threshold from surrogate weight files")
    p.add_argument("weights", nargs="+")
    p.add_argument("--polarity", choices=POLARITIES + ("both",), default="both")
    p.add_argument("--mode", choices=("surrogate_max", "surrogate_quantile"), default="surrogate_max")
    p.add_argument("--q", type=float)
    p.add_argument("--override", type=float)
    p.add_argument("--per-year", action="store_true")
    p.add_argument("--output")

    p = add("topk", cmd_topk, "heaviest-k (or thresholded) edge list from one weight file")
    p.add_argument("weights")
    p.add_argument("output")
    p.add_argument("--polarity", choices=POLARITIES, default="positive")
    p.add_argument("--k", type=int, default=200)
    p.add_argument("--threshold", type=float, help="keep weights above this instead of the top k")

    p = add("analyze", cmd_analyze, "link counts, heaviest-link trends and event correlation")
    p.add_argument("run_dir")
    p.add_argument("--events")
    p.add_argument("--k", type=int, nargs="+", default=[200, 100, 50])
    p.add_argument("--polarity", choices=POLARITIES + ("both",), default="both")
    p.add_argument("--max-lag", type=int, default=3)
    p.add_argument("--output")

    p = add("export", cmd_export, "GeoJSON link map and node-degree table")
    p.add_argument("edges")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--grid-field", help="take the grid from this field file")
    g.add_argument("--grid", help="n_lat,n_lon,lat_step,lon_step,lat_origin,lon_origin")
    p.add_argument("--year", type=int, required=True)
    p.add_argument("--polarity", choices=POLARITIES, default="positive")
    p.add_argument("--metric", default="")
    p.add_argument("--geojson")
    p.add_argument("--degrees")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name in ("seed", "threads", "config"):
        if not hasattr(args, name):
            setattr(args, name, None)
    try:
        return args.func(args)
    except (ParseError, OSError) as exc:
        print(f"anomnet {args.command}: {exc}", file=sys.stderr)
        return 2
    except (AnomnetError, ValueError) as exc:
        print(f"anomnet {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

import json

import numpy as np
import pytest

from anomnet.cli import RunConfig, main
from anomnet.errors import ParseError
from anomnet.ingest import AnnualSeries, load_annual_series, load_field, store_annual_series
from anomnet.netbuild import load_weights


@pytest.fixture(scope="module")
def desk_run(tmp_path_factory):
    """12x12 grid, 10 years, one plant, full build with surrogates."""
    d = tmp_path_factory.mktemp("desk")
    assert main(["synth", str(d / "raw.bin"), "--grid", "12,12,15,30,82.5,0", "--years", "1990-1999",
                 "--plant", "5:40:2:0.9:0.1", "--seed", "7", "--events", str(d / "events.csv"),
                 "--events-start", "4", "--events-trend", "0.5", "--events-noise", "1"]) == 0
    assert main(["anomaly", str(d / "raw.bin"), str(d / "anom.bin")]) == 0
    args = ["build", "--input", str(d / "anom.bin"), "--output", str(d / "run"), "--surrogate",
            "--tau-max", "10", "--seed", "11"]
    assert main(args) == 0
    return d, args


def test_build_writes_two_weight_files_per_year(desk_run):
    d, _ = desk_run
    manifest = json.loads((d / "run" / "manifest.json").read_text())
    weights = [k for k in manifest["outputs"] if k.startswith("weights/")]
    assert len(weights) == 20
    for year in range(1990, 2000):
        assert f"weights/regular_{year}.alw" in weights and f"weights/surrogate_{year}.alw" in weights
    ws = load_weights(d / "run" / "weights" / "regular_1995.alw")
    assert len(ws) == 144 * 143 // 2
    assert manifest["seed"] == 11 and manifest["config"]["tau_max"] == 10


def test_build_rerun_is_byte_identical(desk_run):
    d, args = desk_run
    first = (d / "run" / "manifest.json").read_bytes()
    assert main(args + ["--threads", "2"]) == 0
    assert (d / "run" / "manifest.json").read_bytes() == first


def test_build_outputs(desk_run):
    run = desk_run[0] / "run"
    for p in ("positive", "negative"):
        for k in (200, 100, 50):
            assert (run / f"heaviest_k{k}_{p}.csv").exists()
        assert (run / f"links_per_year_{p}.csv").exists()
        assert (run / f"hist_{p}_surrogate.csv").exists()
    text = (run / "thresholds.csv").read_text().splitlines()
    assert text[0] == "polarity,year,threshold" and text[1].startswith("positive,all,")
    # the planted pair is in every year's positive network
    for year in range(1990, 2000):
        assert f"\n5,40," in (run / "edges" / f"positive_{year}.csv").read_text()
    cfg = RunConfig.from_file(run / "run.cfg")
    assert cfg.seed == 11 and cfg.surrogate and cfg.k_values == (200, 100, 50)


def test_analyze_writes_three_heaviest_series(desk_run):
    d, _ = desk_run
    assert main(["analyze", str(d / "run"), "--events", str(d / "events.csv"),
                 "--polarity", "positive"]) == 0
    out = d / "run" / "analysis"
    assert sorted(p.name for p in out.glob("heaviest_k*_positive.csv")) == [
        "heaviest_k100_positive.csv", "heaviest_k200_positive.csv", "heaviest_k50_positive.csv"]
    assert load_annual_series(out / "heaviest_k50_positive.csv").total() == 50
    header = (out / "correlation.csv").read_text().splitlines()[0]
    assert header == "series,polarity,pearson_r,best_r,best_lag,overlap_years"


def test_analyze_self_correlation(desk_run, tmp_path):
    d, _ = desk_run
    heaviest = load_annual_series(d / "run" / "heaviest_k200_positive.csv")
    assert np.ptp(heaviest.values) > 0
    store_annual_series(heaviest, tmp_path / "same.csv")
    assert main(["analyze", str(d / "run"), "--events", str(tmp_path / "same.csv"),
                 "--polarity", "positive", "--output", str(tmp_path / "an")]) == 0
    rows = (tmp_path / "an" / "correlation.csv").read_text().splitlines()
    row = next(r for r in rows if r.startswith("heaviest_k200,positive,"))
    assert float(row.split(",")[2]) == pytest.approx(1.0, abs=1e-12)


def test_analyze_without_overlap_exits_1(desk_run, tmp_path, capsys):
    d, _ = desk_run
    store_annual_series(AnnualSeries([1800, 1801, 1802], [1, 2, 3]), tmp_path / "old.csv")
    code = main(["analyze", str(d / "run"), "--events", str(tmp_path / "old.csv"),
                 "--output", str(tmp_path / "an")])
    assert code == 1
    assert "fewer than 2 years" in capsys.readouterr().err


def test_topk_and_threshold_and_export(desk_run, tmp_path):
    d, _ = desk_run
    w = d / "run" / "weights"
    assert main(["topk", str(w / "regular_1990.alw"), str(tmp_path / "top.csv"), "--k", "5"]) == 0
    assert len((tmp_path / "top.csv").read_text().splitlines()) == 6
    assert main(["threshold", str(w / "surrogate_1990.alw"), str(w / "surrogate_1991.alw"),
                 "--polarity", "positive", "--output", str(tmp_path / "t.csv")]) == 0
    assert (tmp_path / "t.csv").read_text().startswith("polarity,year,threshold\npositive,all,")
    assert main(["export", str(tmp_path / "top.csv"), "--grid-field", str(d / "anom.bin"),
                 "--year", "1990", "--geojson", str(tmp_path / "m.geojson"),
                 "--degrees", str(tmp_path / "deg.csv")]) == 0
    doc = json.loads((tmp_path / "m.geojson").read_text())
    assert len(doc["features"]) >= 5
    assert (tmp_path / "deg.csv").read_text().startswith("node_id,lat,lon,degree\n")


def test_anomaly_exit_codes(tmp_path, capsys):
    assert main(["anomaly", str(tmp_path / "missing.bin"), str(tmp_path / "o.bin")]) == 2
    assert capsys.readouterr().err
    assert main(["synth", str(tmp_path / "one.bin"), "--grid", "2,2,30,90,90,0", "--years", "2000",
                 "--seed", "1"]) == 0
    assert main(["anomaly", str(tmp_path / "one.bin"), str(tmp_path / "o.bin")]) == 1
    assert "anomaly requires ≥ 2 years" in capsys.readouterr().err


def test_anomaly_csv_output(tmp_path):
    assert main(["synth", str(tmp_path / "f.csv"), "--format", "csv", "--grid", "2,2,30,90,90,0",
                 "--years", "2000-2002", "--seed", "1"]) == 0
    assert main(["anomaly", str(tmp_path / "f.csv"), str(tmp_path / "a.csv"), "--format", "csv"]) == 0
    a = load_field(tmp_path / "a.csv")
    assert np.abs(a.values.astype(np.float64).mean(axis=0)).max() < 1e-4


def test_build_tau_max_zero_exits_1(tmp_path, capsys):
    main(["synth", str(tmp_path / "f.bin"), "--grid", "2,2,30,90,90,0", "--years", "2000-2001", "--seed", "1"])
    code = main(["build", "--input", str(tmp_path / "f.bin"), "--output", str(tmp_path / "r"),
                 "--tau-max", "0", "--surrogate", "--seed", "1"])
    assert code == 1
    assert "tau_max" in capsys.readouterr().err


def test_build_config_file_and_override(tmp_path):
    main(["synth", str(tmp_path / "f.bin"), "--grid", "3,3,30,90,90,0", "--years", "2000-2001", "--seed", "2"])
    (tmp_path / "run.cfg").write_text(
        f"input = {tmp_path / 'f.bin'}\noutput = {tmp_path / 'r'}\nthreshold_override = 0.5\n"
        "tau_max = 3  # short\nk_values = 5,20\n")
    assert main(["--config", str(tmp_path / "run.cfg"), "build", "--seed", "3"]) == 0
    assert not list((tmp_path / "r" / "weights").glob("surrogate_*"))
    assert (tmp_path / "r" / "thresholds.csv").read_text().splitlines()[1] == "positive,all,0.5"
    cfg = RunConfig.from_file(tmp_path / "r" / "run.cfg")
    assert cfg.k_values == (20, 5) and cfg.tau_max == 3


def test_build_requires_override_without_surrogates(tmp_path):
    main(["synth", str(tmp_path / "f.bin"), "--grid", "2,2,30,90,90,0", "--years", "2000-2001", "--seed", "1"])
    assert main(["build", "--input", str(tmp_path / "f.bin"), "--output", str(tmp_path / "r")]) == 1


def test_build_missing_input_exits_2(tmp_path):
    assert main(["build", "--input", str(tmp_path / "nope.bin"), "--surrogate"]) == 2


def test_random_seed_is_recorded(tmp_path, capsys):
    main(["synth", str(tmp_path / "f.bin"), "--grid", "2,2,30,90,90,0", "--years", "2000-2001", "--seed", "1"])
    assert main(["build", "--input", str(tmp_path / "f.bin"), "--output", str(tmp_path / "r"),
                 "--surrogate", "--tau-max", "2"]) == 0
    printed = int(capsys.readouterr().err.split("seed:")[1].split()[0])
    assert json.loads((tmp_path / "r" / "manifest.json").read_text())["seed"] == printed


def test_config_parse_errors(tmp_path):
    (tmp_path / "bad.cfg").write_text("tau_max = 3\nbogus\n")
    with pytest.raises(ParseError, match="line 2"):
        RunConfig.from_file(tmp_path / "bad.cfg")
    (tmp_path / "bad2.cfg").write_text("colour = red\n")
    with pytest.raises(ParseError, match="unknown config key"):
        RunConfig.from_file(tmp_path / "bad2.cfg")


def test_config_text_round_trip(tmp_path):
    cfg = RunConfig(input="x.bin", years=(1951, 2010), threshold_override=4.0, k_values=(200, 100, 50))
    (tmp_path / "c.cfg").write_text(cfg.to_text())
    assert RunConfig.from_file(tmp_path / "c.cfg") == cfg


def test_build_rerun_after_analyze_is_identical(desk_run):
    d, args = desk_run
    assert main(["analyze", str(d / "run"), "--polarity", "negative"]) == 0
    first = (d / "run" / "manifest.json").read_bytes()
    assert main(args) == 0
    assert (d / "run" / "manifest.json").read_bytes() == first
    assert b"analysis/" not in first

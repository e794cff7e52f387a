import csv
import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

from oracles import greedy_match
from roadnet import graphio, synthetic
from roadnet.cli import main
from roadnet.evaluate import sample_points
from roadnet.graph import from_coords, haversine_km
from roadnet.raster import GeoPoint, TileCoord, TileImage, bits_to_png, tile_path, write_tile_image

X0, Y0, Z = 107000, 52000, 17


def workspace(tmp_path, tiles_by_year, **cfg):
    """tiles_by_year: {year: {(dx, dy): HxWx3 array}} for a 2x2 county."""
    for year, tiles in tiles_by_year.items():
        for (dx, dy), px in tiles.items():
            c = TileCoord(X0 + dx, Y0 + dy, Z)
            write_tile_image(tile_path(tmp_path / "tiles" / str(year), c), TileImage(c, px))
    (tmp_path / "counties.csv").write_text(
        f"county_id,area_km2,x_min,y_min,x_max,y_max\nc1,0.25,{X0},{Y0},{X0 + 1},{Y0 + 1}\n")
    conf = {"tile_root": "tiles", "counties_file": "counties.csv", "output_dir": "out", "years": [2017, 2021]}
    conf.update(cfg)
    p = tmp_path / "config.yaml"
    p.write_text(yaml.safe_dump(conf))
    return p


def dark(rng=None):
    return np.full((256, 256, 3), 20, np.uint8)


def cloudy():
    return np.full((256, 256, 3), 200, np.uint8)


def noisy(rng):
    return rng.choice(np.array([0, 255], np.uint8), size=(256, 256, 1)).repeat(3, axis=2)


def line_tiles():
    """A 3-px gray road across the two top tiles of the county."""
    mask = np.zeros((512, 512), np.uint8)
    mask[99:102, 20:492] = 1
    out = {}
    for dy in (0, 1):
        for dx in (0, 1):
            sub = mask[dy * 256:(dy + 1) * 256, dx * 256:(dx + 1) * 256]
            out[dx, dy] = np.repeat(np.where(sub == 1, 150, 20).astype(np.uint8)[..., None], 3, axis=2)
    return out


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_qa_four_valid(tmp_path, capsys):
    cfg = workspace(tmp_path, {2017: {(dx, dy): dark() for dx in (0, 1) for dy in (0, 1)}})
    code, out, _ = run(capsys, "qa", "c1", 2017, "--config", cfg)
    assert code == 0
    assert json.loads(out)["tally"] == {"valid": 4, "noisy": 0, "cloudy": 0}
    rows = list(csv.DictReader(open(tmp_path / "out" / "qa_c1_2017.csv")))
    assert len(rows) == 4 and {r["verdict"] for r in rows} == {"valid"}


def test_qa_mixed_tally(tmp_path, capsys, rng):
    tiles = {(0, 0): dark(), (1, 0): cloudy(), (0, 1): noisy(rng), (1, 1): cloudy()}
    cfg = workspace(tmp_path, {2017: tiles})
    code, out, _ = run(capsys, "qa", "c1", 2017, "--config", cfg)
    assert code == 0
    assert json.loads(out)["tally"] == {"valid": 1, "noisy": 1, "cloudy": 2}


def test_qa_empty_and_missing_root(tmp_path, capsys):
    cfg = workspace(tmp_path, {})
    (tmp_path / "tiles" / "2017").mkdir(parents=True)
    code, _, err = run(capsys, "qa", "c1", 2017, "--config", cfg)
    assert code == 2 and "no tiles" in err
    code, _, err = run(capsys, "qa", "c1", 2017, "--config", cfg, "--set", "tile_root=elsewhere")
    assert code == 2 and "does not exist" in err


def test_extract_single_line(tmp_path, capsys):
    cfg = workspace(tmp_path, {2017: line_tiles()})
    args = ("extract", "c1", 2017, "--config", cfg, "--set", "morph.refine_min_len=100")
    code, out, _ = run(capsys, *args)
    assert code == 0
    seg = graphio.read_geojson(tmp_path / "out" / "segments_c1_2017.geojson")
    assert (len(seg.nodes), len(seg.edges)) == (2, 1)
    assert set(json.loads(out)["mask_sources"].values()) == {"baseline"}
    first = (tmp_path / "out" / "graph_c1_2017.geojson").read_bytes()
    assert run(capsys, *args)[0] == 0
    assert (tmp_path / "out" / "graph_c1_2017.geojson").read_bytes() == first


def test_extract_interpolates_and_prefers_external_masks(tmp_path, capsys):
    t17 = line_tiles()
    t21 = dict(t17)
    t21[1, 0] = cloudy()
    cfg = workspace(tmp_path, {2017: t17, 2021: t21}, mask_root="masks")
    ext = TileCoord(X0, Y0 + 1, Z)
    bits_to_png(tile_path(tmp_path / "masks" / "2021", ext), np.zeros((256, 256), np.uint8))
    code, out, _ = run(capsys, "extract", "c1", 2021, "--config", cfg, "--set", "morph.refine_min_len=100")
    assert code == 0
    src = json.loads(out)["mask_sources"]
    assert src[f"{Z}/{X0 + 1}/{Y0}"] == "interpolated"
    assert src[f"{Z}/{X0}/{Y0 + 1}"] == "external"
    assert src[f"{Z}/{X0}/{Y0}"] == "baseline"
    seg = graphio.read_geojson(tmp_path / "out" / "segments_c1_2021.geojson")
    assert len(seg.edges) == 1


def test_extract_all_cloudy_fails(tmp_path, capsys):
    cfg = workspace(tmp_path, {2017: {(dx, dy): cloudy() for dx in (0, 1) for dy in (0, 1)}})
    code, _, err = run(capsys, "extract", "c1", 2017, "--config", cfg)
    assert code == 2 and "no usable masks" in err


def test_unknown_county(tmp_path, capsys):
    cfg = workspace(tmp_path, {2017: line_tiles()})
    assert run(capsys, "extract", "zz", 2017, "--config", cfg)[0] == 2


def write_graph(path, g):
    graphio.write_geojson(path, g)
    return path


def report_rows(path):
    return list(csv.DictReader(open(path)))


def two_roads():
    return from_coords([(0, 0), (0.1, 0), (0, 1), (0.1, 1)], [(0, 1), (2, 3)])


def test_eval_identity_and_empty(tmp_path, capsys):
    t = write_graph(tmp_path / "t.geojson", two_roads())
    e = tmp_path / "e.geojson"
    e.write_text('{"type": "FeatureCollection", "features": []}')
    code, _, _ = run(capsys, "eval", t, t, "--output", tmp_path / "r1.csv")
    assert code == 0
    row = report_rows(tmp_path / "r1.csv")[0]
    assert (row["precision"], row["recall"], row["f1"], row["mrl"]) == ("1.000000", "1.000000", "1.000000", "0.000000")
    code, _, _ = run(capsys, "eval", e, t, "--output", tmp_path / "r2.csv")
    row = report_rows(tmp_path / "r2.csv")[0]
    assert (row["precision"], row["recall"]) == ("0.000000", "0.000000")


def test_eval_half_overlap(tmp_path, capsys):
    g = two_roads()
    h = from_coords([(0, 0), (0.1, 0)], [(0, 1)])
    t = write_graph(tmp_path / "t.geojson", g)
    x = write_graph(tmp_path / "x.geojson", h)
    run(capsys, "eval", x, t, "--output", tmp_path / "r.csv")
    row = report_rows(tmp_path / "r.csv")[0]
    gs, hs = sample_points(g, 0.01), sample_points(h, 0.01)
    m = len(greedy_match(gs, hs, 0.1))
    assert (len(gs), len(hs), m) == (22, 11, 11)
    assert float(row["precision"]) == pytest.approx(m / len(hs), abs=1e-6)
    assert float(row["recall"]) == pytest.approx(m / len(gs), abs=1e-6)
    assert float(row["f1"]) == pytest.approx(2 / 3, abs=1e-6)
    # lengths are great-circle, so the road at lat 1 is slightly shorter
    lg = haversine_km(GeoPoint(0, 0), GeoPoint(0.1, 0)) + haversine_km(GeoPoint(0, 1), GeoPoint(0.1, 1))
    lh = haversine_km(GeoPoint(0, 0), GeoPoint(0.1, 0))
    assert float(row["mrl"]) == pytest.approx((lg - lh) / lg, abs=1e-6)


def test_eval_malformed_names_feature(tmp_path, capsys):
    bad = tmp_path / "bad.geojson"
    bad.write_text(json.dumps({"type": "FeatureCollection", "features": [
        {"type": "Feature", "geometry": {"type": "LineString", "coordinates": [[0, 0], [0, 1]]}},
        {"type": "Feature", "geometry": {"type": "Polygon", "coordinates": []}},
    ]}))
    code, _, err = run(capsys, "eval", bad, bad)
    assert code == 2 and "feature 1" in err


def test_eval_help_lists_columns(capsys):
    with pytest.raises(SystemExit) as ei:
        main(["eval", "--help"])
    assert ei.value.code == 0
    assert "county_id, precision, recall, f1, ri_at_k, mrl, mrd" in capsys.readouterr().out


def panel_rows(n=40, seed=5):
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n):
        pop = float(np.exp(rng.uniform(2, 8)))
        treat = i >= n // 2
        for year in (2017, 2021):
            rl = 3.0 * pop ** 0.7 * ((1.5 + 0.01 * i) if (treat and year == 2021) else 1.0)
            gdp = 10 + i + (2 if year == 2021 else 0) + (2 if treat and year == 2021 else 0)
            rows.append([f"c{i:03d}", "eastern", year, pop, gdp, 1, 1, rl, 100])
    return rows


def test_stats_scaling_and_did(tmp_path, capsys):
    p = tmp_path / "panel.csv"
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["county_id", "region", "year", "population", "gdp", "sse", "balance", "road_length_km", "area_km2"])
        w.writerows(panel_rows())
    code, _, _ = run(capsys, "stats", p, "--analysis", "scaling", "--analysis", "did",
                     "--set", f"output_dir={tmp_path / 'o'}", "--set", "stats.did_metrics=[ARL]",
                     "--set", "stats.did_outcomes=[gdp]")
    assert code == 0
    scal = [r for r in report_rows(tmp_path / "o" / "stats_scaling.csv") if r["year"] == "2017" and r["group"] == "all"]
    assert float(scal[0]["z"]) == pytest.approx(0.7, abs=1e-8)
    did = report_rows(tmp_path / "o" / "stats_did.csv")[0]
    assert float(did["beta"]) == pytest.approx(2.0, abs=1e-8)
    summary = json.loads((tmp_path / "o" / "stats_summary.json").read_text())
    assert summary["did"]["ARL"]["gdp"]["beta"] == pytest.approx(2.0, abs=1e-9)


def test_stats_errors(tmp_path, capsys):
    p = tmp_path / "panel.csv"
    p.write_text("county_id,region,year\nc1,eastern,2017\n")
    code, _, err = run(capsys, "stats", p, "--analysis", "bogus")
    assert code == 1 and "bogus" in err
    code, _, err = run(capsys, "stats", p, "--set", f"output_dir={tmp_path / 'o'}")
    assert code == 2 and "population" in err


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as ei:
        main(["frobnicate"])
    assert ei.value.code == 1
    with pytest.raises(SystemExit) as ei:
        main(["qa", "c1"])
    assert ei.value.code == 1
    assert run(capsys, "qa", "c1", 2017, "--set", "morph.kernel_size=4")[0] == 1


def test_env_config(tmp_path, capsys, monkeypatch):
    cfg = workspace(tmp_path, {2017: {(0, 0): dark()}})
    monkeypatch.setenv("ROADNET_CONFIG", str(cfg))
    code, out, _ = run(capsys, "qa", "c1", 2017)
    assert code == 0 and json.loads(out)["tally"]["valid"] == 1


def test_run_all_manifest(tmp_path):
    cfg = synthetic.build(tmp_path / "syn")
    res = subprocess.run([sys.executable, "-m", "roadnet.cli", "run-all", "--config", str(cfg)],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    out = tmp_path / "syn" / "out"
    man = json.loads((out / "manifest.json").read_text())
    assert man["qa_tally"] == {"valid": 7, "noisy": 0, "cloudy": 1}
    assert man["config"]["morph"]["kernel_size"] == 11
    listed = {}
    for st in man["stages"]:
        listed.update(st["outputs"])
    listed.update(man["outputs"])
    on_disk = {p.name for p in out.iterdir() if p.name != "manifest.json"}
    assert {k.split("/")[-1] for k in listed} == on_disk
    for rel, digest in listed.items():
        assert hashlib.sha256((tmp_path / "syn" / rel).read_bytes()).hexdigest() == digest
    ext = [s for s in man["stages"] if s["stage"] == "extract" and s["year"] == 2021][0]
    assert sorted(ext["mask_sources"].values()).count("interpolated") == 1
    ev = report_rows(out / "eval_report_2021.csv")[0]
    assert float(ev["f1"]) >= 0.95

import numpy as np
import pytest

from roadnet.raster import TileCoord, TileImage
from roadnet.tile_qa import (
    QaThresholds, TileStatus, Verdict, classify_tile, interpolate_missing, laplacian_variance,
    mean_channel_intensity, read_qa_csv, verdict_for, write_qa_csv,
)

C = TileCoord(0, 0, 0)


def img(gray):
    g = np.asarray(gray, dtype=np.uint8)
    return TileImage(C, np.repeat(g[..., None], 3, axis=2))


def manual_laplacian_variance(gray):
    """Loop-by-loop 4-neighbour Laplacian with mirror (edge pixel not repeated)
    borders, then the population variance."""
    g = np.asarray(gray, dtype=float)
    h, w = g.shape

    def at(r, c):
        if r < 0:
            r = -r
        if r >= h:
            r = 2 * (h - 1) - r
        if c < 0:
            c = -c
        if c >= w:
            c = 2 * (w - 1) - c
        return g[r, c]

    vals = []
    for r in range(h):
        for c in range(w):
            vals.append(at(r - 1, c) + at(r + 1, c) + at(r, c - 1) + at(r, c + 1) - 4 * at(r, c))
    m = sum(vals) / len(vals)
    return sum((v - m) ** 2 for v in vals) / len(vals)


def test_constant_image_zero():
    assert laplacian_variance(img(np.full((8, 8), 77))) == 0.0


def test_single_bright_center_hand_value():
    g = np.zeros((3, 3))
    g[1, 1] = 255
    # centre -1020, four edge midpoints +510, corners 0 under mirror borders
    assert laplacian_variance(img(g)) == pytest.approx(17686800 / 81, rel=1e-12)
    assert manual_laplacian_variance(g) == pytest.approx(17686800 / 81, rel=1e-12)


def test_matches_manual_oracle_on_random(rng):
    for _ in range(5):
        h, w = rng.integers(2, 12, 2)
        px = rng.integers(0, 256, (h, w, 3), dtype=np.uint8)
        want = np.mean([manual_laplacian_variance(px[:, :, z]) for z in range(3)])
        assert laplacian_variance(TileImage(C, px)) == pytest.approx(want, rel=1e-10)


def test_shift_invariance(rng):
    px = rng.integers(0, 200, (16, 16, 3), dtype=np.uint8)
    a = laplacian_variance(TileImage(C, px))
    b = laplacian_variance(TileImage(C, px + 50))
    assert a == pytest.approx(b, rel=1e-12)


def test_mean_intensity():
    assert mean_channel_intensity(img(np.zeros((4, 4)))) == (0.0, 0.0, 0.0)
    assert mean_channel_intensity(img(np.full((4, 4), 255))) == (1.0, 1.0, 1.0)
    half = np.zeros((4, 4))
    half[:, 2:] = 255
    assert mean_channel_intensity(img(half)) == pytest.approx((0.5, 0.5, 0.5))


def test_mean_intensity_linear(rng):
    px = rng.integers(0, 128, (8, 8, 3), dtype=np.uint8)
    a = np.array(mean_channel_intensity(TileImage(C, px)))
    b = np.array(mean_channel_intensity(TileImage(C, px * 2)))
    assert np.allclose(b, 2 * a)


def salt_and_pepper(rng, n=64):
    return rng.choice(np.array([0, 255], np.uint8), size=(n, n))


def test_truth_table(rng):
    t = QaThresholds()
    assert classify_tile(img(np.full((16, 16), 128)), t).verdict == Verdict.CLOUDY
    assert classify_tile(img(np.zeros((16, 16))), t).verdict == Verdict.VALID
    sp = salt_and_pepper(rng)
    assert manual_laplacian_variance(sp) > 10000
    assert classify_tile(img(sp), t).verdict == Verdict.NOISY


def test_one_dark_channel_is_enough():
    px = np.zeros((4, 4, 3), np.uint8)
    px[..., 0] = 250
    px[..., 1] = 250
    px[..., 2] = 10
    assert classify_tile(TileImage(C, px)).verdict == Verdict.VALID


def test_verdict_recomputable(rng):
    t = QaThresholds()
    for _ in range(20):
        px = rng.integers(0, 256, (8, 8, 3), dtype=np.uint8) // rng.integers(1, 40)
        s = classify_tile(TileImage(C, px), t)
        assert verdict_for(s.var_lap, s.mean_int, t) == s.verdict


def test_threshold_validation():
    with pytest.raises(ValueError):
        QaThresholds(0, 0.45)
    with pytest.raises(ValueError):
        QaThresholds(10000, 1.0)


def test_interpolation_cases():
    p = interpolate_missing({2017: Verdict.VALID, 2021: Verdict.CLOUDY})
    assert p.sources == {2017: 2017, 2021: 2017} and p.is_interpolated(2021)
    p = interpolate_missing({2017: "noisy", 2021: "valid"})
    assert p.sources[2017] == 2021
    p = interpolate_missing({2017: "cloudy", 2021: "cloudy"})
    assert p.missing and p.sources == {}


def test_interpolation_tie_goes_earlier():
    p = interpolate_missing({2015: True, 2017: False, 2019: True, 2020: False})
    assert p.sources[2017] == 2015
    assert p.sources[2020] == 2019


def test_qa_csv_round_trip(tmp_path):
    rows = [(TileCoord(3, 4, 5), 2017, TileStatus(Verdict.NOISY, 12345.5, (0.1, 0.2, 0.3)))]
    write_qa_csv(tmp_path / "q.csv", rows)
    header = (tmp_path / "q.csv").read_text().splitlines()[0]
    assert header == "tile_z,tile_x,tile_y,year,var_lap,mean_r,mean_g,mean_b,verdict"
    assert read_qa_csv(tmp_path / "q.csv") == rows

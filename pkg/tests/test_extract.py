import numpy as np
import pytest

from oracles import grid_skeleton, h_skeleton, line_skeleton, plus_skeleton, walk_prediction
from roadnet.extract import ExtractParams, detect_crossings, extract_graph, fringe_count, graph_stats
from roadnet.graph import haversine_km, simplify_to_segments, total_length_km
from roadnet.raster import BitCanvas, PixelBoundsError, TileCoord, pixel_center_to_geo

O = TileCoord(109776, 52800, 17)


def cv(bits):
    return BitCanvas(np.asarray(bits, np.uint8), O)


def ring_runs(bits, x, y):
    """Hand enumeration: walk the 8 ring cells in order and count 0->1 steps."""
    ring = [(-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1)]
    vals = [int(bits[y + dy, x + dx]) for dy, dx in ring]
    if all(vals):
        return 1
    return sum(1 for i in range(8) if vals[i - 1] == 0 and vals[i] == 1)


def test_fringe_plus_center_and_tips():
    b, _, _ = plus_skeleton(5)
    c = 3 + 5
    assert fringe_count(cv(b), (c, c)) == 4
    assert fringe_count(cv(b), (3, c)) == 1
    assert fringe_count(cv(b), (c + 2, c)) == 2
    for y, x in np.argwhere(b):
        assert fringe_count(cv(b), (x, y)) == ring_runs(b, x, y)


def test_fringe_errors():
    b, _, _ = line_skeleton(5)
    with pytest.raises(PixelBoundsError):
        fringe_count(cv(b), (100, 0))
    with pytest.raises(ValueError):
        fringe_count(cv(b), (0, 0))


def test_fringe_isolated_pixel_zero():
    b = np.zeros((5, 5), np.uint8)
    b[2, 2] = 1
    assert fringe_count(cv(b), (2, 2)) == 0
    assert detect_crossings(cv(b)) == set()


def test_fringe_larger_radius():
    b, _, _ = plus_skeleton(6)
    c = 3 + 6
    assert fringe_count(cv(b), (c, c), radius=2) == 4
    assert fringe_count(cv(b), (c + 1, c), radius=2) == 4  # junction still inside the window


def test_plus_crossings():
    b, _, _ = plus_skeleton(5)
    c = 8
    assert detect_crossings(cv(b)) == {(c, c), (3, c), (13, c), (c, 3), (c, 13)}


def test_line_interval_25():
    b, branches, anchors = line_skeleton(100)
    g = extract_graph(cv(b), ExtractParams(node_interval=25))
    assert (len(g.nodes), len(g.edges)) == (5, 4) == walk_prediction(branches, anchors, 25)
    lons = sorted(p.lon for p in g.nodes.values())
    want = [pixel_center_to_geo(cv(b), 3 + k, 3).lon for k in (0, 25, 50, 75, 100)]
    assert lons == pytest.approx(want, abs=1e-12)
    assert set(g.degree().values()) == {1, 2}


def test_plus_interval_50():
    b, branches, anchors = plus_skeleton(30)
    g = extract_graph(cv(b), ExtractParams(node_interval=50))
    assert (len(g.nodes), len(g.edges)) == (5, 4) == walk_prediction(branches, anchors, 50)
    assert sorted(g.degree().values()) == [1, 1, 1, 1, 4]


@pytest.mark.parametrize("interval", [7, 10, 50])
def test_h_and_grid_counts(interval):
    for b, branches, anchors in (h_skeleton(40, 30, 17), grid_skeleton(3, 4, 20, 9)):
        g = extract_graph(cv(b), ExtractParams(node_interval=interval))
        assert (len(g.nodes), len(g.edges)) == walk_prediction(branches, anchors, interval)


def test_interval_boundary_exact_multiple():
    # a node lands exactly on the endpoint offset only when k*interval < L
    b, branches, anchors = line_skeleton(60)
    g = extract_graph(cv(b), ExtractParams(node_interval=20))
    assert (len(g.nodes), len(g.edges)) == (4, 3) == walk_prediction(branches, anchors, 20)


def test_empty_and_isolated():
    assert len(extract_graph(cv(np.zeros((8, 8)))).nodes) == 0
    b = np.zeros((8, 8), np.uint8)
    b[3, 3] = 1
    assert len(extract_graph(cv(b)).nodes) == 0


def test_diagonal_line():
    b = np.zeros((40, 40), np.uint8)
    for i in range(3, 37):
        b[i, i] = 1
    g = extract_graph(cv(b), ExtractParams(node_interval=50))
    assert (len(g.nodes), len(g.edges)) == (2, 1)


def test_staircase_is_a_single_path():
    b = np.zeros((12, 20), np.uint8)
    r, c = 2, 2
    for _ in range(6):
        b[r, c] = b[r, c + 1] = 1
        b[r + 1, c + 1] = 1
        r, c = r + 1, c + 1
    g = extract_graph(cv(b), ExtractParams(node_interval=100))
    assert sorted(g.degree().values()) == [1, 1]


def test_square_cycle():
    b = np.zeros((20, 20), np.uint8)
    b[3, 3:15] = b[14, 3:15] = 1
    b[3:15, 3] = b[3:15, 14] = 1
    g = extract_graph(cv(b), ExtractParams(node_interval=10))
    assert all(d == 2 for d in g.degree().values())
    assert len(g.connected_components()) == 1
    s = simplify_to_segments(g)
    assert (len(s.nodes), len(s.edges)) == (3, 3)


def test_two_branches_between_same_nodes_stay_distinct():
    # a rectangle hanging between two junctions: two parallel branches
    b = np.zeros((30, 40), np.uint8)
    b[10, 2:38] = 1
    b[10:20, 12] = b[10:20, 28] = 1
    b[19, 12:29] = 1
    g = extract_graph(cv(b), ExtractParams(node_interval=100))
    s = simplify_to_segments(g)
    assert len(s.connected_components()) == 1
    assert sorted(d for d in s.degree().values()) == [1, 1, 2, 3, 3]


def test_georeferenced_length():
    b, _, _ = line_skeleton(100)
    g = extract_graph(cv(b))
    a = pixel_center_to_geo(cv(b), 3, 3)
    z = pixel_center_to_geo(cv(b), 103, 3)
    assert total_length_km(g) == pytest.approx(haversine_km(a, z), rel=1e-9)
    st = graph_stats(g, 2.0)
    assert st["density_km_per_km2"] == pytest.approx(st["total_length_km"] / 2.0)

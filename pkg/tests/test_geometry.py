import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ml2.errors import LengthMismatch, NonIncreasingKnots
from ml2.geometry import (LipschitzGraph, Polygon, Polyline, arc_length,
                          comb_abscissas, counterexample_arc, curve_from_csv,
                          curve_to_csv, flat_graph, graph_from_knots)
from oracles import comb_b1_series, comb_length_series


class TestGraphFromKnots:
    def test_flat_segment(self):
        g = graph_from_knots([0, 1], [0, 0])
        assert g.lipschitz == 0.0

    def test_sawtooth_slope(self):
        g = graph_from_knots([0, 0.5, 1], [0, 1, 0])
        assert g.lipschitz == 2.0

    def test_degenerate_knots_rejected(self):
        with pytest.raises(NonIncreasingKnots):
            graph_from_knots([0, 0], [0, 1])

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            graph_from_knots([0, 1, 2], [0, 1])

    def test_single_knot_rejected(self):
        with pytest.raises(LengthMismatch):
            graph_from_knots([0], [0])

    def test_speed_bounds(self):
        g = graph_from_knots([0, 0.3, 0.7, 1], [0, 1, -0.5, 0.2])
        sp = g.speeds()
        assert np.all(sp >= 1.0)
        assert np.all(sp <= np.sqrt(1 + g.lipschitz**2) + 1e-15)


class TestArcLength:
    def test_flat_unit(self):
        assert arc_length(flat_graph(0, 1)) == pytest.approx(1.0, abs=1e-15)

    def test_sawtooth(self):
        g = graph_from_knots([0, 0.5, 1], [0, 1, 0])
        assert arc_length(g) == pytest.approx(2 * np.sqrt(1.25), rel=1e-15)

    def test_polyline(self):
        p = Polyline(np.array([0j, 3 + 4j, 3 + 5j]))
        assert arc_length(p) == pytest.approx(6.0, rel=1e-15)

    def test_additive_under_split(self):
        g = graph_from_knots([0, 0.25, 0.6, 1], [0, 0.5, -0.3, 0.1])
        left = g.restrict(0, 0.6)
        right = g.restrict(0.6, 1)
        assert arc_length(left) + arc_length(right) == pytest.approx(arc_length(g), rel=1e-14)

    def test_counterexample_matches_series_oracle(self):
        # per-segment length series summed in extended precision
        arc = counterexample_arc(3, 200)
        assert arc_length(arc.polyline) == pytest.approx(comb_length_series(3, 200), rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(
    knots=st.lists(st.floats(-3, 3), min_size=3, max_size=7, unique=True),
    ys=st.lists(st.floats(-2, 2), min_size=7, max_size=7),
    t0=st.floats(-3, 3),
    y0=st.floats(-5, 5),
    tq=st.floats(0, 1),
)
def test_distance_dominates_parameter_gap(knots, ys, t0, y0, tq):
    # |gamma(t) - z0| >= |t - t0| for graphs over the abscissa
    knots = sorted(knots)
    g = graph_from_knots(knots, ys[: len(knots)])
    t = knots[0] + tq * (knots[-1] - knots[0])
    z = g.point(t)
    assert abs(z - complex(t0, y0)) >= abs(t - t0) - 1e-12


class TestCounterexampleArc:
    def test_block1_geometry(self):
        arc = counterexample_arc(1, 1)
        blk = arc.blocks[0]
        assert blk.b_hi - blk.b_lo == pytest.approx(1.0 / 7.0, rel=1e-15)
        assert blk.teeth_x[0] == pytest.approx(blk.b_hi, rel=1e-15)
        assert blk.heights()[0] == pytest.approx(1.0 / 7.0, rel=1e-12)

    def test_b1_value_against_series_oracle(self):
        arc = counterexample_arc(1, 1)
        assert arc.atoms[0][0] == pytest.approx(comb_b1_series(), rel=1e-10)
        # truncated 5-digit reference value
        assert arc.atoms[0][0] == pytest.approx(0.15510, abs=1e-5)

    def test_atom_masses(self):
        arc = counterexample_arc(4, 3)
        for n, (b, alpha) in enumerate(arc.atoms, start=1):
            assert alpha == pytest.approx(1.0 / n**3, rel=0, abs=0)

    def test_teeth_strictly_decreasing_toward_b_lo(self):
        arc = counterexample_arc(3, 50)
        for blk in arc.blocks:
            x = blk.teeth_x
            assert np.all(np.diff(x) < 0)
            assert np.all(x > blk.b_lo)

    def test_path_connected(self):
        arc = counterexample_arc(2, 7)
        v = arc.polyline.vertices
        assert np.all(np.abs(np.diff(v)) > 0)
        # terminates at (b_{N+1}, 0)
        assert v[-1] == pytest.approx(complex(arc.atoms[-1][0], 0.0), rel=1e-14)
        # starts at (b_1, 0)
        assert v[0] == pytest.approx(complex(arc.atoms[0][0], 0.0), rel=1e-14)

    def test_tooth_tops_on_diagonal(self):
        arc = counterexample_arc(2, 9)
        for blk in arc.blocks:
            tops = blk.teeth_x + 1j * blk.heights()
            assert np.allclose(tops.imag, tops.real - blk.b_lo, atol=1e-15)

    def test_length_monotone_in_N_and_K(self):
        base = arc_length(counterexample_arc(2, 20).polyline)
        assert arc_length(counterexample_arc(2, 40).polyline) >= base
        assert arc_length(counterexample_arc(3, 20).polyline) >= base

    def test_length_finite_and_bounded(self):
        arc = counterexample_arc(5, 300)
        L = arc_length(arc.polyline)
        assert np.isfinite(L)
        # generous analytic ceiling: teeth sums are (b_n - b_{n+1}) zeta-like
        assert L < 10.0

    def test_monotone_abscissas_formula(self):
        x = comb_abscissas(1, 5, 0.0)
        assert x[0] == pytest.approx(1.0 / 7.0, rel=1e-15)
        assert np.all(np.diff(x) < 0)


class TestDomains:
    def test_polygon_area(self):
        p = Polygon(np.array([0j, 1 + 0j, 1 + 1j, 0 + 1j]))
        assert p.area() == pytest.approx(1.0)

    def test_polygon_self_intersection_rejected(self):
        with pytest.raises(ValueError):
            Polygon(np.array([0j, 1 + 1j, 1 + 0j, 0 + 1j]))

    def test_polygon_contains(self):
        p = Polygon(np.array([0j, 2 + 0j, 2 + 2j, 0 + 2j]))
        assert p.contains(1 + 1j)
        assert not p.contains(3 + 1j)


class TestCsvInterchange:
    def test_graph_roundtrip(self):
        g = graph_from_knots([0, 0.5, 1], [0, 1, 0])
        text = curve_to_csv(g)
        assert text.splitlines()[0] == "t,x,y"
        g2 = curve_from_csv(text)
        assert isinstance(g2, LipschitzGraph)
        assert np.array_equal(g2.knots, g.knots)
        assert np.array_equal(g2.values, g.values)

    def test_polyline_roundtrip(self):
        p = Polyline(np.array([0j, 1 + 1j, 2 + 0.5j]))
        text = curve_to_csv(p)
        assert text.splitlines()[0] == "x,y"
        p2 = curve_from_csv(text)
        assert np.array_equal(p2.vertices, p.vertices)

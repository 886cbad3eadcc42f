import math
import os

import numpy as np
import pytest

from ml2.errors import DivergentNorm, NonFiniteIntegrand
from ml2.geometry import Disk, Polygon, Polyline, flat_graph, graph_from_knots
from ml2.quadrature import (abs2, integrate_curve, integrate_curve_multi,
                            integrate_domain, one, poly_integrand,
                            verify_lemma27, weighted_inner)
from ml2.weights import AtomicLogWeight, zero_weight
from oracles import graph_single_atom_oracle


def atom(z, beta):
    return AtomicLogWeight(np.asarray([complex(z)]), np.asarray([float(beta)]))


class TestClosedForms:
    def test_sqrt_singularity_on_flat(self):
        out = integrate_curve(flat_graph(-1, 1), one, atom(0, 0.5))
        assert out.converged
        assert out.value == pytest.approx(4.0, abs=1e-6)

    def test_disk_area(self):
        out = integrate_domain(Disk(0j, 1.0), one, zero_weight())
        assert out.converged
        assert out.value == pytest.approx(math.pi, abs=1e-6)

    def test_disk_mass_one(self):
        out = integrate_domain(Disk(0j, 1.0), one, atom(0, 1.0))
        assert out.converged
        assert out.value == pytest.approx(2 * math.pi, abs=1e-4)

    def test_square_polygon_area(self):
        p = Polygon(np.asarray([0j, 1 + 0j, 1 + 1j, 0 + 1j]))
        out = integrate_domain(p, one, zero_weight())
        assert out.converged
        assert out.value == pytest.approx(1.0, rel=1e-8)


class TestArcDichotomy:
    @pytest.mark.parametrize("beta", [0.25, 0.5, 0.9])
    def test_integrable_masses_converge(self, beta):
        out = integrate_curve(flat_graph(-1, 1), one, atom(0, beta))
        assert out.converged
        oracle = graph_single_atom_oracle([-1, 1], [0, 0], 0.0, beta, 400_000)
        assert out.value == pytest.approx(oracle, rel=1e-7)

    @pytest.mark.parametrize("beta", [1.0, 1.3])
    def test_critical_masses_diverge(self, beta):
        out = integrate_curve(flat_graph(-1, 1), one, atom(0, beta))
        assert out.diverged
        assert out.growth_rate > 0

    def test_threshold_growth_rate_is_two_log_two(self):
        # analytic oracle: truncation at 2^-J adds 2 ln 2 per halving
        out = integrate_curve(flat_graph(-1, 1), one, atom(0, 1.0))
        assert out.diverged
        assert out.growth_rate == pytest.approx(2 * math.log(2), rel=1e-6)

    def test_refinement_monotone_for_nonnegative(self):
        for beta in (0.5, 1.0):
            out = integrate_curve(flat_graph(-1, 1), one, atom(0, beta))
            vals = [v for _, v in out.refinement_trace]
            assert all(b >= a - 1e-12 for a, b in zip(vals[:-1], vals[1:]))


class TestAreaDichotomy:
    @pytest.mark.parametrize("beta,expect", [(1.0, 2 * math.pi), (1.9, 2 * math.pi / 0.1)])
    def test_converged(self, beta, expect):
        out = integrate_domain(Disk(0j, 1.0), one, atom(0, beta))
        assert out.converged
        assert out.value == pytest.approx(expect, rel=1e-5)

    @pytest.mark.parametrize("beta", [2.0, 2.5])
    def test_diverged(self, beta):
        out = integrate_domain(Disk(0j, 1.0), one, atom(0, beta))
        assert out.diverged
        assert out.growth_rate > 0

    def test_off_center_atom(self):
        # radial symmetry broken; value still finite and positive
        out = integrate_domain(Disk(0j, 1.0), one, atom(0.4 + 0.2j, 1.5))
        assert out.converged
        assert out.value > 0


class TestVerticalSandwich:
    @pytest.mark.parametrize("a", [0.1, 1.0])
    @pytest.mark.parametrize("alpha", [0.3, 0.7])
    def test_bounds(self, a, alpha):
        seg = Polyline(np.asarray([complex(a, -a), complex(a, a)]))
        out = integrate_curve(seg, one, atom(0, alpha))
        assert out.converged
        lo = 2.0 / math.sqrt(2.0) ** alpha * a ** (1 - alpha)
        hi = 2.0 * a ** (1 - alpha)
        assert lo - 1e-9 <= out.value <= hi + 1e-9


class TestLemma27Bound:
    def test_midpoint_closed_form(self):
        value, bound, ok = verify_lemma27(flat_graph(0, 1), 0.5 + 0j, 0.5)
        assert value == pytest.approx(2 * math.sqrt(2), rel=1e-8)
        assert bound == pytest.approx(4.0)
        assert ok

    def test_outside_closed_form(self):
        value, bound, ok = verify_lemma27(flat_graph(0, 1), 2 + 0j, 0.5)
        assert value == pytest.approx(2 * (math.sqrt(2) - 1), rel=1e-8)
        assert ok

    def test_beta_zero_gives_arc_length(self):
        g = graph_from_knots([0, 0.5, 1], [0, 1, 0])
        value, bound, ok = verify_lemma27(g, 0.3 + 0.3j, 0.0)
        assert value == pytest.approx(2 * math.sqrt(1.25), rel=1e-9)
        assert bound == pytest.approx(2 * (g.lipschitz + 1) * 1.0)
        assert ok

    def test_randomized_cases(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            m = int(rng.integers(2, 6))
            knots = np.sort(rng.uniform(-1, 1, m + 1))
            if np.min(np.diff(knots)) < 1e-3:
                continue
            vals = np.concatenate([[0.0], np.cumsum(rng.uniform(-3, 3, m) * np.diff(knots))])
            g = graph_from_knots(knots, vals)
            z0 = complex(rng.uniform(-2, 2), rng.uniform(-2, 2))
            beta = float(rng.uniform(0.05, 0.95))
            value, bound, ok = verify_lemma27(g, z0, beta)
            assert ok, (value, bound)


class TestProductAndUniformBounds:
    def test_product_bound(self):
        # random atom sets with total mass < 1: converged and below the
        # single-singularity bound at the total-mass exponent
        rng = np.random.default_rng(11)
        g = graph_from_knots([0, 0.4, 1], [0, 0.6, 0.2])
        L, span = g.lipschitz, 1.0
        for _ in range(10):
            m = int(rng.integers(1, 5))
            raw = rng.uniform(0.1, 1.0, m)
            beta_total = float(rng.uniform(0.3, 0.95))
            betas = raw / raw.sum() * beta_total
            pts = rng.uniform(0, 1, m) + 1j * rng.uniform(-0.5, 0.5, m)
            w = AtomicLogWeight(pts.astype(complex), betas)
            out = integrate_curve(g, one, w)
            assert out.converged
            bound = 2 * (L + 1) * span ** (1 - beta_total) / (1 - beta_total)
            assert out.value <= bound + 1e-9

    def test_uniform_bound_over_placements(self):
        # fixed total mass beta < 1, 100 random placements: the sup stays
        # within 3x the single-pole bound
        rng = np.random.default_rng(13)
        g = flat_graph(0, 1)
        beta_total = 0.8
        bound = 2 * 1.0 * 1.0 / (1 - beta_total)
        worst = 0.0
        for _ in range(100):
            m = int(rng.integers(1, 5))
            raw = rng.uniform(0.1, 1.0, m)
            betas = raw / raw.sum() * beta_total
            pts = rng.uniform(-0.2, 1.2, m) + 1j * rng.uniform(-0.5, 0.5, m)
            w = AtomicLogWeight(pts.astype(complex), betas)
            out = integrate_curve(g, one, w)
            assert out.converged
            worst = max(worst, float(out.value))
        assert worst <= 3 * bound


class TestWeightedInner:
    def test_constant(self):
        v = weighted_inner(flat_graph(0, 1), one, one, zero_weight())
        assert v == pytest.approx(1.0, abs=1e-9)

    def test_linear_against_one(self):
        f = poly_integrand([0.0, 1.0])
        v = weighted_inner(flat_graph(0, 1), f, one, zero_weight())
        assert v == pytest.approx(0.5, abs=1e-9)

    def test_union_measure(self):
        regions = [Disk(0j, 1.0), flat_graph(1, 2)]
        v = weighted_inner(regions, one, one, zero_weight())
        assert v == pytest.approx(math.pi + 1.0, abs=1e-6)

    def test_conjugate_linear_in_second(self):
        f = poly_integrand([0.0, 1j])
        v = weighted_inner(flat_graph(0, 1), one, f, zero_weight())
        # <1, i z> = conj(i) * 1/2
        assert v == pytest.approx(-0.5j, abs=1e-9)

    def test_divergent_norm_raises_with_region(self):
        with pytest.raises(DivergentNorm) as ei:
            weighted_inner(flat_graph(-1, 1), one, one, atom(0, 1.2))
        assert "region[0]" in str(ei.value)


class TestDeterminism:
    def test_bit_identical_across_runs(self):
        w = atom(0.3 + 0.1j, 0.7)
        g = graph_from_knots([0, 0.5, 1], [0, 1, 0])
        a = integrate_curve(g, one, w)
        b = integrate_curve(g, one, w)
        assert a.value == b.value
        assert a.refinement_trace == b.refinement_trace

    def test_invariant_to_thread_env(self):
        g = flat_graph(-1, 1)
        old = os.environ.get("ML2_THREADS")
        try:
            os.environ["ML2_THREADS"] = "1"
            v1 = integrate_curve(g, one, atom(0, 0.5)).value
            os.environ["ML2_THREADS"] = "4"
            v2 = integrate_curve(g, one, atom(0, 0.5)).value
        finally:
            if old is None:
                os.environ.pop("ML2_THREADS", None)
            else:
                os.environ["ML2_THREADS"] = old
        assert v1 == v2

    def test_multi_matches_single(self):
        g = graph_from_knots([0, 0.5, 1], [0, 1, 0])
        w = atom(0.5 + 1j, 0.5)
        gs = [one, abs2(poly_integrand([0.0, 1.0]))]
        multi = integrate_curve_multi(g, gs, w)
        for gi, mo in zip(gs, multi):
            single = integrate_curve(g, gi, w)
            assert single.value == mo.value
            assert single.status == mo.status


class TestErrors:
    def test_nan_integrand_rejected(self):
        def bad(z, ctx=None):
            out = np.ones(np.shape(z))
            out[0] = np.nan
            return out

        with pytest.raises(NonFiniteIntegrand):
            integrate_curve(flat_graph(0, 1), bad, zero_weight())

    def test_bad_tolerance(self):
        with pytest.raises(ValueError):
            integrate_curve(flat_graph(0, 1), one, zero_weight(), tol=-1)

    def test_bad_depth(self):
        with pytest.raises(ValueError):
            integrate_curve(flat_graph(0, 1), one, zero_weight(), max_depth=2)

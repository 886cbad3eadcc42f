"""Singularity-graded quadrature for integrals of g * e^{-phi} over curves
and domains, with a convergence/divergence classifier.

Curves use composite Gauss-Legendre panels (fixed order 8) with dyadic
grading toward the parameter projections of every atom within distance 1;
domains use polar annular grading around each interior/boundary atom (split
off by a smooth radial cutoff) plus a tensor background mesh.  One refinement
round doubles the grading depth; the trace of (depth, value) pairs feeds the
classifier.  Panels are summed in traversal order through a fixed pairwise
tree, so results are bit-identical regardless of internal parallelism.

Classifier: convergence fires when the last two rounds differ by at most
tol * max(1, |value|).  Divergence fires once six rounds are recorded and
the trace tail keeps growing: the least-squares slope of the last four
values against their round positions exceeds 0.05 * max(1, |last value|)
with non-shrinking increments.  Reliable separation needs the singular mass
to sit clearly on one side of the integrability threshold; within ~0.05 of
it the honest outcome is MaxRefinement.  The reported growth_rate is the
slope of value against dyadic depth, which for a threshold-mass atom on an
arc is ln 2 per side per halving.
"""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import DivergentNorm, EmptyCurve, NonFiniteIntegrand
from .geometry import (Curve, Disk, Domain, LipschitzGraph, Polygon, Polyline,
                       as_complex)
from .weights import AtomicLogWeight, QFactorization, _sqrt_q_at, zero_weight

__all__ = [
    "QuadratureOutcome",
    "CurveContext",
    "FixedRule",
    "integrate_curve",
    "integrate_domain",
    "integrate_region",
    "weighted_inner",
    "verify_lemma27",
    "curve_rule",
    "domain_rule",
    "segment_values",
    "tree_sum",
    "one",
    "poly_integrand",
    "abs2",
    "profile_integrand",
    "sqrt_q_integrand",
    "outcome_to_json",
]

GL_NODES, GL_WEIGHTS = leggauss(8)
ATOM_RANGE = 1.0  # atoms farther than this from the region need no grading
ON_SEG_TOL = 1e-12  # distances below this count as "atom on the segment"
_STATUS_CONVERGED = "Converged"
_STATUS_DIVERGED = "Diverged"
_STATUS_MAXREF = "MaxRefinement"


@dataclass
class QuadratureOutcome:
    status: str
    value: complex | float
    error_estimate: float
    refinement_trace: list  # [(depth, value), ...]
    growth_rate: float | None = None

    @property
    def converged(self) -> bool:
        return self.status == _STATUS_CONVERGED

    @property
    def diverged(self) -> bool:
        return self.status == _STATUS_DIVERGED


def outcome_to_json(o: QuadratureOutcome) -> dict:
    def num(v):
        if isinstance(v, complex):
            return [v.real, v.imag]
        return float(v)

    return {
        "status": o.status,
        "value": num(o.value),
        "error": float(o.error_estimate),
        "trace": [[int(d), num(v)] for d, v in o.refinement_trace],
        "growth_rate": None if o.growth_rate is None else float(o.growth_rate),
    }


# ---------------------------------------------------------------------------
# integrand helpers.  An integrand is f(z, ctx) -> ndarray; ctx carries the
# curve and the traversal-ordered node parameters when integrating a curve.
# ---------------------------------------------------------------------------


@dataclass
class CurveContext:
    """Evaluation context passed to integrands.

    Nodes generated inside panels graded toward an exact singular point
    carry that point in anchor_z and their exact planar offset from it in
    rel_vec; elsewhere anchor_z is nan.  dz() uses these so that factors
    vanishing at an atom are evaluated at the true sub-epsilon distances,
    consistently with the weight density.
    """

    curve: Curve | None
    params: np.ndarray | None
    anchor_z: np.ndarray | None = None  # complex, nan where no anchor
    rel_vec: np.ndarray | None = None  # complex offset from anchor
    anchor_param: np.ndarray | None = None  # nan where no anchor
    rel_param: np.ndarray | None = None

    def dz(self, p: complex, z: np.ndarray) -> np.ndarray:
        """z - p, exact even when z is anchored at p far below eps * |p|."""
        out = np.asarray(z, dtype=complex) - p
        if self.anchor_z is not None:
            m = self.anchor_z == p
            if m.any():
                out = out.copy()
                out[m] = self.rel_vec[m]
        return out

    def dparam(self, c: float) -> np.ndarray:
        """params - c, computed as (anchor - c) + rel where nodes are
        anchored near c, so sub-epsilon offsets survive."""
        out = self.params - c
        if self.anchor_param is not None:
            with np.errstate(invalid="ignore"):
                m = np.abs(self.anchor_param - c) <= 1e-12 * max(1.0, abs(c))
            if m.any():
                out = out.copy()
                out[m] = (self.anchor_param[m] - c) + self.rel_param[m]
        return out


def context_dz(ctx, p, z):
    if ctx is None:
        return np.asarray(z, dtype=complex) - p
    return ctx.dz(p, z)


def one(z, ctx=None):
    return np.ones(np.shape(z))


def poly_integrand(coeffs, center=0.0, scale=1.0):
    c = np.asarray(coeffs, dtype=complex)

    def f(z, ctx=None):
        x = (np.asarray(z, dtype=complex) - center) / scale
        return np.polynomial.polynomial.polyval(x, c)

    return f


def abs2(f):
    """|f|^2 as an integrand."""

    def g(z, ctx=None):
        return np.abs(f(z, ctx)) ** 2

    return g


def profile_integrand(fn):
    """A function of the curve parameter (only valid on curves)."""

    def f(z, ctx=None):
        if ctx is None:
            raise ValueError("parameter profiles require a curve context")
        return np.asarray(fn(ctx.params))

    return f


def sqrt_q_integrand(qf: QFactorization):
    """Branch-continued sqrt(Q) along the context curve."""

    def f(z, ctx=None):
        if ctx is None or ctx.curve is None:
            raise ValueError("sqrt(Q) needs a curve context for its branch")
        return _sqrt_q_at(ctx.curve, qf, np.asarray(z, dtype=complex), ctx=ctx)

    return f


# ---------------------------------------------------------------------------
# deterministic reduction
# ---------------------------------------------------------------------------


def tree_sum(a: np.ndarray):
    """Pairwise (binary tree) sum in fixed order; zero-padded to a power of
    two so the tree shape depends only on the length."""
    a = np.asarray(a)
    if a.size == 0:
        return a.dtype.type(0)
    n = 1
    while n < a.size:
        n *= 2
    buf = np.zeros(n, dtype=a.dtype)
    buf[: a.size] = a
    while buf.size > 1:
        buf = buf[0::2] + buf[1::2]
    return buf[0]


# ---------------------------------------------------------------------------
# curve rules
# ---------------------------------------------------------------------------


@dataclass
class FixedRule:
    """Quadrature nodes with base measure weights (arc or area), before the
    e^{-phi} factor.  anchor_z / rel_vec mirror CurveContext: exact singular
    anchors and offsets for nodes in graded panels."""

    z: np.ndarray
    weights: np.ndarray
    params: np.ndarray | None  # curve parameter per node (None for domains)
    panel_sizes: np.ndarray  # nodes per panel, traversal order
    kind: str  # "curve" | "domain"
    anchor_z: np.ndarray | None = None
    rel_vec: np.ndarray | None = None
    anchor_param: np.ndarray | None = None
    rel_param: np.ndarray | None = None

    def panel_reduce(self, weighted_values: np.ndarray):
        ends = np.cumsum(self.panel_sizes)
        sums = np.add.reduceat(weighted_values, np.concatenate([[0], ends[:-1]]))
        return tree_sum(sums)

    def context(self, curve=None) -> CurveContext:
        return CurveContext(curve=curve, params=self.params,
                            anchor_z=self.anchor_z, rel_vec=self.rel_vec,
                            anchor_param=self.anchor_param,
                            rel_param=self.rel_param)


def density_at(w: AtomicLogWeight, z: np.ndarray, anchor_z=None, rel_vec=None) -> np.ndarray:
    """e^{-phi} at nodes, using exact anchored offsets where available."""
    acc = np.exp(-np.asarray(w.smooth_part(z), dtype=float))
    for p, b in zip(w.points, w.masses):
        dist = np.abs(z - p)
        if anchor_z is not None:
            m = anchor_z == p
            if m.any():
                dist = np.where(m, np.abs(rel_vec), dist)
        with np.errstate(divide="ignore"):
            acc = acc * dist ** (-b)
    return acc


def rule_density(w: AtomicLogWeight, rule: FixedRule) -> np.ndarray:
    return density_at(w, rule.z, rule.anchor_z, rule.rel_vec)


def _dyadic_offsets(s: float, depth: int):
    """[0, s*2^-depth, ..., s/2, s] with underflow-safe dedup."""
    out = [0.0]
    last = 0.0
    for j in range(depth, 0, -1):
        x = s * 2.0**-j
        if x > last:
            out.append(x)
            last = x
    if s > last:
        out.append(s)
    elif out[-1] != s:
        out[-1] = s
    return np.asarray(out)


def _cap_rel_breaks(breaks: np.ndarray, h_cap: float) -> np.ndarray:
    """Split intervals longer than h_cap uniformly (512 pieces at most)."""
    widths = np.diff(breaks)
    if h_cap <= 0 or not np.any(widths > h_cap):
        return breaks
    out = [breaks[:1]]
    for a, b in zip(breaks[:-1], breaks[1:]):
        n = min(max(int(math.ceil((b - a) / h_cap - 1e-12)), 1), 512)
        out.append(a + (b - a) * np.arange(1, n + 1) / n)
    return np.concatenate(out)


def _segment_panels(p0: float, p1: float, sing, h_cap: float):
    """Panels of [p0, p1] graded toward each singular parameter.

    Panels are emitted as (anchor_param, anchor_z, rel_lo, rel_hi) with
    breakpoints stored relative to their grading anchor, so offsets far
    below the float spacing of the absolute parameter survive.  anchor_z is
    the exact planar anchor (the atom itself when it sits on the curve) or
    None when the reconstruction from the parameter is adequate.
    sing: [(param, depth, exact_z_or_None), ...] sorted and deduplicated.
    """
    panels = []

    def emit(anchor, anchor_z, rel_breaks):
        rel_breaks = _cap_rel_breaks(rel_breaks, h_cap)
        for lo, hi in zip(rel_breaks[:-1], rel_breaks[1:]):
            if hi > lo:
                panels.append((anchor, anchor_z, lo, hi))

    if not sing:
        emit(p0, None, np.asarray([0.0, p1 - p0]))
        return panels
    cuts = [p0]
    for (u1, _, _), (u2, _, _) in zip(sing[:-1], sing[1:]):
        cuts.append(0.5 * (u1 + u2))
    cuts.append(p1)
    for (u, jd, az), lo, hi in zip(sing, cuts[:-1], cuts[1:]):
        if u - lo > 0:
            emit(u, az, -_dyadic_offsets(u - lo, jd)[::-1])
        if hi - u > 0:
            emit(u, az, _dyadic_offsets(hi - u, jd))
    return panels


_rule_memo = weakref.WeakKeyDictionary()


def _weight_fingerprint(w: AtomicLogWeight):
    return (w.points.tobytes(), w.masses.tobytes(), w.smooth)


_MEMO_NODE_LIMIT = 2_000_000  # rules larger than this are rebuilt, not cached


def curve_rule(curve: Curve, w: AtomicLogWeight, depth: int) -> FixedRule:
    """Composite order-8 Gauss-Legendre rule along the curve, graded toward
    the projections of all atoms within distance ATOM_RANGE.  Cached per
    (curve, weight, depth) while the curve is alive."""
    memo = _rule_memo.setdefault(curve, {})
    key = (_weight_fingerprint(w), int(depth))
    hit = memo.get(key)
    if hit is not None:
        return hit
    rule = _build_curve_rule(curve, w, depth)
    if rule.z.size <= _MEMO_NODE_LIMIT:
        memo[key] = rule
    return rule


def _build_curve_rule(curve: Curve, w: AtomicLogWeight, depth: int) -> FixedRule:
    p0s, p1s, z0s, z1s, speeds = curve.segments()
    nseg = p0s.size
    if nseg == 0:
        raise EmptyCurve("curve has no segments")
    h_phys = 8.0 / depth
    seg_len = np.abs(z1s - z0s)
    # vectorized projection of every atom onto every segment
    sing_per_seg = [[] for _ in range(nseg)]
    if w.points.size:
        A = w.points[None, :]  # (1, natoms)
        seg_vec = (z1s - z0s)[:, None]
        seg_len2 = seg_vec.real**2 + seg_vec.imag**2
        u = ((A - z0s[:, None]) * np.conj(seg_vec)).real / seg_len2
        u = np.clip(u, 0.0, 1.0)
        d = np.abs(A - (z0s[:, None] + u * seg_vec))
        near = d <= ATOM_RANGE
        on_seg = d <= ON_SEG_TOL * np.maximum(1.0, seg_len[:, None])
        with np.errstate(divide="ignore"):
            jd_arr = np.ceil(np.log2(np.maximum(4.0 * seg_len[:, None] / np.maximum(d, 1e-300), 1.0)))
        jd_arr = np.where(on_seg, depth, np.minimum(jd_arr, depth)).astype(int)
        pu_arr = p0s[:, None] + u * (p1s - p0s)[:, None]
        rows, cols = np.nonzero(near & (jd_arr > 0))
        for i, j in zip(rows, cols):
            exact = complex(w.points[j]) if on_seg[i, j] else None
            sing_per_seg[i].append((float(pu_arr[i, j]), int(jd_arr[i, j]), exact))
    anchors, anchor_zs, rel_lo, rel_hi, seg_of_panel = [], [], [], [], []
    for i in range(nseg):
        sing = sorted(sing_per_seg[i], key=lambda t: t[0])
        merged = []
        span = abs(p1s[i] - p0s[i])
        for pu, jd, az in sing:
            if merged and pu - merged[-1][0] <= 1e-13 * max(1.0, span):
                pm, jm, am = merged[-1]
                merged[-1] = (pm, max(jm, jd), am if am is not None else az)
            else:
                merged.append((pu, jd, az))
        h_param = max(h_phys / speeds[i], 1e-14)
        panels = _segment_panels(float(p0s[i]), float(p1s[i]), merged, h_param)
        for anchor, az, lo, hi in panels:
            anchors.append(anchor)
            anchor_zs.append(az)
            rel_lo.append(lo)
            rel_hi.append(hi)
        seg_of_panel.append(np.full(len(panels), i))
    seg_idx = np.concatenate(seg_of_panel)
    anchors = np.asarray(anchors)
    rel_lo = np.asarray(rel_lo)
    rel_hi = np.asarray(rel_hi)
    mid, half = 0.5 * (rel_lo + rel_hi), 0.5 * (rel_hi - rel_lo)
    rel_t = mid[:, None] + half[:, None] * GL_NODES[None, :]
    dirs = (z1s - z0s) / (p1s - p0s)
    # anchor each panel in the plane so offsets survive float cancellation;
    # on-curve atoms anchor at their exact coordinates
    anchor_z = z0s[seg_idx] + (anchors - p0s[seg_idx]) * dirs[seg_idx]
    exact_mask = np.asarray([az is not None for az in anchor_zs])
    if exact_mask.any():
        anchor_z[exact_mask] = np.asarray(
            [az for az in anchor_zs if az is not None], dtype=complex
        )
    rel_vec = rel_t * dirs[seg_idx, None]
    z = anchor_z[:, None] + rel_vec
    wts = half[:, None] * GL_WEIGHTS[None, :] * speeds[seg_idx, None]
    params = anchors[:, None] + rel_t
    node_anchor = np.where(exact_mask[:, None], anchor_z[:, None],
                           complex(np.nan, np.nan)) * np.ones((1, 8))
    node_anchor_p = np.where(exact_mask[:, None], anchors[:, None], np.nan) * np.ones((1, 8))
    return FixedRule(
        z=z.ravel(),
        weights=wts.ravel(),
        params=params.ravel(),
        panel_sizes=np.full(rel_lo.size, 8, dtype=int),
        kind="curve",
        anchor_z=node_anchor.ravel(),
        rel_vec=rel_vec.ravel(),
        anchor_param=node_anchor_p.ravel(),
        rel_param=rel_t.ravel(),
    )


# ---------------------------------------------------------------------------
# domain rules
# ---------------------------------------------------------------------------


def _smoothstep(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        b = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return a / (a + b)


def _patch_cutoff(r, d):
    """1 on r <= d/2, smooth to 0 at r >= d."""
    return _smoothstep(2.0 - 2.0 * np.asarray(r) / d)


def _ray_exit(domain: Domain, a: complex, ang: np.ndarray) -> np.ndarray:
    """Distance from a to the domain boundary along each direction."""
    e = np.exp(1j * ang)
    if isinstance(domain, Disk):
        ca = a - domain.center
        bq = (np.conj(e) * ca).real
        disc = np.maximum(bq * bq - (abs(ca) ** 2 - domain.radius**2), 0.0)
        return np.maximum(-bq + np.sqrt(disc), 0.0)
    v = domain.vertices
    n = v.size
    t_best = np.full(ang.shape, np.inf)
    for i in range(n):
        w0, w1 = v[i], v[(i + 1) % n]
        d = w1 - w0
        denom = (e * np.conj(d)).imag
        with np.errstate(divide="ignore", invalid="ignore"):
            t = ((w0 - a) * np.conj(d)).imag / denom
            s = ((w0 - a) * np.conj(e)).imag / denom
        ok = np.isfinite(t) & (t > 1e-13) & (s >= -1e-12) & (s <= 1 + 1e-12)
        t_best = np.where(ok & (t < t_best), t, t_best)
    return np.where(np.isfinite(t_best), t_best, 0.0)


def _domain_atoms(domain: Domain, w: AtomicLogWeight):
    """Atoms inside or on the closed domain, with disjoint patch radii."""
    pts = []
    for p in w.points:
        z = complex(p)
        if isinstance(domain, Disk):
            inside = abs(z - domain.center) <= domain.radius + 1e-12
        else:
            inside = bool(domain.contains(z, tol=1e-12))
        if inside:
            pts.append(z)
    if isinstance(domain, Disk):
        diam = 2 * domain.radius
    else:
        v = domain.vertices
        diam = float(np.max(np.abs(v[:, None] - v[None, :])))
    radii = []
    for z in pts:
        d = 0.45 * min(1.0, diam)
        for other in w.points:
            if complex(other) != z:
                d = min(d, 0.45 * abs(complex(other) - z))
        radii.append(d)
    return pts, radii


def _disk_background_cells(domain: Disk, depth: int, patch_atoms, patch_radii):
    """(r0, r1, t0, t1) leaf cells of a polar mesh, refined near each atom
    so the smooth cutoff seam is resolved.  Deterministic DFS order."""
    n_r = int(min(max(2, depth // 8), 48))
    n_t = int(min(max(4, depth // 8), 48))
    R = domain.radius
    c = domain.center
    out = []

    def needs_split(cell, lvl):
        if lvl >= 7:
            return False
        r0, r1, t0, t1 = cell
        rmid = 0.5 * (r0 + r1)
        diam = (r1 - r0) + max(rmid, 1e-30) * (t1 - t0)
        corners = [c + r * math.cos(t) + 1j * r * math.sin(t)
                   for r in (r0, rmid, r1) for t in (t0, 0.5 * (t0 + t1), t1)]
        for a, da in zip(patch_atoms, patch_radii):
            dist = min(abs(z - a) for z in corners)
            if dist < 1.5 * da + diam and diam > 0.35 * da:
                return True
        return False

    def emit(cell, lvl):
        if needs_split(cell, lvl):
            r0, r1, t0, t1 = cell
            rm, tm = 0.5 * (r0 + r1), 0.5 * (t0 + t1)
            for sub in ((r0, rm, t0, tm), (r0, rm, tm, t1), (rm, r1, t0, tm), (rm, r1, tm, t1)):
                emit(sub, lvl + 1)
        else:
            out.append(cell)

    for i in range(n_r):
        for j in range(n_t):
            emit((R * i / n_r, R * (i + 1) / n_r,
                  2 * np.pi * j / n_t, 2 * np.pi * (j + 1) / n_t), 0)
    return out


def _polar_tensor_nodes(center: complex, cells):
    """GL 8x8 nodes/weights (with Jacobian r) for (r, theta) cells."""
    cells = np.asarray(cells, dtype=float)
    r0, r1, t0, t1 = cells.T
    rm, rh = 0.5 * (r0 + r1), 0.5 * (r1 - r0)
    tm, th = 0.5 * (t0 + t1), 0.5 * (t1 - t0)
    r = rm[:, None] + rh[:, None] * GL_NODES[None, :]
    t = tm[:, None] + th[:, None] * GL_NODES[None, :]
    wr = rh[:, None] * GL_WEIGHTS[None, :]
    wt = th[:, None] * GL_WEIGHTS[None, :]
    z = center + r[:, :, None] * np.exp(1j * t[:, None, :])
    wts = (wr[:, :, None] * wt[:, None, :]) * r[:, :, None]
    return z.reshape(len(cells), -1), wts.reshape(len(cells), -1)


def _triangulate(poly: Polygon):
    """Ear clipping for a simple polygon (CCW order enforced)."""
    v = list(poly.vertices if poly.signed_area() > 0 else poly.vertices[::-1])
    tris = []

    def cross(o, a, b):
        return (a - o).real * (b - o).imag - (a - o).imag * (b - o).real

    def contains_pt(p, a, b, c):
        return (cross(a, b, p) >= -1e-14 and cross(b, c, p) >= -1e-14
                and cross(c, a, p) >= -1e-14)

    guard = 0
    while len(v) > 3 and guard < 100000:
        guard += 1
        n = len(v)
        for i in range(n):
            a, b, c = v[(i - 1) % n], v[i], v[(i + 1) % n]
            if cross(a, b, c) <= 1e-16:
                continue
            others = [p for j, p in enumerate(v) if j not in ((i - 1) % n, i, (i + 1) % n)]
            if any(contains_pt(p, a, b, c) for p in others):
                continue
            tris.append((a, b, c))
            del v[i]
            break
        else:
            break
    if len(v) == 3:
        tris.append(tuple(v))
    return tris


def _triangle_nodes(tris, level: int):
    """Uniformly subdivided triangles mapped by Duffy to GL 8x8 tensors."""
    subtris = []
    for a, b, c in tris:
        k = 2**level
        ab, ac = b - a, c - a
        for i in range(k):
            for j in range(k - i):
                p = a + ab * (i / k) + ac * (j / k)
                q = a + ab * ((i + 1) / k) + ac * (j / k)
                r = a + ab * (i / k) + ac * ((j + 1) / k)
                subtris.append((p, q, r))
                if i + j < k - 1:
                    s = a + ab * ((i + 1) / k) + ac * ((j + 1) / k)
                    subtris.append((q, s, r))
    u = 0.5 * (GL_NODES + 1.0)
    wu = 0.5 * GL_WEIGHTS
    U, V = np.meshgrid(u, u, indexing="ij")
    WU = np.outer(wu, wu)
    # Duffy map (u, v) -> vertex a + (b-a) u + (c-b) u v, Jacobian 2*area*u
    zs, ws = [], []
    for a, b, c in subtris:
        z = a + (b - a) * U + (c - b) * (U * V)
        area2 = abs(((b - a) * np.conj(c - a)).imag)
        zs.append(z.ravel())
        ws.append((WU * U).ravel() * area2)
    return np.asarray(zs), np.asarray(ws)


def domain_parts(domain: Domain, w: AtomicLogWeight, depth: int) -> dict:
    """Quadrature pieces of an area integral: a background mesh (to be
    multiplied by 1 - sum chi_a) and one polar patch per interior/boundary
    atom (multiplied by its chi_a).  Patch rays stop at the boundary, so the
    pieces add up to the exact integral over the domain."""
    patch_atoms, patch_radii = _domain_atoms(domain, w)
    if isinstance(domain, Disk):
        cells = _disk_background_cells(domain, depth, patch_atoms, patch_radii)
        zb, wb = _polar_tensor_nodes(domain.center, cells)
        bg_sizes = np.full(len(cells), zb.shape[1], dtype=int)
    else:
        level = int(min(5, max(0, round(math.log2(max(depth, 4)) - 2))))
        zb, wb = _triangle_nodes(_triangulate(domain), level)
        bg_sizes = np.full(zb.shape[0], zb.shape[1], dtype=int)
    zb, wb = zb.ravel(), wb.ravel()
    patches = []
    n_tp = int(min(max(8, depth // 8), 32))
    for a, da in zip(patch_atoms, patch_radii):
        t_edges = 2 * np.pi * np.arange(n_tp + 1) / n_tp
        tm = 0.5 * (t_edges[:-1] + t_edges[1:])[:, None]
        th = np.pi / n_tp
        tq = (tm + th * GL_NODES[None, :]).ravel()
        wt = np.tile(th * GL_WEIGHTS, n_tp)
        rmax = np.minimum(_ray_exit(domain, a, tq), da)
        edges = np.concatenate([[0.0], np.maximum.accumulate(2.0 ** np.arange(-min(depth, 1000), 1, dtype=float))])
        r0 = rmax[:, None] * edges[:-1]
        r1 = rmax[:, None] * edges[1:]
        rm, rh = 0.5 * (r0 + r1), 0.5 * (r1 - r0)
        r = rm[:, :, None] + rh[:, :, None] * GL_NODES[None, None, :]
        wr = rh[:, :, None] * GL_WEIGHTS[None, None, :]
        rel = r * np.exp(1j * tq[:, None, None])
        z = a + rel
        wts = wr * r * wt[:, None, None]
        patches.append((a, da, z.ravel(), wts.ravel(), rel.ravel(),
                        np.full(r.shape[0] * r.shape[1], 8, dtype=int)))
    return {"background": (zb, wb, bg_sizes), "patches": patches,
            "atoms": (patch_atoms, patch_radii)}


def domain_rule(domain: Domain, w: AtomicLogWeight, depth: int) -> FixedRule:
    """Flat fixed rule over the domain for discrete least-squares forms.

    Atom patches and background are concatenated with the cutoff partition
    folded into the node weights; anchored offsets are kept so vanishing
    basis elements stay consistent with the weight density."""
    parts = domain_parts(domain, w, depth)
    atoms, radii = parts["atoms"]
    zb, wb, bg_sizes = parts["background"]
    factor = np.ones(zb.shape)
    for a, da in zip(atoms, radii):
        factor = factor * (1.0 - _patch_cutoff(np.abs(zb - a), da))
    nanc = complex(np.nan, np.nan)
    zs, ws, sizes = [zb], [wb * factor], [bg_sizes]
    ancs = [np.full(zb.shape, nanc)]
    rels = [np.zeros(zb.shape, dtype=complex)]
    for a, da, zp, wp, rel, psz in parts["patches"]:
        chi = _patch_cutoff(np.abs(rel), da)
        zs.append(zp)
        ws.append(wp * chi)
        sizes.append(psz)
        ancs.append(np.full(zp.shape, a, dtype=complex))
        rels.append(rel)
    return FixedRule(
        z=np.concatenate(zs),
        weights=np.concatenate(ws),
        params=None,
        panel_sizes=np.concatenate(sizes),
        kind="domain",
        anchor_z=np.concatenate(ancs),
        rel_vec=np.concatenate(rels),
    )


# ---------------------------------------------------------------------------
# adaptive integration with the shared classifier
# ---------------------------------------------------------------------------


def _depth_schedule(max_depth: int):
    depths = [4]
    while depths[-1] < max_depth:
        depths.append(min(2 * depths[-1], max_depth))
    return depths


def _classify_step(trace, tol):
    """(status or None, error_estimate, growth_rate) after the last round."""
    if len(trace) >= 2:
        delta = abs(trace[-1][1] - trace[-2][1])
        scale = max(1.0, abs(trace[-1][1]))
        if delta <= tol * scale:
            return _STATUS_CONVERGED, float(delta), None
    if len(trace) >= 6:
        tail = np.asarray([abs(v) for _, v in trace[-4:]], dtype=float)
        inc = np.diff(tail)
        growing = bool(np.all(inc > 0) and np.all(inc[1:] >= 0.5 * inc[:-1]))
        slope_idx = float(np.polyfit(np.arange(4.0), tail, 1)[0])
        if growing and slope_idx > 0.05 * max(1.0, tail[-1]):
            js = np.asarray([d for d, _ in trace[-4:]], dtype=float)
            growth = float(np.polyfit(js, tail, 1)[0])
            return _STATUS_DIVERGED, float(inc[-1]), growth
    return None, float("nan"), None


def _finish(trace, status, err, growth):
    if not math.isfinite(err):
        err = abs(trace[-1][1] - trace[-2][1]) if len(trace) > 1 else float("inf")
    return QuadratureOutcome(
        status=status,
        value=trace[-1][1],
        error_estimate=float(err),
        refinement_trace=trace,
        growth_rate=growth,
    )


def _check_finite(vals):
    if np.isnan(vals).any():
        raise NonFiniteIntegrand("integrand returned NaN away from atoms")
    return vals


def _scalarize(v):
    v = complex(v)
    if v.imag == 0.0:
        return v.real
    return v


def integrate_curve(curve: Curve, g, w: AtomicLogWeight, tol: float = 1e-6,
                    max_depth: int = 512) -> QuadratureOutcome:
    """Adaptive arc integral of g * e^{-phi} ds with the dichotomy
    classifier."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_depth < 4:
        raise ValueError("max_depth must be at least 4")
    trace = []
    for J in _depth_schedule(max_depth):
        rule = curve_rule(curve, w, J)
        dens = rule_density(w, rule)
        vals = _check_finite(np.asarray(g(rule.z, rule.context(curve))))
        v = _scalarize(rule.panel_reduce((vals * dens) * rule.weights))
        trace.append((J, v))
        status, err, growth = _classify_step(trace, tol)
        if status is not None:
            return _finish(trace, status, err, growth)
    return _finish(trace, _STATUS_MAXREF, float("nan"), None)


def integrate_curve_multi(curve: Curve, gs, w: AtomicLogWeight, tol: float = 1e-6,
                          max_depth: int = 512) -> list:
    """Classify several integrands over one curve, sharing the rule and the
    weight evaluation per refinement round.  Outcome i is bit-identical to
    integrate_curve(curve, gs[i], w, tol, max_depth)."""
    traces = [[] for _ in gs]
    results: list = [None] * len(gs)
    for J in _depth_schedule(max_depth):
        if all(r is not None for r in results):
            break
        rule = curve_rule(curve, w, J)
        dens = rule_density(w, rule)
        ctx = rule.context(curve)
        for i, g in enumerate(gs):
            if results[i] is not None:
                continue
            vals = _check_finite(np.asarray(g(rule.z, ctx)))
            # same association order as integrate_curve for bit-identity
            v = _scalarize(rule.panel_reduce((vals * dens) * rule.weights))
            traces[i].append((J, v))
            status, err, growth = _classify_step(traces[i], tol)
            if status is not None:
                results[i] = _finish(traces[i], status, err, growth)
    for i in range(len(gs)):
        if results[i] is None:
            results[i] = _finish(traces[i], _STATUS_MAXREF, float("nan"), None)
    return results


def integrate_domain(domain: Domain, g, w: AtomicLogWeight, tol: float = 1e-6,
                     max_depth: int = 512) -> QuadratureOutcome:
    """Adaptive area integral of g * e^{-phi} dA; interior/boundary atoms are
    carved out by a smooth radial cutoff and integrated on polar annuli
    graded toward the atom."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_depth < 4:
        raise ValueError("max_depth must be at least 4")
    bare_ctx = CurveContext(curve=None, params=None)
    trace = []
    for J in _depth_schedule(max_depth):
        parts = domain_parts(domain, w, J)
        atoms, radii = parts["atoms"]
        zb, wb, bg_sizes = parts["background"]
        factor = np.ones(zb.shape)
        for a, da in zip(atoms, radii):
            factor = factor * (1.0 - _patch_cutoff(np.abs(zb - a), da))
        live = factor > 1e-300
        probe = np.asarray(g(zb[live][:1] if live.any() else zb[:1], bare_ctx))
        vals_b = np.zeros(zb.shape, dtype=probe.dtype)
        if live.any():
            gv = _check_finite(np.asarray(g(zb[live], bare_ctx)))
            vals_b[live] = (gv * density_at(w, zb[live])) * factor[live]
        starts = np.concatenate([[0], np.cumsum(bg_sizes)[:-1]])
        piece_sums = [np.add.reduceat(vals_b * wb, starts)]
        for a, da, zp, wp, rel, sizes in parts["patches"]:
            anc = np.full(zp.shape, a, dtype=complex)
            ctx_p = CurveContext(curve=None, params=None, anchor_z=anc, rel_vec=rel)
            chi = _patch_cutoff(np.abs(rel), da)
            gv = _check_finite(np.asarray(g(zp, ctx_p)))
            vals_p = (gv * density_at(w, zp, anc, rel)) * chi
            piece_sums.append(np.add.reduceat(vals_p * wp, np.concatenate([[0], np.cumsum(sizes)[:-1]])))
        v = _scalarize(tree_sum(np.concatenate(piece_sums)))
        trace.append((J, v))
        status, err, growth = _classify_step(trace, tol)
        if status is not None:
            return _finish(trace, status, err, growth)
    return _finish(trace, _STATUS_MAXREF, float("nan"), None)


def integrate_region(region, g, w: AtomicLogWeight, tol: float = 1e-6,
                     max_depth: int = 512) -> QuadratureOutcome:
    if isinstance(region, (LipschitzGraph, Polyline)):
        return integrate_curve(region, g, w, tol, max_depth)
    return integrate_domain(region, g, w, tol, max_depth)


def weighted_inner(regions, f, g, w: AtomicLogWeight, tol: float = 1e-8):
    """Sum over regions of <f, g> = int f conj(g) e^{-phi} (arc measure on
    curves, area measure on domains); conjugate-linear in g.  Raises
    DivergentNorm naming the offending region if a piece fails to settle."""
    if not isinstance(regions, (list, tuple)):
        regions = [regions]

    def integrand(z, ctx=None):
        return np.asarray(f(z, ctx)) * np.conj(np.asarray(g(z, ctx)))

    total = 0.0 + 0.0j
    for i, region in enumerate(regions):
        out = integrate_region(region, integrand, w, tol=tol)
        if not out.converged:
            raise DivergentNorm(f"region[{i}] ({type(region).__name__})", "inner product")
        total += complex(out.value)
    return total


def verify_lemma27(graph: LipschitzGraph, z0, beta: float, tol: float = 1e-8):
    """Check int |z - z0|^{-beta} ds <= 2 (L+1) (b-a)^{1-beta} / (1-beta).

    Returns (value, bound, ok).  beta = 0 degenerates to the arc length
    against the same bound."""
    if not (0 <= beta < 1):
        raise ValueError("beta must lie in [0, 1)")
    z0 = as_complex(z0)
    w = AtomicLogWeight(np.asarray([z0]), np.asarray([beta]))
    out = integrate_curve(graph, one, w, tol=tol)
    L = graph.lipschitz
    span = graph.b - graph.a
    bound = 2.0 * (L + 1.0) * span ** (1.0 - beta) / (1.0 - beta)
    return float(out.value), float(bound), bool(out.value <= bound * (1 + 1e-9))


def segment_values(curve: Curve, g, w: AtomicLogWeight, depth: int = 48) -> np.ndarray:
    """Per-segment integrals of g e^{-phi} ds at a fixed grading depth,
    vectorized across all segments."""
    rule = curve_rule(curve, w, depth)
    gv = _check_finite(np.asarray(g(rule.z, rule.context(curve))))
    vals = (gv * rule_density(w, rule)) * rule.weights
    ends = np.cumsum(rule.panel_sizes)
    panel_sums = np.add.reduceat(vals, np.concatenate([[0], ends[:-1]]))
    p0s, p1s, _, _, _ = curve.segments()
    panel_params = rule.params.reshape(-1, 8)[:, 0]
    seg_idx = np.clip(np.searchsorted(p1s, panel_params, side="right"), 0, p0s.size - 1)
    out = np.zeros(p0s.size, dtype=panel_sums.dtype)
    np.add.at(out, seg_idx, panel_sums)
    return out

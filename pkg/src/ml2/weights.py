"""Subharmonic weights with logarithmic atoms.

A weight is phi(z) = sum_i beta_i log|z - zeta_i| + c0 + c1 Re z + c2 Im z
+ c3 |z|^2 with all beta_i > 0 and c3 >= 0.  The Lelong number at a point is
the atom mass there; the Kiselman limit max_{|w-z|=r} phi(w) / log r
recovers it numerically.  Atoms of mass at or above the integrability
threshold rho (1 on arcs, 2 on domains) can be factored into a polynomial
zero set Q plus a residual weight psi with phi = psi + rho * log|Q|.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import RadiusTooLarge, SampleOnZero
from .geometry import (Curve, Disk, Domain, LipschitzGraph, Polygon, Polyline,
                       _point_segment_dist, as_complex)

__all__ = [
    "AtomicLogWeight",
    "QFactorization",
    "KiselmanEstimate",
    "zero_weight",
    "lelong_at",
    "lelong_kiselman",
    "decompose_q",
    "sqrt_q_along",
    "atoms_on_region",
    "weight_to_json",
    "weight_from_json",
]

ON_CURVE_TOL = 1e-12  # membership tolerance for curve interiors


@dataclass(frozen=True, eq=False)
class AtomicLogWeight:
    """Atoms (zeta_i, beta_i) plus the smooth background (c0, c1, c2, c3).

    Coincident atom positions are merged by summing their masses; zero-mass
    atoms are dropped.
    """

    points: np.ndarray  # complex
    masses: np.ndarray  # float > 0
    smooth: tuple = (0.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        pts = np.atleast_1d(np.asarray(self.points, dtype=complex))
        ms = np.atleast_1d(np.asarray(self.masses, dtype=float))
        if pts.size != ms.size:
            raise ValueError("atom positions and masses differ in length")
        if np.any(ms < 0):
            raise ValueError("atom masses must be positive")
        # merge coincident atoms, preserving first-appearance order
        uniq, inv = np.unique(pts, return_inverse=True)
        merged = np.zeros(uniq.size)
        np.add.at(merged, inv, ms)
        order = np.argsort([np.argmax(pts == u) for u in uniq], kind="stable")
        uniq, merged = uniq[order], merged[order]
        keep = merged > 0
        pts, ms = uniq[keep], merged[keep]
        for a in (pts, ms):
            a.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "masses", ms)
        c = tuple(float(x) for x in self.smooth)
        if len(c) != 4:
            raise ValueError("smooth part needs 4 coefficients")
        if c[3] < 0:
            raise ValueError("the |z|^2 coefficient must be >= 0 (subharmonicity)")
        object.__setattr__(self, "smooth", c)

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    def smooth_part(self, z):
        z = np.asarray(z, dtype=complex)
        c0, c1, c2, c3 = self.smooth
        return c0 + c1 * z.real + c2 * z.imag + c3 * (z.real**2 + z.imag**2)

    def __call__(self, z):
        """phi(z); -inf exactly at atoms."""
        z = np.asarray(z, dtype=complex)
        out = np.asarray(self.smooth_part(z), dtype=float)
        if self.points.size:
            d = np.abs(z[..., None] - self.points)
            with np.errstate(divide="ignore"):
                out = out + (self.masses * np.log(d)).sum(axis=-1)
        return out if out.ndim else float(out)

    def density(self, z):
        """e^{-phi(z)} evaluated stably (products of powers of distances)."""
        z = np.asarray(z, dtype=complex)
        acc = np.exp(-np.asarray(self.smooth_part(z), dtype=float))
        for p, b in zip(self.points, self.masses):
            with np.errstate(divide="ignore"):
                acc = acc * np.abs(z - p) ** (-b)
        return acc

    def without_atoms(self, drop_points) -> "AtomicLogWeight":
        drop = np.asarray(drop_points, dtype=complex)
        keep = ~np.isin(self.points, drop)
        return AtomicLogWeight(self.points[keep], self.masses[keep], self.smooth)


def zero_weight() -> AtomicLogWeight:
    return AtomicLogWeight(np.empty(0, complex), np.empty(0, float))


def lelong_at(w: AtomicLogWeight, z) -> float:
    """Atom mass at z (exact coordinate match); the smooth part contributes 0."""
    z = as_complex(z)
    hit = w.points == z
    return float(w.masses[hit].sum()) if hit.any() else 0.0


@dataclass(frozen=True, eq=False)
class KiselmanEstimate:
    value: float  # ratio at the smallest radius
    ratios: tuple  # ((r, ratio), ...) for convergence inspection

    def __float__(self):
        return self.value


def lelong_kiselman(w: AtomicLogWeight, z, radii, samples_per_circle: int = 256) -> KiselmanEstimate:
    """Estimate the Lelong number at z from max-on-circle values of phi.

    The ratio max_{|w-z|=r} phi / log r is reported for every radius; the
    smallest radius gives the headline value.
    """
    z = as_complex(z)
    radii = np.asarray(radii, dtype=float)
    if radii.ndim != 1 or radii.size == 0 or np.any(radii <= 0):
        raise ValueError("radii must be positive")
    if not np.all(np.diff(radii) < 0):
        raise ValueError("radii must be strictly decreasing")
    if samples_per_circle < 16:
        raise ValueError("need at least 16 samples per circle")
    others = w.points[w.points != z]
    if others.size:
        nearest = float(np.min(np.abs(others - z)))
        if radii[0] >= nearest:
            raise RadiusTooLarge(
                f"radius {radii[0]} reaches the atom at distance {nearest}"
            )
    ang = 2 * np.pi * np.arange(samples_per_circle) / samples_per_circle
    ring = np.exp(1j * ang)
    ratios = []
    for r in radii:
        m = float(np.max(w(z + r * ring)))
        ratios.append((float(r), m / math.log(r)))
    return KiselmanEstimate(value=ratios[-1][1], ratios=tuple(ratios))


# ---------------------------------------------------------------------------
# region membership and the Q factorization
# ---------------------------------------------------------------------------


def _distance_to_curve(z: complex, curve: Curve) -> float:
    _, _, z0, z1, _ = curve.segments()
    return float(np.min(_point_segment_dist(np.asarray([z]), z0, z1)))


def on_region(z: complex, region, tol: float = ON_CURVE_TOL) -> bool:
    """Membership in the closed region: curves use the interior tolerance,
    with exact vertex coordinates always matching."""
    if isinstance(region, (LipschitzGraph, Polyline)):
        if isinstance(region, LipschitzGraph):
            verts = region.knots + 1j * region.values
        else:
            verts = region.vertices
        if np.any(verts == z):
            return True
        return _distance_to_curve(z, region) <= tol
    if isinstance(region, Disk):
        return abs(z - region.center) <= region.radius + tol
    if isinstance(region, Polygon):
        return bool(region.contains(z, tol=tol))
    raise TypeError(f"unsupported region {type(region)!r}")


def atoms_on_region(w: AtomicLogWeight, regions) -> np.ndarray:
    """Boolean mask over w's atoms: on the closure of any given region."""
    if not isinstance(regions, (list, tuple)):
        regions = [regions]
    mask = np.zeros(w.points.size, dtype=bool)
    for i, p in enumerate(w.points):
        mask[i] = any(on_region(complex(p), r) for r in regions)
    return mask


@dataclass(frozen=True, eq=False)
class QFactorization:
    """phi = psi + rho * log|Q| with Q = prod (z - p_j)^{m_j} and every
    residual atom mass on the region below rho."""

    zeros: tuple  # ((p_j, m_j), ...)
    residual: AtomicLogWeight
    rho: float = 1.0

    @property
    def points(self) -> np.ndarray:
        return np.asarray([p for p, _ in self.zeros], dtype=complex)

    @property
    def mults(self) -> np.ndarray:
        return np.asarray([m for _, m in self.zeros], dtype=int)

    def q_values(self, z):
        """Q(z) evaluated from its factored form."""
        z = np.asarray(z, dtype=complex)
        out = np.ones_like(z)
        for p, m in self.zeros:
            out = out * (z - p) ** m
        return out

    def abs_q_max(self, z_samples) -> float:
        return float(np.max(np.abs(self.q_values(z_samples)))) if len(self.zeros) else 1.0


def _multiplicity(beta: float, rho: float) -> int:
    """Smallest m >= 1 with beta - rho*m < rho.  At rho = 1 this is the
    floor [beta] used for arcs; at rho = 2 it removes mass in steps of 2."""
    m = int(math.floor(beta / rho - 1.0 + 1e-12)) + 1
    return max(m, 1)


def decompose_q(w: AtomicLogWeight, regions, rho: float) -> QFactorization:
    """Factor every on-region atom with mass >= rho into a polynomial zero.

    Emits (zeta_i, m_i) with the residual mass beta_i - rho*m_i < rho (the
    atom is dropped when the residual mass vanishes); atoms off the region
    or below rho pass through unchanged.  rho = inf forces a plain (empty)
    factorization.
    """
    if rho not in (1.0, 2.0, 1, 2) and not math.isinf(rho):
        raise ValueError("rho must be 1 (arc measure) or 2 (area measure)")
    if math.isinf(rho) or w.points.size == 0:
        return QFactorization(zeros=(), residual=w, rho=1.0 if math.isinf(rho) else float(rho))
    mask = atoms_on_region(w, regions)
    zeros = []
    new_pts, new_ms = [], []
    for p, beta, on in zip(w.points, w.masses, mask):
        if on and beta >= rho:
            m = _multiplicity(float(beta), float(rho))
            zeros.append((complex(p), m))
            resid = float(beta) - float(rho) * m
            if resid > 1e-15:
                new_pts.append(p)
                new_ms.append(resid)
        else:
            new_pts.append(p)
            new_ms.append(beta)
    residual = AtomicLogWeight(np.asarray(new_pts, complex), np.asarray(new_ms, float), w.smooth)
    return QFactorization(zeros=tuple(zeros), residual=residual, rho=float(rho))


def decompose_q_union(w: AtomicLogWeight, curve_regions, domain_regions,
                      rho_map=None) -> QFactorization:
    """Per-atom factorization for unions: rho = 1 wherever the atom touches a
    curve, rho = 2 for atoms only inside domains (the stricter value wins on
    shared points)."""
    rho_map = rho_map or {"curve": 1.0, "domain": 2.0}
    zeros = []
    new_pts, new_ms = [], []
    for p, beta in zip(w.points, w.masses):
        z = complex(p)
        if any(on_region(z, r) for r in curve_regions):
            rho = float(rho_map["curve"])
        elif any(on_region(z, r) for r in domain_regions):
            rho = float(rho_map["domain"])
        else:
            rho = None
        if rho is not None and beta >= rho:
            m = _multiplicity(float(beta), rho)
            zeros.append((z, m))
            resid = float(beta) - rho * m
            if resid > 1e-15:
                new_pts.append(p)
                new_ms.append(resid)
        else:
            new_pts.append(p)
            new_ms.append(beta)
    residual = AtomicLogWeight(np.asarray(new_pts, complex), np.asarray(new_ms, float), w.smooth)
    # the reconstruction exponent varies per atom here; record rho = 1 so
    # |Q|-based norms use log|Q| directly where all zeros came from curves
    rho = float(rho_map["curve"]) if zeros else 1.0
    return QFactorization(zeros=tuple(zeros), residual=residual, rho=rho)


# ---------------------------------------------------------------------------
# continuous square root of Q along a curve
# ---------------------------------------------------------------------------


def sqrt_q_along(curve: Curve, qf: QFactorization, params, require_nonzero: bool = False):
    """sqrt(Q) at the given curve parameters with a branch continued along
    the curve from its start point (principal square root there).

    The argument of each factor is accumulated between consecutive samples
    and never re-folded, so |result|^2 = prod |z - p_j|^{m_j} exactly while
    the phase stays continuous.  Samples landing exactly on a zero return 0
    (odd multiplicity raises SampleOnZero when nonzero values are required).
    """
    if isinstance(params, (int, np.integer)):
        params = np.linspace(curve.a, curve.b, int(params) + 1)
    params = np.asarray(params, dtype=float)
    pts = np.atleast_1d(curve.point(params))
    return _sqrt_q_at(curve, qf, pts, require_nonzero)


def _sqrt_q_at(curve: Curve, qf: QFactorization, pts: np.ndarray,
               require_nonzero: bool = False, ctx=None) -> np.ndarray:
    """Branch-continued sqrt(Q) at ordered points along the curve; the chain
    is anchored at the curve start so the branch does not depend on the
    sample set.  ctx (a quadrature evaluation context) supplies exact
    sub-epsilon offsets for points anchored at a zero."""
    if not qf.zeros:
        return np.ones(pts.shape, dtype=complex)
    chain = np.concatenate([[curve.start], pts])
    P = qf.points
    M = qf.mults.astype(float)
    diff = chain[:, None] - P[None, :]
    if ctx is not None:
        for j, p in enumerate(P):
            diff[1:, j] = ctx.dz(complex(p), pts)
    on_zero = diff == 0
    log_abs = np.zeros(diff.shape)
    np.log(np.abs(diff), where=~on_zero, out=log_abs)
    # accumulated argument per factor: principal at the anchor, then summed
    # principal increments between consecutive samples
    safe = np.where(on_zero, 1.0, diff)
    inc = np.angle(safe[1:] / safe[:-1])
    args = np.cumsum(np.vstack([np.angle(safe[:1]), inc]), axis=0)
    theta = (M * args).sum(axis=1)
    magnitude = np.exp(0.5 * (M * log_abs).sum(axis=1))
    vals = magnitude * np.exp(0.5j * theta)
    hit = on_zero.any(axis=1)
    if hit.any():
        odd = on_zero[hit] @ (qf.mults % 2 == 1)
        if require_nonzero and odd.any():
            raise SampleOnZero("a sample coincides with an odd-multiplicity zero")
        vals[hit] = 0.0
    return vals[1:]


# ---------------------------------------------------------------------------
# JSON interchange: {"atoms":[{"x":..,"y":..,"beta":..}], "smooth":[c0,c1,c2,c3]}
# ---------------------------------------------------------------------------


def weight_to_json(w: AtomicLogWeight) -> dict:
    return {
        "atoms": [
            {"x": float(p.real), "y": float(p.imag), "beta": float(b)}
            for p, b in zip(w.points, w.masses)
        ],
        "smooth": list(w.smooth),
    }


def weight_from_json(obj: dict) -> AtomicLogWeight:
    atoms = obj.get("atoms", [])
    pts = np.asarray([complex(a["x"], a["y"]) for a in atoms], dtype=complex)
    ms = np.asarray([a["beta"] for a in atoms], dtype=float)
    smooth = tuple(obj.get("smooth", (0.0, 0.0, 0.0, 0.0)))
    return AtomicLogWeight(pts, ms, smooth)

"""Planar curves and domains: Lipschitz graphs, polylines, disks, simple
polygons, and the accumulating-comb arc used by the no-dense-polynomials
experiments.

Curves are piecewise linear.  A graph is parametrized by the abscissa t and
carries the arc element sqrt(1 + slope^2) per segment; a polyline is
parametrized by arc length.  All values are immutable after construction.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import LengthMismatch, NonIncreasingKnots

__all__ = [
    "LipschitzGraph",
    "Polyline",
    "Disk",
    "Polygon",
    "CounterexampleArc",
    "CombBlock",
    "graph_from_knots",
    "flat_graph",
    "arc_length",
    "counterexample_arc",
    "comb_abscissas",
    "curve_to_csv",
    "curve_from_csv",
]


def as_complex(p) -> complex:
    """Coerce a point given as complex or an (x, y) pair."""
    if isinstance(p, complex):
        z = p
    elif isinstance(p, (int, float, np.floating)):
        z = complex(p)
    else:
        x, y = p
        z = complex(x, y)
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise ValueError(f"point has non-finite coordinates: {p!r}")
    return z


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LipschitzGraph:
    """Piecewise-linear graph (t, y(t)) over [knots[0], knots[-1]].

    The Lipschitz constant is the largest segment slope magnitude, so the
    arc element satisfies 1 <= |gamma'(t)| <= sqrt(1 + L^2) everywhere.
    """

    knots: np.ndarray
    values: np.ndarray
    lipschitz: float = field(init=False)

    def __post_init__(self):
        knots = _readonly(np.asarray(self.knots, dtype=float))
        values = _readonly(np.asarray(self.values, dtype=float))
        if knots.ndim != 1 or values.ndim != 1 or knots.size != values.size:
            raise LengthMismatch(
                f"knots ({knots.size}) and values ({values.size}) differ in length"
            )
        if knots.size < 2:
            raise LengthMismatch("a graph needs at least two knots")
        if not np.all(np.diff(knots) > 0):
            raise NonIncreasingKnots("knots must be strictly increasing")
        if not (np.all(np.isfinite(knots)) and np.all(np.isfinite(values))):
            raise ValueError("knots and values must be finite")
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)
        slopes = np.diff(values) / np.diff(knots)
        object.__setattr__(self, "lipschitz", float(np.max(np.abs(slopes))))

    @property
    def a(self) -> float:
        return float(self.knots[0])

    @property
    def b(self) -> float:
        return float(self.knots[-1])

    @property
    def start(self) -> complex:
        return complex(self.knots[0], self.values[0])

    def point(self, t):
        """Curve point(s) at parameter t, as complex numbers."""
        t = np.asarray(t, dtype=float)
        y = np.interp(t, self.knots, self.values)
        return t + 1j * y

    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.knots)

    def speeds(self) -> np.ndarray:
        """|gamma'| on each segment (constant per segment)."""
        return np.sqrt(1.0 + self.slopes() ** 2)

    def segments(self):
        """(param_lo, param_hi, z_lo, z_hi, speed) arrays in traversal order."""
        z = self.knots + 1j * self.values
        return self.knots[:-1], self.knots[1:], z[:-1], z[1:], self.speeds()

    def restrict(self, a: float, b: float) -> "LipschitzGraph":
        """Sub-graph over [a, b] inside the parameter range."""
        if not (self.a - 1e-12 <= a < b <= self.b + 1e-12):
            raise ValueError(f"[{a}, {b}] is not inside [{self.a}, {self.b}]")
        a = max(a, self.a)
        b = min(b, self.b)
        inner = self.knots[(self.knots > a) & (self.knots < b)]
        knots = np.concatenate([[a], inner, [b]])
        return LipschitzGraph(knots, np.interp(knots, self.knots, self.values))


@dataclass(frozen=True, eq=False)
class Polyline:
    """Open polygonal arc through the given vertices, parametrized by
    arc length from the first vertex."""

    vertices: np.ndarray  # complex

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=complex)
        if v.ndim != 1 or v.size < 2:
            raise ValueError("a polyline needs at least two vertices")
        if not np.all(np.isfinite(v)):
            raise ValueError("vertices must be finite")
        if np.any(v[1:] == v[:-1]):
            raise ValueError("consecutive vertices must be distinct")
        object.__setattr__(self, "vertices", _readonly(v))

    @property
    def start(self) -> complex:
        return complex(self.vertices[0])

    def segment_lengths(self) -> np.ndarray:
        return np.abs(np.diff(self.vertices))

    def cumlen(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.segment_lengths())])

    @property
    def a(self) -> float:
        return 0.0

    @property
    def b(self) -> float:
        return float(self.cumlen()[-1])

    def point(self, s):
        """Point(s) at arc length s from the start."""
        s = np.asarray(s, dtype=float)
        cl = self.cumlen()
        x = np.interp(s, cl, self.vertices.real)
        y = np.interp(s, cl, self.vertices.imag)
        return x + 1j * y

    def segments(self):
        """(param_lo, param_hi, z_lo, z_hi, speed) in traversal order;
        the parameter is arc length, so speed is identically 1."""
        cl = self.cumlen()
        ones = np.ones(self.vertices.size - 1)
        return cl[:-1], cl[1:], self.vertices[:-1], self.vertices[1:], ones


Curve = LipschitzGraph | Polyline


@dataclass(frozen=True, eq=False)
class Disk:
    center: complex
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_complex(self.center))
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise ValueError("disk radius must be positive and finite")

    def contains(self, z, tol=0.0):
        return np.abs(np.asarray(z) - self.center) <= self.radius + tol

    def area(self) -> float:
        return math.pi * self.radius**2


@dataclass(frozen=True, eq=False)
class Polygon:
    """Simple (non-self-intersecting) closed polygon, vertices in order."""

    vertices: np.ndarray  # complex, no repeated closing vertex

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=complex)
        if v.ndim != 1 or v.size < 3:
            raise ValueError("a polygon needs at least three vertices")
        object.__setattr__(self, "vertices", _readonly(v))
        if abs(self.signed_area()) <= 0:
            raise ValueError("polygon must have positive area")
        if self._self_intersects():
            raise ValueError("polygon must be simple")

    def signed_area(self) -> float:
        v = self.vertices
        x, y = v.real, v.imag
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def area(self) -> float:
        return abs(self.signed_area())

    def _self_intersects(self) -> bool:
        v = self.vertices
        n = v.size
        edges = [(v[i], v[(i + 1) % n]) for i in range(n)]

        def cross(o, a, b):
            return (a - o).real * (b - o).imag - (a - o).imag * (b - o).real

        for i in range(n):
            for j in range(i + 1, n):
                if j == i or (j + 1) % n == i or (i + 1) % n == j:
                    continue  # adjacent edges share a vertex
                a, b = edges[i]
                c, d = edges[j]
                d1, d2 = cross(a, b, c), cross(a, b, d)
                d3, d4 = cross(c, d, a), cross(c, d, b)
                if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)):
                    return True
        return False

    def contains(self, z, tol=0.0):
        """Even-odd containment test (boundary within tol counts as inside)."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        v = self.vertices
        n = v.size
        inside = np.zeros(z.shape, dtype=bool)
        px, py = z.real, z.imag
        for i in range(n):
            a, b = v[i], v[(i + 1) % n]
            cond = (a.imag > py) != (b.imag > py)
            with np.errstate(divide="ignore", invalid="ignore"):
                xint = a.real + (py - a.imag) * (b.real - a.real) / (b.imag - a.imag)
            inside ^= cond & (px < xint)
        if tol > 0:
            for i in range(n):
                inside |= _point_segment_dist(z, v[i], v[(i + 1) % n]) <= tol
        return inside if inside.size > 1 else bool(inside[0])


Domain = Disk | Polygon


def _point_segment_dist(z, a, b):
    """Distances from points z to the segment [a, b]."""
    z = np.asarray(z, dtype=complex)
    d = b - a
    L2 = abs(d) ** 2
    u = ((z - a) * np.conj(d)).real / L2
    u = np.clip(u, 0.0, 1.0)
    return np.abs(z - (a + u * d))


# ---------------------------------------------------------------------------
# constructors and measurements
# ---------------------------------------------------------------------------


def graph_from_knots(knots, values) -> LipschitzGraph:
    """Build a piecewise-linear graph; the Lipschitz constant is the largest
    segment slope magnitude."""
    return LipschitzGraph(np.asarray(knots, float), np.asarray(values, float))


def flat_graph(a: float, b: float, height: float = 0.0) -> LipschitzGraph:
    return graph_from_knots([a, b], [height, height])


def arc_length(curve: Curve) -> float:
    """Total length: sum of segment lengths."""
    if isinstance(curve, LipschitzGraph):
        dx = np.diff(curve.knots)
        dy = np.diff(curve.values)
        return float(np.sum(np.hypot(dx, dy)))
    return float(np.sum(curve.segment_lengths()))


# ---------------------------------------------------------------------------
# the accumulating-comb arc
# ---------------------------------------------------------------------------
#
# Block n lives over [b_{n+1}, b_n] with b_n - b_{n+1} = 1/(n^2((n+1)^3 - 1)).
# Inside it the comb abscissas b_n^k = b_{n+1} + (c_n / k)^(1/(1-a_{n+1}))
# carry vertical teeth of height b_n^k - b_{n+1}; tooth tops lie on the line
# y = x - b_{n+1} and are joined alternately along that line and along the
# axis.  The atom masses are a_n = 1/n^3.


@dataclass(frozen=True, eq=False)
class CombBlock:
    index: int
    b_hi: float  # b_n
    b_lo: float  # b_{n+1}
    c: float  # c_n
    teeth_x: np.ndarray  # b_n^k for k = 1..K
    tail_length: float  # vertical length dropped by truncating at K
    connector: str = "tops-on-line, feet-on-axis"

    def heights(self) -> np.ndarray:
        return self.teeth_x - self.b_lo


@dataclass(frozen=True, eq=False)
class CounterexampleArc:
    polyline: Polyline
    atoms: tuple  # ((b_n, alpha_n), ...) for n = 1..N+1
    blocks: tuple  # CombBlock per n = 1..N
    N: int
    K: int


def _delta(n: int) -> float:
    return 1.0 / (n * n * ((n + 1) ** 3 - 1))


def _alpha(n: int) -> float:
    return 1.0 / n**3


def _tooth_exponent(n: int) -> float:
    # 1/(1 - alpha_{n+1}) = (n+1)^3 / ((n+1)^3 - 1)
    m = (n + 1) ** 3
    return m / (m - 1.0)


def b_sequence(N: int, tail_terms: int = 2_000_000) -> np.ndarray:
    """b_1..b_{N+1}; b_{N+1} summed as a series tail, the rest by exact
    increments so b_n - b_{n+1} is exact in floating point."""
    n0 = N + 1
    k = np.arange(n0, n0 + tail_terms, dtype=float)
    terms = 1.0 / (k * k * ((k + 1.0) ** 3 - 1.0))
    tail = math.fsum(terms[::-1].tolist())
    b = np.empty(N + 1)
    b[N] = tail
    for n in range(N, 0, -1):
        b[n - 1] = b[n] + _delta(n)
    return b


def comb_abscissas(n: int, K: int, b_lo: float) -> np.ndarray:
    """b_n^k for k = 1..K: strictly decreasing toward b_{n+1}."""
    k = np.arange(1, K + 1, dtype=float)
    return b_lo + _delta(n) * k ** (-_tooth_exponent(n))


def counterexample_arc(N: int, K: int, tail_terms: int = 2_000_000) -> CounterexampleArc:
    """Build the truncated comb arc with N blocks of K teeth each.

    Within block n the traversal runs from b_n toward b_{n+1}: up the first
    tooth, along the diagonal y = x - b_{n+1} to the next tooth top, down,
    along the axis to the following tooth foot, and so on; after tooth K the
    path closes straight to (b_{n+1}, 0), which is where block n+1 begins.
    """
    if N < 1 or K < 1:
        raise ValueError("N and K must be >= 1")
    b = b_sequence(N, tail_terms=tail_terms)
    blocks = []
    verts = []
    for n in range(1, N + 1):
        b_hi, b_lo = b[n - 1], b[n]
        x = comb_abscissas(n, K, b_lo)
        h = x - b_lo
        # traversal: alternately tooth top (diagonal hop) and tooth foot (axis hop)
        block_pts = np.empty(2 * K, dtype=complex)
        block_pts[0::2] = x + 1j * np.where(np.arange(K) % 2 == 0, 0.0, h)
        block_pts[1::2] = x + 1j * np.where(np.arange(K) % 2 == 0, h, 0.0)
        verts.append(block_pts)
        verts.append(np.array([complex(b_lo, 0.0)]))
        e = _tooth_exponent(n)
        tail_len = _delta(n) * (K ** (1.0 - e)) / (e - 1.0)
        c_n = _delta(n) ** (1.0 / e)
        blocks.append(
            CombBlock(index=n, b_hi=float(b_hi), b_lo=float(b_lo), c=float(c_n),
                      teeth_x=_readonly(x), tail_length=float(tail_len))
        )
    vertices = np.concatenate(verts)
    # consecutive duplicates can appear where a closure lands on the next block
    keep = np.concatenate([[True], np.abs(np.diff(vertices)) > 0])
    atoms = tuple((float(b[n - 1]), _alpha(n)) for n in range(1, N + 2))
    return CounterexampleArc(
        polyline=Polyline(vertices[keep]),
        atoms=atoms,
        blocks=tuple(blocks),
        N=N,
        K=K,
    )


# ---------------------------------------------------------------------------
# CSV interchange: `t,x,y` for graphs, `x,y` for polylines
# ---------------------------------------------------------------------------

_FMT = "%.17g"


def curve_to_csv(curve: Curve) -> str:
    buf = io.StringIO()
    if isinstance(curve, LipschitzGraph):
        buf.write("t,x,y\n")
        for t, y in zip(curve.knots, curve.values):
            buf.write(f"{t:.17g},{t:.17g},{y:.17g}\n")
    else:
        buf.write("x,y\n")
        for z in curve.vertices:
            buf.write(f"{z.real:.17g},{z.imag:.17g}\n")
    return buf.getvalue()


def curve_from_csv(text: str) -> Curve:
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    header = lines[0].lower().replace(" ", "")
    rows = [[float(c) for c in ln.split(",")] for ln in lines[1:]]
    data = np.asarray(rows, dtype=float)
    if header == "t,x,y":
        return LipschitzGraph(data[:, 0], data[:, 2])
    if header == "x,y":
        return Polyline(data[:, 0] + 1j * data[:, 1])
    raise ValueError(f"unrecognized curve CSV header: {lines[0]!r}")

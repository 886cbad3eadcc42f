"""Independent oracles used by the test suite.

Everything here deliberately avoids the package's Gauss-Legendre path:
graded trapezoid rules, dense-grid normal-equation solves in extended
precision, and closed-form/series references.
"""

import numpy as np


def graded_trapezoid_curve(curve_pts, speed_fn, weight_fn, g_fn, centers,
                           a, b, n_total=1_000_000, power=None, betas=None):
    """Trapezoid rule on [a, b] with power-law clustering toward each center.

    curve_pts(t) -> complex points; speed_fn(t) -> |gamma'|;
    weight_fn(dists...) style is left to the caller: weight_fn(t) must
    return e^{-phi(gamma(t))} evaluated *stably* (the caller supplies exact
    offset arithmetic); g_fn(t) the integrand profile.
    """
    centers = sorted(centers)
    cuts = [a] + [0.5 * (c1 + c2) for c1, c2 in zip(centers[:-1], centers[1:])] + [b]
    pieces = []
    n_side = max(n_total // (2 * len(centers)), 1000)
    for c, lo, hi in zip(centers, cuts[:-1], cuts[1:]):
        for s, sign in ((c - lo, -1.0), (hi - c, 1.0)):
            if s <= 0:
                continue
            q = power if power is not None else max(4.0, 3.0 / max(1.0 - max(betas or [0.0]), 0.05))
            v = np.linspace(0.0, 1.0, n_side + 1)
            dt = sign * s * v**q  # offsets from the center, exact near 0
            jac = s * q * v ** (q - 1.0) / n_side
            vals = g_fn(c, dt) * weight_fn(c, dt) * speed_fn(c + dt)
            # trapezoid in v
            piece = np.sum((vals[1:] + vals[:-1]) * 0.5 * 0.5 * (jac[1:] + jac[:-1]))
            pieces.append(piece)
    return float(np.sum(pieces))


def graph_single_atom_oracle(knots, values, t_star, beta, n_total=1_000_000):
    """int |gamma(t) - gamma(t*)|^{-beta} ds over a piecewise-linear graph
    with the atom at the on-curve point gamma(t*), by graded trapezoid.

    Offsets from t_star are kept symbolic (dt = s * v^q) so distances stay
    exact far below float granularity of the absolute parameter; within the
    segment adjacent to t_star the exact form |dt| sqrt(1+m^2) is used.
    """
    knots = np.asarray(knots, float)
    values = np.asarray(values, float)
    slopes = np.diff(values) / np.diff(knots)
    y_star = float(np.interp(t_star, knots, values))

    def seg_index(t):
        return np.clip(np.searchsorted(knots, t, side="right") - 1, 0, slopes.size - 1)

    q = max(4.0, 3.0 / max(1.0 - beta, 0.05))
    n_side = n_total // 2
    v = np.linspace(0.0, 1.0, n_side + 1)
    total = 0.0
    for side_sign, extent in ((-1.0, t_star - knots[0]), (1.0, knots[-1] - t_star)):
        if extent <= 0:
            continue
        dt = side_sign * extent * v**q
        t = np.clip(t_star + dt, knots[0], knots[-1])
        # slope of the segment adjacent to t_star on this side
        probe = t_star + side_sign * min(extent, 1e-9) * 0.5
        m_side = float(slopes[seg_index(np.asarray([probe]))[0]])
        # extent of that adjacent segment measured from t_star
        kn = knots[knots < t_star] if side_sign < 0 else knots[knots > t_star]
        adj = (t_star - kn.max()) if (side_sign < 0 and kn.size) else \
              (kn.min() - t_star) if kn.size else extent
        near = np.abs(dt) <= adj + 1e-300
        y = np.interp(t, knots, values)
        dist = np.hypot(t - t_star, y - y_star)
        dist = np.where(near, np.abs(dt) * np.hypot(1.0, m_side), dist)
        speed = np.hypot(1.0, slopes[seg_index(t)])
        speed = np.where(near, np.hypot(1.0, m_side), speed)
        with np.errstate(divide="ignore"):
            vals = dist ** (-beta) * speed
        vals[0] = 0.0  # zero Jacobian at v = 0 (q > 1)
        jac = extent * q * v ** (q - 1.0)
        total += float(np.trapezoid(vals * jac, dx=1.0 / n_side))
    return total


def dense_ls_residual(z, Wq, fvals, degree, center=None, scale=None):
    """Weighted least-squares residual norm on a dense grid via normal
    equations in extended precision."""
    z = np.asarray(z, complex)
    Wl = np.asarray(Wq, np.longdouble)
    if center is None:
        center = complex(z.mean())
    if scale is None:
        scale = float(np.abs(z - center).max())
    X = (z - center) / scale
    V = np.vander(X, degree + 1, increasing=True)
    Vr = V.real.astype(np.longdouble)
    Vi = V.imag.astype(np.longdouble)
    fr = np.asarray(fvals, complex)
    # complex normal equations assembled in longdouble via real/imag parts
    def cdot(Ar, Ai, Br, Bi):
        re = (Ar * Wl) @ Br.T + (Ai * Wl) @ Bi.T
        im = (Ar * Wl) @ Bi.T - (Ai * Wl) @ Br.T
        return re, im

    Gr, Gi = cdot(Vr.T, Vi.T, Vr.T, Vi.T)
    br_, bi_ = ((Vr.T * Wl) @ fr.real.astype(np.longdouble) + (Vi.T * Wl) @ fr.imag.astype(np.longdouble),
                (Vr.T * Wl) @ fr.imag.astype(np.longdouble) - (Vi.T * Wl) @ fr.real.astype(np.longdouble))
    G = (Gr + 1j * Gi).astype(complex)
    rhs = (br_ + 1j * bi_).astype(complex)
    coef = np.linalg.solve(G, rhs)
    r = fr - V @ coef
    return float(np.sqrt(np.sum(np.abs(r) ** 2 * np.asarray(Wq))))


def comb_b1_series(n_terms=1_000_000):
    """b_1 as the extended-precision partial series sum."""
    k = np.arange(1, n_terms + 1, dtype=np.longdouble)
    terms = 1.0 / (k * k * ((k + 1.0) ** 3 - 1.0))
    return float(terms[::-1].sum())


def comb_length_series(N, K):
    """Arc length of the truncated comb from the per-segment series in
    extended precision: vertical heights + diagonal/axis connectors +
    closure, block by block."""
    b = [np.longdouble(0.0)] * (N + 2)
    k = np.arange(N + 1, N + 1 + 2_000_000, dtype=np.longdouble)
    b[N + 1] = (1.0 / (k * k * ((k + 1.0) ** 3 - 1.0)))[::-1].sum()
    for n in range(N, 0, -1):
        b[n] = b[n + 1] + np.longdouble(1.0) / (n * n * ((n + 1) ** 3 - 1))
    total = np.longdouble(0.0)
    for n in range(1, N + 1):
        e = np.longdouble((n + 1) ** 3) / ((n + 1) ** 3 - 1)
        delta = np.longdouble(1.0) / (n * n * ((n + 1) ** 3 - 1))
        kk = np.arange(1, K + 1, dtype=np.longdouble)
        h = delta * kk ** (-e)
        x = b[n + 1] + h
        total += h.sum()  # verticals
        # connectors: tooth 2l+1 top -> 2l+2 top (diagonal, sqrt2 * dx) and
        # tooth 2l feet -> 2l+1 feet (axis, dx)
        dx = x[:-1] - x[1:]
        total += np.sqrt(np.longdouble(2.0)) * dx[0::2].sum()
        total += dx[1::2].sum()
        # closure from the last tooth to (b_{n+1}, 0)
        if K % 2 == 1:
            total += np.sqrt(np.longdouble(2.0)) * h[-1]
        else:
            total += h[-1]  # foot at x_K, axis run of length x_K - b_{n+1}
    return float(total)


def disk_radial_oracle(beta, R=1.0, n=2_000_000):
    """int over the disk of |z|^{-beta} dA by the exact radial closed form
    evaluated as a reference (2 pi R^{2-beta} / (2-beta))."""
    return 2.0 * np.pi * R ** (2.0 - beta) / (2.0 - beta)

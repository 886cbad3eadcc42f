"""Reproducible experiment front-end: JSON configs in, JSON report plus CSV
curves (and rendered figures) out.

Every command echoes its configuration byte-for-byte, stamps the library
version and a determinism hash (SHA-256 over all emitted numeric payloads at
17 significant digits), and maps failures to the exit-code contract:
0 success, 2 config error, 3 numerical failure (a divergent norm outside the
dichotomy commands), 4 unmet segment budgets.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .errors import ConfigError, DivergentNorm, ML2Error
from .geometry import (CounterexampleArc, Disk, LipschitzGraph, Polygon,
                       Polyline, arc_length, counterexample_arc,
                       curve_from_csv, graph_from_knots)
from .quadrature import (abs2, integrate_curve_multi, integrate_region, one,
                         outcome_to_json, poly_integrand, segment_values)
from .approx import (best_poly, carleman_window, clamp_target, density_curve,
                     mergelyan_union, peak_modify, poly_to_json, sqrt_q_approx,
                     target_abs_power, target_cos, target_exp, target_poly,
                     target_profile, target_vanishing_step)
from .weights import (AtomicLogWeight, decompose_q, lelong_at,
                      lelong_kiselman, weight_from_json, zero_weight)

__all__ = ["run", "counterexample_suite", "RunReport", "COMMANDS"]

COMMANDS = ("integrate", "dichotomy", "lelong", "density", "sqrtq", "peak",
            "mergelyan", "carleman", "counterexample", "verify-bounds")

FMT = "%.17g"


def _fmt(x) -> str:
    if isinstance(x, complex):
        return f"{FMT % x.real},{FMT % x.imag}"
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return FMT % float(x)


class _Payload:
    """Ordered numeric payload; its canonical text is the determinism hash
    input."""

    def __init__(self):
        self.lines = []

    def add(self, label: str, *values):
        self.lines.append(label + ":" + ",".join(_fmt(v) for v in values))

    def hash(self) -> str:
        text = "\n".join(self.lines)
        return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class RunReport:
    command: str
    config_echo: str
    outcomes: dict
    curves: list  # (name, header, rows [list of tuples])
    wall_clock: float = 0.0
    version: str = __version__
    determinism_hash: str = ""
    exit_code: int = 0
    threads: int | None = None

    def to_json(self) -> dict:
        return {
            "command": self.command,
            "config": self.config_echo,
            "outcomes": self.outcomes,
            "wall_clock_sec": self.wall_clock,
            "version": self.version,
            "ml2_threads": self.threads,
            "determinism_hash": self.determinism_hash,
        }


def thread_cap() -> int:
    """Parallelism cap from ML2_THREADS (default: machine parallelism).
    Results are invariant to its value by the deterministic reduction
    contract; it only bounds worker counts."""
    raw = os.environ.get("ML2_THREADS", "")
    try:
        n = int(raw)
        if n >= 1:
            return n
    except ValueError:
        pass
    return os.cpu_count() or 1


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _point(v) -> complex:
    _require(isinstance(v, (list, tuple)) and len(v) == 2, f"expected [x, y], got {v!r}")
    return complex(float(v[0]), float(v[1]))


def parse_geometry(spec: dict):
    _require(isinstance(spec, dict) and "type" in spec, "geometry needs a 'type'")
    kind = spec["type"]
    try:
        if kind == "graph":
            return graph_from_knots(spec["knots"], spec["values"])
        if kind == "flat":
            return graph_from_knots([spec["a"], spec["b"]],
                                    [spec.get("height", 0.0)] * 2)
        if kind == "polyline":
            return Polyline(np.asarray([_point(v) for v in spec["vertices"]]))
        if kind == "disk":
            return Disk(_point(spec["center"]), float(spec["radius"]))
        if kind == "polygon":
            return Polygon(np.asarray([_point(v) for v in spec["vertices"]]))
        if kind == "counterexample":
            return counterexample_arc(int(spec["N"]), int(spec["K"]))
        if kind == "csv":
            with open(spec["path"]) as fh:
                return curve_from_csv(fh.read())
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad geometry spec {spec!r}: {exc}") from exc
    raise ConfigError(f"unknown geometry type {kind!r}")


def parse_weight(spec) -> AtomicLogWeight:
    if spec is None:
        return zero_weight()
    try:
        return weight_from_json(spec)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad weight spec {spec!r}: {exc}") from exc


def parse_target(spec):
    if spec is None:
        return target_poly([1.0])
    _require(isinstance(spec, dict) and "type" in spec, "target needs a 'type'")
    kind = spec["type"]
    try:
        if kind == "poly":
            coeffs = [complex(c[0], c[1]) if isinstance(c, (list, tuple)) else complex(c)
                      for c in spec["coeffs"]]
            center = _point(spec["center"]) if "center" in spec else 0.0
            f = target_poly(coeffs, center=center, scale=spec.get("scale", 1.0))
        elif kind == "exp":
            f = target_exp()
        elif kind == "cos":
            f = target_cos()
        elif kind == "abs_power":
            f = target_abs_power(float(spec["center"]), float(spec["power"]))
        elif kind == "step":
            level = float(spec.get("level", 1.0))
            amp = float(spec["amp"])
            cut = float(spec["cut"])
            f = target_profile(lambda t: level + amp * (t > cut))
        elif kind == "vanishing_step":
            f = target_vanishing_step(_point(spec["point"]), float(spec["amp"]),
                                      float(spec["cut"]))
        else:
            raise ConfigError(f"unknown target type {kind!r}")
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad target spec {spec!r}: {exc}") from exc
    if "clamp" in spec:
        f = clamp_target(f, float(spec["clamp"]))
    return f


def _options(cfg: dict) -> dict:
    opts = cfg.get("options", {})
    _require(isinstance(opts, dict), "'options' must be an object")
    tol = float(opts.get("tol", 1e-6))
    max_depth = int(opts.get("max_depth", 512))
    _require(tol > 0, "tol must be positive")
    _require(max_depth >= 4, "max_depth must be >= 4")
    return {**opts, "tol": tol, "max_depth": max_depth}


# ---------------------------------------------------------------------------
# command implementations; each returns (outcomes dict, curves list)
# ---------------------------------------------------------------------------


def _cmd_integrate(cfg, opts, payload):
    region = parse_geometry(cfg["geometry"])
    if isinstance(region, CounterexampleArc):
        region = region.polyline
    w = parse_weight(cfg.get("weight"))
    g = parse_target(cfg.get("target"))
    if bool(opts.get("squared", False)):
        g = abs2(g)
    out = integrate_region(region, g, w, tol=opts["tol"], max_depth=opts["max_depth"])
    payload.add("integrate.value", out.value)
    payload.add("integrate.status", out.status == "Converged")
    rows = [(d, v.real if isinstance(v, complex) else v) for d, v in out.refinement_trace]
    for d, v in rows:
        payload.add("integrate.trace", d, v)
    return {"integral": outcome_to_json(out)}, [("trace", "depth,value", rows)]


def _cmd_dichotomy(cfg, opts, payload):
    region = parse_geometry(cfg["geometry"])
    point = _point(cfg.get("point", [0.0, 0.0]))
    masses = cfg.get("masses")
    _require(isinstance(masses, list) and masses, "'masses' must be a nonempty list")
    results = {}
    curves = []
    for i, beta in enumerate(masses):
        w = AtomicLogWeight(np.asarray([point]), np.asarray([float(beta)]))
        out = integrate_region(region, one, w, tol=opts["tol"], max_depth=opts["max_depth"])
        results[f"beta={beta}"] = outcome_to_json(out)
        payload.add(f"dichotomy.{i}.status", out.status == "Diverged")
        payload.add(f"dichotomy.{i}.value", out.value)
        rows = [(d, v.real if isinstance(v, complex) else v) for d, v in out.refinement_trace]
        curves.append((f"trace_beta_{i}", "depth,value", rows))
    return {"dichotomy": results}, curves


def _cmd_lelong(cfg, opts, payload):
    w = parse_weight(cfg.get("weight"))
    point = _point(cfg["point"])
    radii = cfg.get("radii") or [10.0 ** (-k) for k in range(1, 7)]
    samples = int(opts.get("samples_per_circle", 256))
    est = lelong_kiselman(w, point, np.asarray(radii, float), samples)
    atomic = lelong_at(w, point)
    payload.add("lelong.value", est.value)
    payload.add("lelong.atomic", atomic)
    rows = [(r, ratio) for r, ratio in est.ratios]
    for r, ratio in rows:
        payload.add("lelong.ratio", r, ratio)
    return ({"kiselman": est.value, "atomic": atomic,
             "ratios": [[r, v] for r, v in rows]},
            [("ratios", "radius,ratio", rows)])


def _regions_of(cfg):
    spec = cfg["geometry"]
    specs = spec if isinstance(spec, list) else [spec]
    out = []
    for s in specs:
        r = parse_geometry(s)
        out.append(r.polyline if isinstance(r, CounterexampleArc) else r)
    return out


def _cmd_density(cfg, opts, payload):
    regions = _regions_of(cfg)
    w = parse_weight(cfg.get("weight"))
    f = parse_target(cfg.get("target"))
    degrees = opts.get("degrees")
    _require(isinstance(degrees, list) and degrees, "'options.degrees' required")
    rho = float(opts.get("rho", 1.0))
    curve = density_curve(f, regions, w, [int(d) for d in degrees], rho)
    for d, r in curve:
        payload.add("density", d, r)
    return ({"density": [[d, r] for d, r in curve]},
            [("density", "degree,residual", curve)])


def _cmd_sqrtq(cfg, opts, payload):
    regions = _regions_of(cfg)
    w = parse_weight(cfg.get("weight"))
    rho = float(opts.get("rho", 1.0))
    degree = int(opts.get("degree", 12))
    delta = float(opts.get("delta", 0.05))
    qf = decompose_q(w, regions, rho)
    fit = sqrt_q_approx(regions, w, qf, degree, delta)
    payload.add("sqrtq.residual", fit.residual_norm)
    return {"fit": poly_to_json(fit)}, []


def _cmd_peak(cfg, opts, payload):
    domain = parse_geometry(cfg["geometry"])
    _require(isinstance(domain, (Disk, Polygon)), "peak needs a domain")
    w = parse_weight(cfg.get("weight"))
    P = parse_target(cfg.get("target"))
    p = _point(cfg["p"])
    q = _point(cfg["q"])
    ns = [int(n) for n in opts.get("n", [10, 20])]
    rows = []
    values = {}
    for n in ns:
        _, diff, at_p = peak_modify(P, p, q, n, domain, w)
        rows.append((n, diff))
        values[str(n)] = {"norm_diff": diff, "value_at_p": [at_p.real, at_p.imag]}
        payload.add("peak", n, diff, at_p)
    return {"peak": values}, [("peak", "n,norm_diff", rows)]


def _cmd_mergelyan(cfg, opts, payload):
    comps_spec = cfg.get("components")
    _require(isinstance(comps_spec, list) and comps_spec, "'components' required")
    comps = [(parse_geometry(c["geometry"]), parse_target(c.get("target")))
             for c in comps_spec]
    w = parse_weight(cfg.get("weight"))
    degrees = [int(d) for d in opts.get("degrees", [5, 20])]
    rows = []
    for d in degrees:
        fit = mergelyan_union(comps, w, d)
        rows.append((d, fit.residual_norm))
        payload.add("mergelyan", d, fit.residual_norm)
    return {"residuals": [[d, r] for d, r in rows]}, [("density", "degree,residual", rows)]


def _cmd_carleman(cfg, opts, payload):
    graph = parse_geometry(cfg["geometry"])
    _require(isinstance(graph, LipschitzGraph), "carleman needs a graph window")
    w = parse_weight(cfg.get("weight"))
    f = parse_target(cfg.get("target"))
    budgets_spec = cfg.get("budgets")
    _require(isinstance(budgets_spec, dict) and budgets_spec, "'budgets' required")
    budgets = {int(k): float(v) for k, v in budgets_spec.items()}
    cap = int(opts.get("degree_cap", 64))
    glue = bool(opts.get("glue", True))
    rep = carleman_window(graph, f, budgets, w, cap, glue=glue)
    rows = [(s.index, s.budget, s.achieved, 1 if s.met else 0) for s in rep.segments]
    for r in rows:
        payload.add("carleman.segment", *r)
    payload.add("carleman.all_met", rep.all_met)
    payload.add("carleman.degree", rep.degree_used)
    return {"carleman": rep.to_json()}, [("segments", "segment,budget,achieved,met", rows)]


def _cmd_verify_bounds(cfg, opts, payload):
    from .quadrature import integrate_curve, verify_lemma27

    count = int(opts.get("count", 50))
    seed = int(opts.get("seed", 20240801))
    rng = np.random.default_rng(seed)
    rows = []
    ok_all = True
    for i in range(count):
        m = int(rng.integers(2, 7))
        knots = np.sort(rng.uniform(-1.5, 1.5, m + 1))
        while np.min(np.diff(knots)) < 1e-3:
            knots = np.sort(rng.uniform(-1.5, 1.5, m + 1))
        L = rng.uniform(0.0, 5.0)
        values = np.concatenate([[0.0], np.cumsum(rng.uniform(-L, L, m) * np.diff(knots))])
        graph = graph_from_knots(knots, values)
        z0 = complex(rng.uniform(-2, 2), rng.uniform(-2, 2))
        beta = float(rng.uniform(0.05, 0.95))
        value, bound, ok = verify_lemma27(graph, z0, beta)
        ok_all &= ok
        rows.append((i, value, bound, 1 if ok else 0))
        payload.add("lemma27", i, value, bound, ok)
    sandwich = []
    for a in (0.1, 1.0):
        for alpha in (0.3, 0.7):
            seg = Polyline(np.asarray([complex(a, -a), complex(a, a)]))
            w = AtomicLogWeight(np.asarray([0j]), np.asarray([alpha]))
            out = integrate_curve(seg, one, w, tol=opts["tol"])
            lo = 2.0 / math.sqrt(2.0) ** alpha * a ** (1 - alpha)
            hi = 2.0 * a ** (1 - alpha)
            good = bool(out.converged and lo - 1e-9 <= out.value <= hi + 1e-9)
            ok_all &= good
            sandwich.append({"a": a, "alpha": alpha, "value": float(out.value),
                             "low": lo, "high": hi, "ok": good})
            payload.add("sandwich", a, alpha, out.value, good)
    return ({"lemma27_all_ok": bool(ok_all),
             "sandwich": sandwich},
            [("bounds", "case,value,bound,ok", rows)])


def counterexample_suite(N: int, K_list, tol: float = 1e-6,
                         seg_depth: int = 48, payload: _Payload | None = None):
    """Truncation study of the comb arc.

    For each K: the arc length; the block-1 lower-bound partial sums
    S_K = sum_k int over tooth k of |z - b_2|^{-alpha_2} ds; then a fit of
    S_K against ln K, and divergence verdicts for the monomials 1, z, z^2
    (scaled) against the full weight.
    """
    if N < 2:
        raise ConfigError("N must be >= 2")
    K_list = [int(k) for k in K_list]
    if any(k2 <= k1 for k1, k2 in zip(K_list[:-1], K_list[1:])):
        raise ConfigError("K_list must be strictly increasing")
    payload = payload if payload is not None else _Payload()
    K_max = K_list[-1]
    arc_max = counterexample_arc(N, K_max)
    b2, a2 = arc_max.atoms[1]
    atom_pts = np.asarray([complex(b, 0.0) for b, _ in arc_max.atoms])
    atom_ms = np.asarray([a for _, a in arc_max.atoms])
    full_w = AtomicLogWeight(atom_pts, atom_ms,
                             smooth=(-math.log(2.0) * float(atom_ms.sum()), 0, 0, 0))
    w_b2 = AtomicLogWeight(np.asarray([complex(b2, 0.0)]), np.asarray([a2]))

    # per-tooth integrals of the single-atom lower-bound integrand (block 1)
    tooth_vals = segment_values(arc_max.polyline, one, w_b2, depth=seg_depth)
    tooth = tooth_vals[2 * np.arange(K_max)].real
    S_cum = np.cumsum(tooth)

    lengths = []
    monomial_status = []
    center = complex(atom_pts.mean())
    scale = float(np.abs(arc_max.polyline.vertices - center).max())
    monos = [abs2(poly_integrand([0.0] * k + [1.0], center=center, scale=scale))
             for k in range(3)]
    for K in K_list:
        arc = arc_max if K == K_max else counterexample_arc(N, K)
        L = arc_length(arc.polyline)
        lengths.append(L)
        payload.add("suite.length", K, L)
        outs = integrate_curve_multi(arc.polyline, monos, full_w, tol=tol)
        monomial_status.append([o.status for o in outs])
        for j, o in enumerate(outs):
            payload.add("suite.monomial", K, j, o.status == "Diverged", o.value)
    S_K = [float(S_cum[K - 1]) for K in K_list]
    for K, s in zip(K_list, S_K):
        payload.add("suite.S", K, s)
    slope = float(np.polyfit(np.log(K_list), S_K, 1)[0])
    payload.add("suite.slope", slope)

    # oracle constant: lim k * I_k = c_1 * int_0^1 (1+u^2)^{-a2/2} du
    c1 = arc_max.blocks[0].c
    u = np.linspace(0.0, 1.0, 200001)
    J = float(np.trapezoid((1.0 + u * u) ** (-a2 / 2.0), dx=1.0 / 200000))
    slope_expected = c1 * J
    payload.add("suite.slope_expected", slope_expected)

    cauchy = abs(lengths[-1] - lengths[-2]) / max(abs(lengths[-1]), 1e-300) if len(lengths) > 1 else 0.0
    asserts = {
        "length_cauchy_1pct": bool(cauchy <= 0.01),
        "length_cauchy_rel": cauchy,
        "slope_within_15pct": bool(abs(slope - slope_expected) <= 0.15 * slope_expected),
        "monomials_diverged_at_K_max": bool(all(s == "Diverged" for s in monomial_status[-1])),
    }
    payload.add("suite.cauchy", cauchy, asserts["length_cauchy_1pct"])
    outcomes = {
        "N": N,
        "K_list": K_list,
        "lengths": lengths,
        "S_K": S_K,
        "slope": slope,
        "slope_expected": slope_expected,
        "monomial_status": monomial_status,
        "block_tails": [b.tail_length for b in arc_max.blocks],
        "asserts": asserts,
    }
    curves = [
        ("lengths", "K,length", list(zip(K_list, lengths))),
        ("sk", "K,S", list(zip(K_list, S_K))),
    ]
    return outcomes, curves, arc_max


def _cmd_counterexample(cfg, opts, payload):
    N = int(cfg.get("N", 6))
    K_list = [int(k) for k in cfg.get("K_list", [10, 100, 1000, 10000])]
    outcomes, curves, arc = counterexample_suite(N, K_list, tol=opts["tol"],
                                                 payload=payload)
    return {"counterexample": outcomes, "_arc": arc}, curves


_DISPATCH = {
    "integrate": _cmd_integrate,
    "dichotomy": _cmd_dichotomy,
    "lelong": _cmd_lelong,
    "density": _cmd_density,
    "sqrtq": _cmd_sqrtq,
    "peak": _cmd_peak,
    "mergelyan": _cmd_mergelyan,
    "carleman": _cmd_carleman,
    "counterexample": _cmd_counterexample,
    "verify-bounds": _cmd_verify_bounds,
}


# ---------------------------------------------------------------------------
# runner
# ---------------------------------------------------------------------------


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def run(config_text: str, out_dir: str | None = None,
        command: str | None = None, write_plots: bool = True) -> RunReport:
    """Execute one scenario from raw JSON text.  Writes report.json and the
    curve CSVs (plus rendered figures) under out_dir when given."""
    t0 = time.perf_counter()
    try:
        cfg = json.loads(config_text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON config: {exc}") from exc
    _require(isinstance(cfg, dict), "config must be a JSON object")
    cmd = cfg.get("command", command)
    _require(cmd is not None, "no command given (config 'command' or CLI)")
    _require(cmd in COMMANDS, f"unknown command {cmd!r}")
    if command is not None and cfg.get("command") is not None:
        _require(cfg["command"] == command,
                 f"config command {cfg['command']!r} != CLI command {command!r}")
    opts = _options(cfg)
    payload = _Payload()
    exit_code = 0
    arc = None
    try:
        outcomes, curves = _DISPATCH[cmd](cfg, opts, payload)
        arc = outcomes.pop("_arc", None)
    except DivergentNorm as exc:
        if cmd in ("dichotomy", "counterexample"):
            raise  # dichotomy commands report divergence, never fail on it
        outcomes, curves = {"error": {"type": "DivergentNorm", "message": str(exc)}}, []
        exit_code = 3
    if cmd == "carleman" and exit_code == 0:
        if not outcomes["carleman"]["all_met"]:
            exit_code = 4
    report = RunReport(
        command=cmd,
        config_echo=config_text,
        outcomes=outcomes,
        curves=curves,
        wall_clock=time.perf_counter() - t0,
        determinism_hash=payload.hash(),
        exit_code=exit_code,
        threads=thread_cap(),
    )
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        csv_paths = []
        for name, header, rows in curves:
            path = os.path.join(out_dir, f"{name}.csv")
            _write_csv(path, header, rows)
            csv_paths.append(path)
        with open(os.path.join(out_dir, "report.json"), "w") as fh:
            json.dump(report.to_json(), fh, indent=2)
            fh.write("\n")
        if write_plots:
            from . import plots

            plots.render_report(out_dir, report, arc=arc)
    return report

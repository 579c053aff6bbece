"""Discrete and integral functionals controlling the operator norm and its
Schatten sums: the three nu variants per orbit cell, the mu products over the
refinement, the integral upper-bound functionals for both exponent regimes,
the linear-family criterion, and compensated Schatten sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .funcs import integrate_power
from .grids import GridCell
from .problem import Problem

__all__ = [
    "NuCell",
    "nu_variants",
    "mu_values",
    "holder_subdivision_check",
    "FunctionalValue",
    "functional_V",
    "functional_W",
    "example_F",
    "schatten_sum",
    "TailEstimate",
    "nu_tilde_tail",
    "FunctionalReport",
    "build_report",
]

_GOLD = (math.sqrt(5.0) - 1.0) / 2.0
_EDGE_INSET = 1e-9


# ---------------------------------------------------------------------------
# nu variants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NuCell:
    k: int
    nu_tilde: float
    nu_bar: float
    nu: float
    arg_bar: float
    arg: float
    sup_gap: float  # spread of the two best samples: sampling-error estimate


def _nu_exact(problem: Problem, t: float, clip: tuple[float, float] | None) -> float:
    """One exact evaluation of the nu integrand at t (optionally clipping the
    w-integral to the cell)."""
    s = problem.fairway.sigma(t)
    xl = float(problem.boundaries.b.inverse(s))
    xr = float(problem.boundaries.a.inverse(s))
    if clip is not None:
        xl, xr = max(xl, clip[0]), min(xr, clip[1])
    wmass = problem.wcum.between(xl, xr) if xr > xl else 0.0
    vmass = problem.vcum.between(float(problem.boundaries.a(t)),
                                 float(problem.boundaries.b(t)))
    return wmass ** (1.0 / problem.p) * vmass ** (1.0 / problem.p_prime)


def _golden_max(f, lo: float, hi: float, n_iter: int = 40) -> float:
    """Argmax of f on [lo, hi] by golden-section search in log coordinates."""
    a, b = math.log(lo), math.log(hi)
    c = b - _GOLD * (b - a)
    d = a + _GOLD * (b - a)
    fc, fd = f(math.exp(c)), f(math.exp(d))
    for _ in range(n_iter):
        if fc < fd:
            a, c, fc = c, d, fd
            d = a + _GOLD * (b - a)
            fd = f(math.exp(d))
        else:
            b, d, fd = d, c, fc
            c = b - _GOLD * (b - a)
            fc = f(math.exp(c))
    return math.exp(0.5 * (a + b))


def nu_variants(problem: Problem, cell: GridCell) -> NuCell:
    """The fixed-integral nu_tilde plus sampled suprema nu_bar <= nu.

    The suprema are certified lower bounds: log-spaced samples (including the
    cell pivot) refined by golden-section around the best sample, with the
    final value re-evaluated on the exact scalar path.  All three variants
    share the candidate set, which enforces the elementwise ordering up to
    evaluation round-off.
    """
    p, pp = problem.p, problem.p_prime
    xi_lo, xi_hi = cell.xi_lo, cell.xi_hi
    x0 = cell.x0
    bnd = problem.boundaries

    # nu_tilde from its two fixed integrals
    wfull_cell = problem.wcum.between(xi_lo, xi_hi)
    v_tilde = problem.vcum.between(float(bnd.a(x0)), float(bnd.b(x0)))
    nu_tilde = wfull_cell ** (1.0 / p) * v_tilde ** (1.0 / pp)

    n = problem.res.sup_samples
    ts = np.geomspace(xi_lo * (1 + _EDGE_INSET), xi_hi * (1 - _EDGE_INSET), n)
    ts = np.sort(np.append(ts, x0))
    sg = problem.fairway.sigma_many(ts)
    xl = np.asarray(bnd.b.inverse(sg), dtype=float)
    xr = np.asarray(bnd.a.inverse(sg), dtype=float)
    vmass = problem.vcum.between_many(bnd.a(ts), bnd.b(ts))

    wfull = problem.wcum.between_many(xl, xr)
    lo_c = np.maximum(xl, xi_lo)
    hi_c = np.minimum(xr, xi_hi)
    wclip = np.where(hi_c > lo_c, problem.wcum.between_many(lo_c, hi_c), 0.0)

    nu_s = wfull ** (1.0 / p) * vmass ** (1.0 / pp)
    nubar_s = wclip ** (1.0 / p) * vmass ** (1.0 / pp)

    cands = {x0}
    gaps = []
    for samples, clip in ((nu_s, None), (nubar_s, (xi_lo, xi_hi))):
        order = np.argsort(samples)
        i_best = int(order[-1])
        gaps.append(float(samples[order[-1]] - samples[order[-2]]) if n > 1 else 0.0)
        cands.add(float(ts[i_best]))
        lo_b = float(ts[max(0, i_best - 1)])
        hi_b = float(ts[min(ts.size - 1, i_best + 1)])
        if hi_b > lo_b:
            cands.add(_golden_max(lambda t, c=clip: _nu_exact(problem, t, c),
                                  lo_b, hi_b))

    cand_list = sorted(cands)
    nu_exact = [_nu_exact(problem, t, None) for t in cand_list]
    nubar_exact = [_nu_exact(problem, t, (xi_lo, xi_hi)) for t in cand_list]
    nu_best = max(float(np.max(nu_s)), max(nu_exact))
    nubar_best = max(float(np.max(nubar_s)), max(nubar_exact))
    arg = cand_list[int(np.argmax(nu_exact))]
    arg_bar = cand_list[int(np.argmax(nubar_exact))]
    return NuCell(k=cell.k, nu_tilde=float(nu_tilde), nu_bar=float(nubar_best),
                  nu=float(nu_best), arg_bar=float(arg_bar), arg=float(arg),
                  sup_gap=float(max(gaps)))


# ---------------------------------------------------------------------------
# mu over the flattened refinement
# ---------------------------------------------------------------------------

def mu_values(problem: Problem) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """mu_m for every consecutive pair of the flattened refinement, with the
    (k, j) origin of each m."""
    pts, origin = problem.grid.flattened()
    p, pp = problem.p, problem.p_prime
    a, b = problem.boundaries.a, problem.boundaries.b
    wmass = problem.wcum.between_many(pts[:-1], pts[1:])
    vmass = problem.vcum.between_many(a(pts[:-1]), b(pts[1:]))
    mus = np.where((wmass > 0) & (vmass > 0),
                   wmass ** (1.0 / p) * vmass ** (1.0 / pp), 0.0)
    return mus, origin


def holder_subdivision_check(problem: Problem, x_lo: float, x_hi: float,
                             cuts, tol: float = 1e-8) -> tuple[bool, float, float]:
    """Sub-additivity of the mu product under interior cuts.

    Splits (x_lo, x_hi) at the given cuts and sums, for each piece, the w-mass
    power times the combined v-mass of the two boundary-image strips; the sum
    must not exceed mu(x_lo, x_hi) beyond `tol`.  Returns (ok, lhs, mu).
    """
    p, pp = problem.p, problem.p_prime
    a, b = problem.boundaries.a, problem.boundaries.b
    cuts = sorted(float(c) for c in cuts)
    if any(not x_lo < c < x_hi for c in cuts):
        raise ValueError("cuts must lie strictly inside the cell")
    wmass = problem.wcum.between(x_lo, x_hi)
    vmass = problem.vcum.between(float(a(x_lo)), float(b(x_hi)))
    mu = wmass ** (1.0 / p) * vmass ** (1.0 / pp)
    pieces = list(zip(cuts, cuts[1:] + [x_hi]))
    terms = []
    for lo, hi in pieces:
        wm = problem.wcum.between(lo, hi)
        vm = (problem.vcum.between(float(a(lo)), float(a(hi)))
              + problem.vcum.between(float(b(lo)), float(b(hi))))
        terms.append(wm ** (1.0 / p) * vm ** (1.0 / pp))
    lhs = math.fsum(terms)
    return lhs <= mu * (1.0 + tol), lhs, mu


# ---------------------------------------------------------------------------
# integral functionals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FunctionalValue:
    value: float            # over the (cell-aligned) window
    alpha: float
    window: tuple[float, float]
    tail: float = 0.0       # certified geometric tail estimate
    divergent: bool = False


def _pow00(base: np.ndarray, expo: float, gate: np.ndarray) -> np.ndarray:
    """base**expo with the 0*inf -> 0 convention gated by a vanishing factor."""
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        out = np.power(base, expo)
    return np.where(gate > 0.0, out, 0.0)


def _extend_tail(integrand, lo: float, hi: float, base: float,
                 n_steps: int = 6, factor: float = 4.0) -> tuple[float, bool]:
    """Geometric window extension; returns (tail estimate, divergent flag)."""
    total_tail = 0.0
    divergent = False
    for edge, direction in ((hi, +1), (lo, -1)):
        prev_inc = None
        cur = edge
        for _ in range(n_steps):
            nxt = cur * factor if direction > 0 else cur / factor
            seg = (cur, nxt) if direction > 0 else (nxt, cur)
            inc = integrate_power(integrand, 1.0, seg[0], seg[1], rtol=1e-6)
            if prev_inc is not None and prev_inc > 0:
                ratio = inc / prev_inc
                if ratio >= 1.0:
                    divergent = divergent or inc > 1e-12 * max(base, 1e-300)
                elif inc < 1e-9 * max(base, 1e-300):
                    total_tail += inc / (1.0 - ratio)
                    break
            total_tail += inc
            prev_inc = inc
            cur = nxt
        else:
            divergent = divergent or (prev_inc or 0.0) > 1e-6 * max(base, 1e-300)
    return total_tail, divergent


def functional_V(problem: Problem, alpha: float,
                 window: tuple[float, float] | None = None,
                 rtol: float = 1e-9, with_tail: bool = False) -> FunctionalValue:
    """Integral functional of the regime alpha <= p, evaluated in the
    y-variable: w-mass between the back-images of t, fairway mass at
    sigma^{-1}(t), density v**p'."""
    if alpha <= 1:
        raise ConfigError(f"this functional needs alpha > 1, got {alpha}")
    p, pp = problem.p, problem.p_prime
    bnd = problem.boundaries
    fw = problem.fairway

    def integrand(ts):
        ts = np.asarray(ts, dtype=float)
        vpt = np.power(np.asarray(problem.weights.v(ts), dtype=float), pp)
        s = fw.sigma_inverse_many(ts)
        wmass = problem.wcum.between_many(bnd.b.inverse(ts), bnd.a.inverse(ts))
        vmass = problem.vcum.between_many(bnd.a(s), bnd.b(s))
        out = (np.power(wmass, alpha / p)
               * _pow00(vmass, alpha / pp - 1.0, vpt) * vpt)
        return out

    if problem.v_is_zero():
        lo, hi = window or (1.0, 2.0)
        return FunctionalValue(0.0, alpha, (lo, hi))
    if window is None:
        h_lo, h_hi = problem.hull
        window = (fw.sigma(h_lo), fw.sigma(h_hi))
    val = integrate_power(integrand, 1.0, window[0], window[1], rtol=rtol)
    tail, div = (0.0, False)
    if with_tail:
        def scalar_integrand(ts):
            ts = np.asarray(ts, dtype=float)
            out = np.empty_like(ts)
            flat_in = ts.ravel()
            flat_out = out.ravel()
            for i, t in enumerate(flat_in):
                vpt = float(problem.weights.v(t)) ** pp
                if vpt == 0.0:
                    flat_out[i] = 0.0
                    continue
                s = fw.sigma_inverse(float(t))
                wm = problem.wcum.between(float(bnd.b.inverse(t)),
                                          float(bnd.a.inverse(t)))
                vm = problem.vcum.between(float(bnd.a(s)), float(bnd.b(s)))
                flat_out[i] = wm ** (alpha / p) * vm ** (alpha / pp - 1.0) * vpt
            return out
        tail, div = _extend_tail(scalar_integrand, window[0], window[1], val)
    return FunctionalValue(val ** (1.0 / alpha), alpha, window,
                           tail=tail, divergent=div)


def functional_W(problem: Problem, alpha: float,
                 window: tuple[float, float] | None = None,
                 rtol: float = 1e-9, with_tail: bool = False) -> FunctionalValue:
    """Integral functional of the regime alpha >= p, evaluated in the
    x-variable: clipped w-mass between the back-images of sigma(t), the full
    cell v-mass, density w**p."""
    if alpha <= 1:
        raise ConfigError(f"this functional needs alpha > 1, got {alpha}")
    p, pp = problem.p, problem.p_prime
    bnd = problem.boundaries
    fw = problem.fairway

    def integrand(ts):
        ts = np.asarray(ts, dtype=float)
        wpt = np.power(np.asarray(problem.weights.w(ts), dtype=float), p)
        s = fw.sigma_many(ts)
        wmass = problem.wcum.between_many(bnd.b.inverse(s), bnd.a.inverse(s))
        vmass = problem.vcum.between_many(bnd.a(ts), bnd.b(ts))
        return (_pow00(wmass, alpha / p - 1.0, wpt)
                * np.power(vmass, alpha / pp) * wpt)

    if problem.v_is_zero() or problem.w_is_zero():
        lo, hi = window or problem.hull
        return FunctionalValue(0.0, alpha, (lo, hi))
    if window is None:
        window = problem.hull
    val = integrate_power(integrand, 1.0, window[0], window[1], rtol=rtol)
    tail, div = (0.0, False)
    if with_tail:
        def scalar_integrand(ts):
            ts = np.asarray(ts, dtype=float)
            out = np.empty_like(ts)
            for i, t in enumerate(ts.ravel()):
                wpt = float(problem.weights.w(t)) ** p
                if wpt == 0.0:
                    out.ravel()[i] = 0.0
                    continue
                s = fw.sigma(float(t))
                wm = problem.wcum.between(float(bnd.b.inverse(s)),
                                          float(bnd.a.inverse(s)))
                vm = problem.vcum.between(float(bnd.a(t)), float(bnd.b(t)))
                out.ravel()[i] = wm ** (alpha / p - 1.0) * vm ** (alpha / pp) * wpt
            return out
        tail, div = _extend_tail(scalar_integrand, window[0], window[1], val)
    return FunctionalValue(val ** (1.0 / alpha), alpha, window,
                           tail=tail, divergent=div)


def example_F(problem: Problem, alpha: float, k: int = 0,
              sum_over_window: bool = False, rtol: float = 1e-9) -> float:
    """Linear-family criterion: per-cell integral of the clipped w-mass power
    times the cell width power against w**p.  Defined for linear boundaries
    with the unit constant v only; optionally summed over all window cells.
    """
    if problem.boundaries.family != "linear" or \
            problem.weights.v.describe() != {"family": "const", "c": 1.0,
                                             "beta": 0.0, "lam": 0.0}:
        raise ConfigError("criterion requires the linear family with v == 1")
    p, pp = problem.p, problem.p_prime
    bnd = problem.boundaries
    fw = problem.fairway

    def integrand(ts):
        ts = np.asarray(ts, dtype=float)
        wpt = np.power(np.asarray(problem.weights.w(ts), dtype=float), p)
        s = fw.sigma_many(ts)
        wmass = problem.wcum.between_many(bnd.b.inverse(s), bnd.a.inverse(s))
        width = np.asarray(bnd.b(ts), dtype=float) - np.asarray(bnd.a(ts), dtype=float)
        return (_pow00(wmass, alpha / p - 1.0, wpt)
                * np.power(width, alpha / pp) * wpt)

    if problem.w_is_zero():
        return 0.0
    grid = problem.grid
    if sum_over_window:
        cells = [(c.xi_lo, c.xi_hi) for c in grid.cells]
    else:
        if not grid.k_min <= k <= grid.k_max:
            raise ConfigError(f"cell index {k} outside grid range "
                              f"[{grid.k_min}, {grid.k_max}]")
        c = grid.cell(k)
        cells = [(c.xi_lo, c.xi_hi)]
    total = math.fsum(integrate_power(integrand, 1.0, lo, hi, rtol=rtol)
                      for lo, hi in cells)
    return total ** (1.0 / alpha)


# ---------------------------------------------------------------------------
# Schatten sums and tails
# ---------------------------------------------------------------------------

def schatten_sum(values, alpha: float) -> float:
    """(sum of values**alpha)**(1/alpha) with compensated summation; returns
    inf when the sum overflows."""
    if alpha <= 0:
        raise ValueError(f"Schatten index must be positive, got {alpha}")
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return 0.0
    with np.errstate(over="ignore"):
        powers = np.power(arr, alpha)
    total = math.fsum(powers[np.isfinite(powers)]) if np.all(np.isfinite(powers)) \
        else math.inf
    if not math.isfinite(total):
        return math.inf
    return total ** (1.0 / alpha)


@dataclass(frozen=True)
class TailEstimate:
    alpha: float
    left: float
    right: float
    left_divergent: bool
    right_divergent: bool
    n_cells: int

    @property
    def total(self) -> float:
        return self.left + self.right


def nu_tilde_tail(problem: Problem, alpha: float, n_ext: int = 10) -> TailEstimate:
    """Certified geometric estimate of the nu_tilde**alpha mass discarded by
    the window truncation, probing n_ext orbit cells beyond each hull end."""
    bnd = problem.boundaries
    fw = problem.fairway
    p, pp = problem.p, problem.p_prime

    def tilde(xi_lo: float, xi_hi: float) -> float:
        x0 = fw.sigma_inverse(float(bnd.b(xi_lo)), bracket=(xi_lo, xi_hi))
        wm = integrate_power(problem.weights.w, p, xi_lo, xi_hi)
        vm = integrate_power(problem.weights.v, pp, float(bnd.a(x0)),
                             float(bnd.b(x0)))
        return wm ** (1.0 / p) * vm ** (1.0 / pp)

    sides = {}
    h_lo, h_hi = problem.hull
    for name, start, forward in (("right", h_hi, True), ("left", h_lo, False)):
        terms = []
        cur = start
        divergent = False
        for _ in range(n_ext):
            nxt = (float(bnd.a.inverse(bnd.b(cur))) if forward
                   else float(bnd.b.inverse(bnd.a(cur))))
            cell = (cur, nxt) if forward else (nxt, cur)
            try:
                terms.append(tilde(*cell) ** alpha)
            except Exception:
                divergent = True
                break
            cur = nxt
        est = math.fsum(terms)
        if len(terms) >= 2 and terms[-2] > 0:
            ratio = terms[-1] / terms[-2]
            if ratio < 1.0:
                est += terms[-1] * ratio / (1.0 - ratio)
            else:
                divergent = True
        sides[name] = (est, divergent)
    return TailEstimate(alpha=alpha, left=sides["left"][0],
                        right=sides["right"][0],
                        left_divergent=sides["left"][1],
                        right_divergent=sides["right"][1], n_cells=n_ext)


# ---------------------------------------------------------------------------
# aggregate report
# ---------------------------------------------------------------------------

@dataclass
class FunctionalReport:
    nu_cells: list[NuCell]
    mus: np.ndarray
    mu_origin: list[tuple[int, int]]
    schatten_nu: dict[float, float]
    schatten_nu_tilde: dict[float, float]
    schatten_mu: dict[float, float]
    V: dict[float, FunctionalValue]
    W: dict[float, FunctionalValue]
    F: dict[float, float] | None
    tails: dict[float, TailEstimate]
    beta_p: float
    gamma_p: float

    @property
    def sup_nu(self) -> float:
        return max((c.nu for c in self.nu_cells), default=0.0)

    @property
    def sup_mu(self) -> float:
        return float(np.max(self.mus)) if self.mus.size else 0.0


def build_report(problem: Problem, with_tails: bool = True,
                 with_F: bool | None = None) -> FunctionalReport:
    cells = [nu_variants(problem, c) for c in problem.grid.cells]
    mus, origin = mu_values(problem)
    alphas = problem.alphas
    nu_arr = np.array([c.nu for c in cells])
    nu_tilde_arr = np.array([c.nu_tilde for c in cells])
    rep = FunctionalReport(
        nu_cells=cells, mus=mus, mu_origin=origin,
        schatten_nu={a: schatten_sum(nu_arr, a) for a in alphas},
        schatten_nu_tilde={a: schatten_sum(nu_tilde_arr, a) for a in alphas},
        schatten_mu={a: schatten_sum(mus, a) for a in alphas},
        V={a: functional_V(problem, a) for a in alphas if a > 1},
        W={a: functional_W(problem, a) for a in alphas
           if a > 1 and a >= problem.p},
        F=None,
        tails={a: nu_tilde_tail(problem, a) for a in alphas} if with_tails else {},
        beta_p=problem.constants.beta_p,
        gamma_p=problem.constants.gamma_p,
    )
    if with_F is None:
        with_F = (problem.boundaries.family == "linear"
                  and problem.weights.v.describe() == {"family": "const", "c": 1.0,
                                                       "beta": 0.0, "lam": 0.0})
    if with_F:
        rep.F = {a: example_F(problem, a) for a in alphas}
    return rep

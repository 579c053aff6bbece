"""Discrete realisation of the operator at p = 2: symmetrised Nystrom
matrices with indicator-exact panel alignment, singular spectra, the interval
oscillation norm with its quarter/double bounds, epsilon-partitions, and the
block-diagonal split diagnostics.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import (
    BudgetError,
    ConfigError,
    ConvergenceError,
    NonMonotoneError,
    NonMonotoneWarning,
    ZeroMassError,
)
from .funcs import invert_monotone
from .grids import Partition, median_point
from .problem import Problem, Resolution
from .functionals import build_report, schatten_sum

__all__ = [
    "DiscreteOperator",
    "SpectralReport",
    "KEstimate",
    "discretize",
    "singular_values",
    "K_estimate",
    "epsilon_partition",
    "KeyCheck",
    "lemma_key_checks",
    "RatioReport",
    "theorem_ratio_report",
    "BlockSplitReport",
    "block_split",
]


@lru_cache(maxsize=16)
def _leggauss(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(n)


def _panel_nodes(edges: np.ndarray, nodes_per_panel: int
                 ) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights on every panel, concatenated ascending."""
    xg, wg = _leggauss(nodes_per_panel)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    nodes = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
    weights = (half[:, None] * wg[None, :]).ravel()
    return nodes, weights


def _log_subdivide(edges: np.ndarray, n_target: int) -> np.ndarray:
    """Subdivide segments log-proportionally until ~n_target panels exist."""
    logw = np.log(edges[1:] / edges[:-1])
    total = float(np.sum(logw))
    if total <= 0 or n_target <= edges.size - 1:
        return edges
    counts = np.maximum(1, np.round(n_target * logw / total).astype(int))
    out = [edges[0]]
    for i, c in enumerate(counts):
        seg = np.geomspace(edges[i], edges[i + 1], c + 1)
        out.extend(seg[1:])
    return np.array(out)


def _merge_edges(lo: float, hi: float, breaks) -> np.ndarray:
    pts = [lo, hi]
    for x in breaks:
        if lo < x < hi:
            pts.append(float(x))
    edges = np.array(sorted(pts))
    keep = np.concatenate([[True], np.diff(edges) > 1e-14 * edges[1:]])
    return edges[keep]


@dataclass
class DiscreteOperator:
    """Symmetrised kernel matrix sqrt(wx) w(x) v(y) [a(x) <= y <= b(x)] sqrt(wy).

    All breakpoints a(x_i), b(x_i) are y-panel edges, so per-row quadrature
    never crosses the indicator jump; singular values of `matrix` approximate
    those of the operator truncated to `window`.
    """

    x: np.ndarray
    wx: np.ndarray
    y: np.ndarray
    wy: np.ndarray
    matrix: np.ndarray
    window: tuple[float, float]
    y_window: tuple[float, float]
    x_edges: np.ndarray
    y_edges: np.ndarray
    resolution: tuple[int, int]


def discretize(problem: Problem, window: tuple[float, float] | None = None,
               nx: int | None = None, ny: int | None = None,
               x_breaks=(), y_breaks=(),
               y_window: tuple[float, float] | None = None,
               with_grid_breaks: bool = True) -> DiscreteOperator:
    """Build the discrete operator on the truncation window (p = 2 only)."""
    if abs(problem.p - 2.0) > 1e-12:
        raise ConfigError(f"spectral discretisation is defined for p = 2, "
                          f"got p = {problem.p}")
    res = problem.res
    nx = nx or res.nx
    ny = ny or res.ny
    if nx > Resolution.MAX_NX or ny > Resolution.MAX_NY:
        raise ConfigError(f"requested resolution {nx}x{ny} over hard cap")
    if window is None:
        window = problem.hull
    t_lo, t_hi = window
    a, b = problem.boundaries.a, problem.boundaries.b

    breaks = list(x_breaks)
    if with_grid_breaks and not problem.v_is_zero():
        try:
            g = problem.grid
            breaks.extend(float(v) for v in g.xi)
            breaks.extend(c.x0 for c in g.cells)
        except Exception:
            pass
    x_edges = _merge_edges(t_lo, t_hi, breaks)
    nodes_x = 4
    x_edges = _log_subdivide(x_edges, max(1, nx // nodes_x))
    x, wx = _panel_nodes(x_edges, nodes_x)

    if y_window is None:
        y_window = (float(a(t_lo)), float(b(t_hi)))
    y_lo, y_hi = y_window
    yb = list(y_breaks)
    yb.extend(np.clip(np.asarray(a(x), dtype=float), y_lo, y_hi))
    yb.extend(np.clip(np.asarray(b(x), dtype=float), y_lo, y_hi))
    y_edges = _merge_edges(y_lo, y_hi, yb)
    nodes_y = 2
    if (y_edges.size - 1) * nodes_y < ny:
        y_edges = _log_subdivide(y_edges, max(1, ny // nodes_y))
    y, wy = _panel_nodes(y_edges, nodes_y)

    wvals = np.asarray(problem.weights.w(x), dtype=float)
    vvals = np.asarray(problem.weights.v(y), dtype=float)
    av = np.asarray(a(x), dtype=float)
    bv = np.asarray(b(x), dtype=float)
    ind = (av[:, None] <= y[None, :]) & (y[None, :] <= bv[:, None])
    matrix = (np.sqrt(wx) * wvals)[:, None] * ind * (vvals * np.sqrt(wy))[None, :]
    return DiscreteOperator(x=x, wx=wx, y=y, wy=wy, matrix=matrix,
                            window=window, y_window=y_window,
                            x_edges=x_edges, y_edges=y_edges,
                            resolution=(x.size, y.size))


@dataclass
class SpectralReport:
    s: np.ndarray                       # nonincreasing singular values
    schatten: dict[float, float]
    resolution: tuple[int, int]
    converged: bool | None = None       # vs a previous refinement, if known

    @property
    def norm(self) -> float:
        return float(self.s[0]) if self.s.size else 0.0


def _svdvals(matrix: np.ndarray) -> np.ndarray:
    try:
        s = np.linalg.svd(matrix, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"SVD failed to converge: {exc}") from exc
    return np.maximum(s, 0.0)


def singular_values(op: DiscreteOperator, alphas=(2.0,),
                    previous: SpectralReport | None = None,
                    conv_rtol: float = 1e-3) -> SpectralReport:
    """Full singular spectrum of the discrete operator, deterministic."""
    if not np.all(np.isfinite(op.matrix)):
        raise ConvergenceError("kernel matrix contains non-finite entries")
    s = _svdvals(op.matrix)
    converged = None
    if previous is not None and previous.s.size and s.size:
        n = min(10, s.size, previous.s.size)
        scale = max(float(s[0]), 1e-300)
        converged = bool(np.all(np.abs(s[:n] - previous.s[:n]) <= conv_rtol * scale))
    return SpectralReport(s=s, schatten={a: schatten_sum(s, a) for a in alphas},
                          resolution=op.resolution, converged=converged)


# ---------------------------------------------------------------------------
# Interval oscillation norm
# ---------------------------------------------------------------------------

@dataclass
class KEstimate:
    """Numeric oscillation norm of one interval with its sandwich bounds.

    The quarter lower bound restricts test functions to the two boundary-image
    strips split at the w**p median c; the upper bound doubles the norm of the
    outer-complement kernel.  The support of the upper strip is read as
    [b(c), b(e)] (the displayed [b(c), b(d)] is empty for d < c).
    """

    d: float
    e: float
    c: float
    kappa: float
    lower: float
    upper: float
    viewless: tuple[float, float]
    resolution: tuple[int, int]
    note: str = "upper-strip support read as [b(c), b(e)]"


def K_estimate(problem: Problem, d: float, e: float,
               nx: int | None = None, ny: int | None = None) -> KEstimate:
    """Oscillation norm and its bounds for the interval (d, e) at p = 2."""
    if abs(problem.p - 2.0) > 1e-12:
        raise ConfigError(f"oscillation norm needs p = 2, got {problem.p}")
    if not problem.window[0] * (1 - 1e-12) <= d < e <= problem.hull[1] * (1 + 1e-12):
        if not 0 < d < e:
            raise ValueError(f"bad interval [{d}, {e}]")
    nx = nx or problem.res.k_nx
    ny = ny or problem.res.k_ny
    a, b = problem.boundaries.a, problem.boundaries.b
    wsq_mass = problem.wcum.between(d, e)
    if wsq_mass <= 0.0:
        raise ZeroMassError(f"no w**p mass on [{d}, {e}]")
    c = median_point(problem.wcum, d, e)

    ac, bc = float(a(c)), float(b(c))
    op = discretize(problem, window=(d, e), nx=nx, ny=ny,
                    x_breaks=(c,), y_breaks=(ac, bc),
                    with_grid_breaks=False)
    x, wx, y, wy = op.x, op.wx, op.y, op.wy
    wvals = np.asarray(problem.weights.w(x), dtype=float)
    vvals = np.asarray(problem.weights.v(y), dtype=float)
    av = np.asarray(a(x), dtype=float)
    bv = np.asarray(b(x), dtype=float)
    ind = (av[:, None] <= y[None, :]) & (y[None, :] <= bv[:, None])

    # centred operator: subtract the w**2-average of each column profile
    w2q = wx * wvals ** 2
    W_I = float(np.sum(w2q))
    gcol = (w2q @ ind) / W_I                      # average indicator profile
    row = np.sqrt(wx) * wvals
    col = vvals * np.sqrt(wy)
    B = row[:, None] * (ind - gcol[None, :]) * col[None, :]
    kappa = float(_svdvals(B)[0])

    B0 = row[:, None] * ind * col[None, :]
    mask_a = (x <= c)[:, None] & (y <= ac)[None, :]
    mask_b = (x >= c)[:, None] & (y >= bc)[None, :]
    s1a = float(_svdvals(np.where(mask_a, B0, 0.0))[0])
    s1b = float(_svdvals(np.where(mask_b, B0, 0.0))[0])
    lower = 0.25 * (s1a + s1b)

    y_lo, y_hi = op.y_window
    ind_bar = ((y[None, :] >= y_lo) & (y[None, :] <= av[:, None])) | \
              ((y[None, :] >= bv[:, None]) & (y[None, :] <= y_hi))
    Bbar = row[:, None] * ind_bar * col[None, :]
    upper = 2.0 * float(_svdvals(Bbar)[0])

    viewless = (float(problem.boundaries.b.inverse(ac)),
                float(problem.boundaries.a.inverse(bc)))
    return KEstimate(d=d, e=e, c=c, kappa=kappa, lower=lower, upper=upper,
                     viewless=viewless, resolution=op.resolution)


# ---------------------------------------------------------------------------
# epsilon-partition
# ---------------------------------------------------------------------------

def epsilon_partition(problem: Problem, eps: float,
                      window: tuple[float, float] | None = None,
                      tol_part: float | None = None,
                      max_intervals: int = 400,
                      nx: int | None = None, ny: int | None = None) -> Partition:
    """Left-to-right partition with oscillation norm eps on every interior
    interval and <= eps on the last, built by doubling brackets plus monotone
    root-finding on the right endpoint."""
    if eps <= 0:
        raise ValueError(f"need eps > 0, got {eps}")
    window = window or problem.hull
    tol_part = tol_part if tol_part is not None else problem.tol.tol_part
    t_lo, t_hi = window

    def kappa_of(dd: float, ee: float) -> float:
        if ee <= dd * (1 + 1e-14):
            return 0.0
        return K_estimate(problem, dd, ee, nx=nx, ny=ny).kappa

    points = [t_lo]
    kappas = []
    h_guess = (t_hi - t_lo) / 64.0
    while True:
        d = points[-1]
        if kappa_of(d, t_hi) <= eps * (1.0 + tol_part):
            points.append(t_hi)
            kappas.append(kappa_of(d, t_hi))
            break
        # bracket by doubling; warn if the scan ever decreases noticeably
        h = min(h_guess, (t_hi - d) * 0.5)
        k_prev = kappa_of(d, d + h)
        while k_prev < eps and d + 2 * h < t_hi:
            h *= 2.0
            k_new = kappa_of(d, d + h)
            if k_new < k_prev * (1.0 - 1e-9):
                warnings.warn("oscillation norm not monotone in the right "
                              "endpoint; taking the smallest root",
                              NonMonotoneWarning)
            k_prev = k_new
        h_lo = h / 2.0 if h > h_guess or k_prev >= eps else h
        h_hi = min(2.0 * h, t_hi - d)
        if kappa_of(d, d + h_hi) < eps:
            h_hi = t_hi - d
        try:
            root = invert_monotone(lambda hh: kappa_of(d, d + hh), eps,
                                   max(h_lo, 1e-300), h_hi,
                                   tol=tol_part * eps / (2.0 * (1.0 + eps)))
        except NonMonotoneError:
            # scan for the smallest crossing, then bisect that bracket
            hs = np.geomspace(max(h_lo, 1e-12 * (t_hi - d)), h_hi, 64)
            root = None
            prev = 0.0
            for hh in hs:
                kk = kappa_of(d, d + hh)
                if kk >= eps:
                    root = invert_monotone(lambda q: kappa_of(d, d + q), eps,
                                           prev if prev else hs[0], hh,
                                           tol=tol_part * eps / 2.0)
                    break
                prev = hh
            if root is None:
                points.append(t_hi)
                kappas.append(kappa_of(d, t_hi))
                break
            warnings.warn("smallest root taken after non-monotone scan",
                          NonMonotoneWarning)
        points.append(d + root)
        kappas.append(kappa_of(d, d + root))
        h_guess = root
        if len(points) > max_intervals:
            raise BudgetError(f"partition exceeded {max_intervals} intervals "
                              f"at eps = {eps}")
    return Partition(points=np.array(points), kappas=np.array(kappas))


# ---------------------------------------------------------------------------
# Lemma-style checks and theorem ratios
# ---------------------------------------------------------------------------

@dataclass
class KeyCheck:
    """Lower/upper approximation-number inequalities for one eps.

    With M interior eps-intervals, the lower route uses N = M // 7 and
    requires s_N >= eps/2; the upper route requires s_{M+2} <= sqrt(7) eps.
    Error bars come from refinement doubling and must clear the inequality.
    """

    eps: float
    n_intervals: int
    N_lower: int
    lower_lhs: float | None
    lower_bar: float | None
    lower_pass: bool | None        # None = vacuous (N_lower == 0)
    upper_index: int
    upper_lhs: float
    upper_bar: float
    upper_rhs: float
    upper_pass: bool
    straddled: bool


def lemma_key_checks(problem: Problem, eps: float,
                     s_base: np.ndarray, s_refined: np.ndarray,
                     partition: Partition | None = None) -> KeyCheck:
    if partition is None:
        partition = epsilon_partition(problem, eps)
    kappas = partition.kappas
    m_interior = int(np.sum(kappas >= eps * (1 - 10 * problem.tol.tol_part))) \
        if kappas is not None else 0

    def s_at(arr: np.ndarray, n: int) -> float:
        return float(arr[n - 1]) if 1 <= n <= arr.size else 0.0

    n_lower = m_interior // 7
    straddled = False
    if n_lower >= 1:
        lhs = s_at(s_refined, n_lower)
        bar = abs(s_at(s_refined, n_lower) - s_at(s_base, n_lower))
        lower_pass = (lhs - bar) >= eps / 2.0
        if not lower_pass and (lhs + bar) >= eps / 2.0:
            straddled = True
        lower = (lhs, bar, lower_pass)
    else:
        lower = (None, None, None)

    idx = m_interior + 2
    u_lhs = s_at(s_refined, idx)
    u_bar = abs(s_at(s_refined, idx) - s_at(s_base, idx))
    u_rhs = math.sqrt(7.0) * eps
    upper_pass = (u_lhs + u_bar) <= u_rhs
    if not upper_pass and (u_lhs - u_bar) <= u_rhs:
        straddled = True

    return KeyCheck(eps=eps, n_intervals=m_interior, N_lower=n_lower,
                    lower_lhs=lower[0], lower_bar=lower[1], lower_pass=lower[2],
                    upper_index=idx, upper_lhs=u_lhs, upper_bar=u_bar,
                    upper_rhs=u_rhs, upper_pass=upper_pass, straddled=straddled)


@dataclass
class RatioReport:
    alpha: float
    sum_nu: float          # (sum nu_k**alpha)**(1/alpha)
    sum_s: float
    sum_mu: float
    r1: float | None       # sum_nu / sum_s
    r2: float | None       # sum_s / sum_mu
    r3: float | None       # operator norm / sup nu_k
    r4: float              # sup mu_m
    finite_together: bool
    stability: dict[str, float] | None = None   # relative change under doubling


def theorem_ratio_report(problem: Problem, alphas=None,
                         refine: bool = False) -> list[RatioReport]:
    """Constant-free two-sided diagnostics: Schatten sums of the nu, s and mu
    sequences plus their quotients; asserts nothing beyond co-finiteness."""
    alphas = tuple(alphas or problem.alphas)
    rep = build_report(problem, with_tails=False)
    op = discretize(problem)
    spec = singular_values(op, alphas=alphas)

    refined = None
    if refine:
        prob2 = problem.with_resolution(problem.res.doubled())
        rep2 = build_report(prob2, with_tails=False)
        spec2 = singular_values(discretize(prob2), alphas=alphas)
        refined = (rep2, spec2)

    out = []
    for a in alphas:
        nu_a = rep.schatten_nu[a]
        s_a = spec.schatten[a]
        mu_a = rep.schatten_mu[a]
        r1 = nu_a / s_a if s_a > 0 else None
        r2 = s_a / mu_a if mu_a > 0 else None
        r3 = spec.norm / rep.sup_nu if rep.sup_nu > 0 else None
        finites = [math.isfinite(v) for v in (nu_a, s_a, mu_a)]
        stability = None
        if refined is not None:
            rep2, spec2 = refined
            def _rel(u, v):
                return abs(u - v) / max(abs(u), abs(v), 1e-300)
            stability = {
                "sum_nu": _rel(nu_a, rep2.schatten_nu[a]),
                "sum_s": _rel(s_a, spec2.schatten[a]),
                "sum_mu": _rel(mu_a, rep2.schatten_mu[a]),
            }
        out.append(RatioReport(alpha=a, sum_nu=nu_a, sum_s=s_a, sum_mu=mu_a,
                               r1=r1, r2=r2, r3=r3, r4=rep.sup_mu,
                               finite_together=(all(finites) or not any(finites)),
                               stability=stability))
    return out


# ---------------------------------------------------------------------------
# Block-diagonal split
# ---------------------------------------------------------------------------

@dataclass
class BlockSplitReport:
    n_cells: int
    frobenius_rel_error: float
    mask_exclusive: bool           # every kernel entry claimed exactly once
    schatten_blocks: dict[float, float]
    schatten_full: dict[float, float]
    per_block: list[tuple[int, str, float]]   # (k, block name, s_1)


def block_split(problem: Problem, op: DiscreteOperator | None = None,
                alphas=None) -> BlockSplitReport:
    """Materialise the four per-cell kernel blocks (left/right of the cell
    pivot, below/above the shared boundary image) and verify they reassemble
    the full matrix."""
    alphas = tuple(alphas or problem.alphas)
    if op is None:
        op = discretize(problem)
    grid = problem.grid
    M = op.matrix
    x, y = op.x, op.y
    b = problem.boundaries.b

    recon = np.zeros_like(M)
    claims = np.zeros(M.shape, dtype=np.int8)
    per_block = []
    powers = {a: [] for a in alphas}
    for cell in grid.cells:
        ycut = float(b(cell.xi_lo))          # == a(xi_{k+1})
        rows_l = (x > cell.xi_lo) & (x < cell.x0)
        rows_r = (x > cell.x0) & (x < cell.xi_hi)
        cols_lo = y <= ycut
        for name, rows, cols in (
            ("T2", rows_l, cols_lo), ("S1", rows_l, ~cols_lo),
            ("T1", rows_r, cols_lo), ("S2", rows_r, ~cols_lo),
        ):
            if not np.any(rows) or not np.any(cols):
                continue
            sub = M[np.ix_(rows, cols)]
            recon[np.ix_(rows, cols)] += sub
            claims[np.ix_(rows, cols)] += 1
            s = _svdvals(sub)
            per_block.append((cell.k, name, float(s[0]) if s.size else 0.0))
            for a in alphas:
                powers[a].extend(float(v) ** a for v in s if v > 0)

    norm_m = float(np.linalg.norm(M))
    err = float(np.linalg.norm(M - recon)) / norm_m if norm_m > 0 else 0.0
    exclusive = bool(np.all(claims[M != 0] == 1)) if np.any(M != 0) else True
    spec_full = _svdvals(M)
    return BlockSplitReport(
        n_cells=len(grid.cells),
        frobenius_rel_error=err,
        mask_exclusive=exclusive,
        schatten_blocks={a: math.fsum(powers[a]) ** (1.0 / a) if powers[a]
                         else 0.0 for a in alphas},
        schatten_full={a: schatten_sum(spec_full, a) for a in alphas},
        per_block=per_block,
    )

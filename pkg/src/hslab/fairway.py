"""The fairway map: the point sigma(t) splitting [a(t), b(t)] into halves of
equal v**p' mass, and its inverse.

Both directions reduce to monotone root-finds on the cumulative mass
S(y) = integral of v**p' up to y:

* sigma(t) solves S(s) = (S(a(t)) + S(b(t))) / 2, i.e. a quantile of S;
* sigma^{-1}(y) solves S(a(t)) + S(b(t)) = 2 S(y) in t, which is strictly
  increasing in t, so no nested fairway evaluations are ever needed.
"""

from __future__ import annotations

import numpy as np

from .errors import BracketError, ZeroMassError
from .funcs import (
    BoundaryPair,
    CumulativeIntegral,
    WeightPair,
    integrate_power,
    invert_monotone,
)

__all__ = ["FairwayMap"]


class FairwayMap:
    """Computable fairway sigma and inverse for one boundary/weight pair.

    When a CumulativeIntegral cache for v**p' is supplied, bulk queries run
    vectorised against it; otherwise every call falls back to direct adaptive
    quadrature (slower, identical contract).
    """

    def __init__(self, boundaries: BoundaryPair, weights: WeightPair,
                 tol_fair: float = 1e-9, tol_inv: float = 1e-12,
                 vcum: CumulativeIntegral | None = None):
        self.boundaries = boundaries
        self.weights = weights
        self.tol_fair = tol_fair
        self.tol_inv = tol_inv
        self.vcum = vcum
        self._pp = weights.p_prime

    # -- mass helpers ---------------------------------------------------------

    def _mass(self, y1: float, y2: float) -> float:
        if self.vcum is not None:
            return self.vcum.between(y1, y2)
        return integrate_power(self.weights.v, self._pp, y1, y2)

    # -- forward map ------------------------------------------------------------

    def sigma(self, t: float) -> float:
        """Balance point s in (a(t), b(t)) with equal v**p' mass on both sides."""
        if t <= 0:
            raise ValueError(f"fairway needs t > 0, got {t}")
        lo = float(self.boundaries.a(t))
        hi = float(self.boundaries.b(t))
        total = self._mass(lo, hi)
        if total <= 0.0:
            raise ZeroMassError(f"no v**p' mass on [a({t}), b({t})] = [{lo}, {hi}]")
        half = 0.5 * total
        s = invert_monotone(lambda s_: self._mass(lo, s_), half, lo, hi,
                            tol=min(self.tol_fair, 1e-10) * 0.01)
        return self._polish(s, lo, hi, total)

    def _polish(self, s: float, lo: float, hi: float, total: float) -> float:
        """Newton steps on the balance residual with the local density."""
        for _ in range(4):
            resid = self._mass(lo, s) - self._mass(s, hi)
            if abs(resid) <= 0.25 * self.tol_fair * total:
                break
            dens = float(self.weights.v(s)) ** self._pp
            if dens <= 0.0:
                break
            step = 0.5 * resid / dens
            s_new = s - step
            if not lo < s_new < hi:
                break
            s = s_new
        return s

    def sigma_many(self, ts: np.ndarray) -> np.ndarray:
        """Vectorised fairway values; requires the v**p' cache."""
        ts = np.asarray(ts, dtype=float)
        if self.vcum is None:
            return np.array([self.sigma(float(t)) for t in ts.ravel()]).reshape(ts.shape)
        sa = self.vcum.at_many(self.boundaries.a(ts))
        sb = self.vcum.at_many(self.boundaries.b(ts))
        return self.vcum.quantile_many(0.5 * (sa + sb))

    def balance_residual(self, t: float) -> float:
        """Relative balance defect of the computed sigma(t); diagnostic."""
        lo = float(self.boundaries.a(t))
        hi = float(self.boundaries.b(t))
        total = self._mass(lo, hi)
        if total <= 0.0:
            raise ZeroMassError(f"no v**p' mass on [{lo}, {hi}]")
        s = self.sigma(t)
        return abs(self._mass(lo, s) - self._mass(s, hi)) / total

    # -- inverse map ------------------------------------------------------------

    def sigma_inverse(self, y: float, bracket: tuple[float, float] | None = None) -> float:
        """The t with sigma(t) = y.

        Since a(t) < sigma(t) < b(t), the root is bracketed by
        [b^{-1}(y), a^{-1}(y)]; the balance h(t) = S(a(t)) + S(b(t)) - 2 S(y)
        is increasing in t, so a plain monotone solve applies.
        """
        if bracket is None:
            lo = float(self.boundaries.b.inverse(y))
            hi = float(self.boundaries.a.inverse(y))
        else:
            lo, hi = bracket
        if not lo < hi:
            raise BracketError(f"degenerate sigma-inverse bracket [{lo}, {hi}]")

        def h(t: float) -> float:
            return (self._mass(y, float(self.boundaries.b(t)))
                    - self._mass(float(self.boundaries.a(t)), y))

        t = invert_monotone(h, 0.0, lo, hi, tol=self.tol_inv * max(1.0, self._mass(
            float(self.boundaries.a(hi)), float(self.boundaries.b(hi)))))
        return t

    def sigma_inverse_many(self, ys: np.ndarray, n_iter: int = 80) -> np.ndarray:
        """Vectorised inverse via bisection on the balance function."""
        ys = np.asarray(ys, dtype=float)
        if self.vcum is None:
            return np.array([self.sigma_inverse(float(y)) for y in ys.ravel()]
                            ).reshape(ys.shape)
        lo = np.asarray(self.boundaries.b.inverse(ys), dtype=float).copy()
        hi = np.asarray(self.boundaries.a.inverse(ys), dtype=float).copy()
        target = 2.0 * self.vcum.at_many(ys)
        for _ in range(n_iter):
            mid = 0.5 * (lo + hi)
            h = (self.vcum.at_many(self.boundaries.a(mid))
                 + self.vcum.at_many(self.boundaries.b(mid)) - target)
            below = h < 0
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)

    # -- diagnostics --------------------------------------------------------------

    def monotone_on(self, ts: np.ndarray) -> bool:
        """Empirical strict-monotonicity check of sigma on a sample grid."""
        vals = self.sigma_many(np.asarray(ts, dtype=float))
        return bool(np.all(np.diff(vals) > 0))

"""The live problem bundle: one configured boundary/weight setup plus the
lazily built caches (cumulative integrals, fairway, grid) every other module
works against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .fairway import FairwayMap
from .funcs import BoundaryPair, CumulativeIntegral, WeightPair
from .grids import GridSystem, build_grid, xi_sequence

__all__ = ["Tolerances", "Resolution", "Constants", "Problem"]


@dataclass(frozen=True)
class Tolerances:
    tol_inv: float = 1e-12
    tol_quad: float = 1e-10
    tol_fair: float = 1e-9
    tol_part: float = 1e-3
    tail_tol: float = 1e-6


@dataclass(frozen=True)
class Resolution:
    nx: int = 800           # x nodes of the global discretisation
    ny: int = 1600          # y node target (breakpoint panels enforce a floor)
    k_nx: int = 96          # x nodes of local oscillation-norm matrices
    k_ny: int = 192
    sup_samples: int = 256  # log samples per cell for the sup functionals
    per_decade: int = 64    # cumulative-cache anchor density

    MAX_NX = 4000
    MAX_NY = 8000

    def __post_init__(self):
        if self.nx > self.MAX_NX or self.ny > self.MAX_NY:
            raise ConfigError(
                f"resolution {self.nx}x{self.ny} exceeds hard cap "
                f"{self.MAX_NX}x{self.MAX_NY}"
            )

    def doubled(self) -> "Resolution":
        return Resolution(
            nx=min(2 * self.nx, self.MAX_NX), ny=min(2 * self.ny, self.MAX_NY),
            k_nx=2 * self.k_nx, k_ny=2 * self.k_ny,
            sup_samples=2 * self.sup_samples, per_decade=2 * self.per_decade,
        )


@dataclass(frozen=True)
class Constants:
    """Opaque two-sided norm-equivalence constants; configuration only,
    never asserted against."""

    beta_p: float = 1.0
    gamma_p: float = 1.0


@dataclass
class Problem:
    boundaries: BoundaryPair
    weights: WeightPair
    window: tuple[float, float]
    alphas: tuple[float, ...] = (2.0,)
    tol: Tolerances = field(default_factory=Tolerances)
    res: Resolution = field(default_factory=Resolution)
    constants: Constants = field(default_factory=Constants)
    seed: int = 0

    _xi: np.ndarray | None = field(default=None, repr=False)
    _k_min: int | None = field(default=None, repr=False)
    _vcum: CumulativeIntegral | None = field(default=None, repr=False)
    _wcum: CumulativeIntegral | None = field(default=None, repr=False)
    _fairway: FairwayMap | None = field(default=None, repr=False)
    _grid: GridSystem | None = field(default=None, repr=False)

    def __post_init__(self):
        lo, hi = self.window
        if not 0 < lo < hi < math.inf:
            raise ConfigError(f"window must satisfy 0 < lo < hi, got {self.window}")

    # -- derived geometry -------------------------------------------------------

    @property
    def p(self) -> float:
        return self.weights.p

    @property
    def p_prime(self) -> float:
        return self.weights.p_prime

    def _xi_ext(self) -> tuple[np.ndarray, int]:
        if self._xi is None:
            self._xi, self._k_min = xi_sequence(self.boundaries, self.window)
        return self._xi, self._k_min

    @property
    def hull(self) -> tuple[float, float]:
        xi, _ = self._xi_ext()
        return float(xi[0]), float(xi[-1])

    def extended_hull(self) -> tuple[float, float]:
        """Hull padded by one orbit cell on each side (cache coverage)."""
        xi, _ = self._xi_ext()
        lo = float(self.boundaries.b.inverse(self.boundaries.a(xi[0])))
        hi = float(self.boundaries.a.inverse(self.boundaries.b(xi[-1])))
        return lo, hi

    # -- caches -------------------------------------------------------------------

    @property
    def vcum(self) -> CumulativeIntegral:
        if self._vcum is None:
            lo, hi = self.extended_hull()
            y_lo = float(self.boundaries.a(lo)) * (1 - 1e-9)
            y_hi = float(self.boundaries.b(hi)) * (1 + 1e-9)
            self._vcum = CumulativeIntegral(self.weights.v, self.p_prime,
                                            y_lo, y_hi,
                                            per_decade=self.res.per_decade)
        return self._vcum

    @property
    def wcum(self) -> CumulativeIntegral:
        if self._wcum is None:
            lo, hi = self.extended_hull()
            self._wcum = CumulativeIntegral(self.weights.w, self.p,
                                            lo * (1 - 1e-9), hi * (1 + 1e-9),
                                            per_decade=self.res.per_decade)
        return self._wcum

    @property
    def fairway(self) -> FairwayMap:
        if self._fairway is None:
            self._fairway = FairwayMap(self.boundaries, self.weights,
                                       tol_fair=self.tol.tol_fair,
                                       tol_inv=self.tol.tol_inv,
                                       vcum=self.vcum)
        return self._fairway

    @property
    def grid(self) -> GridSystem:
        if self._grid is None:
            self._grid = build_grid(self.boundaries, self.fairway, self.window)
        return self._grid

    def v_is_zero(self) -> bool:
        return self.weights.v.is_zero()

    def w_is_zero(self) -> bool:
        return self.weights.w.is_zero()

    def with_resolution(self, res: Resolution) -> "Problem":
        """Fresh problem sharing the configuration but not the caches."""
        return Problem(boundaries=self.boundaries, weights=self.weights,
                       window=self.window, alphas=self.alphas, tol=self.tol,
                       res=res, constants=self.constants, seed=self.seed)

    def with_weights(self, weights: WeightPair) -> "Problem":
        return Problem(boundaries=self.boundaries, weights=weights,
                       window=self.window, alphas=self.alphas, tol=self.tol,
                       res=self.res, constants=self.constants, seed=self.seed)

    def describe(self) -> dict:
        return {
            "boundaries": self.boundaries.describe(),
            "weights": self.weights.describe(),
            "window": list(self.window),
            "alphas": list(self.alphas),
            "seed": self.seed,
        }

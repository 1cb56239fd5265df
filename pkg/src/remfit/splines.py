"""B-spline bases, identifiability anchoring, and difference penalties.

Each covariate enters the linear predictor either as a raw linear term or
as a smooth curve represented in a clamped B-spline basis with a
second-order difference penalty on adjacent coefficients.  Smooth curves
are anchored to zero at the covariate value 0 (clamped into the observed
range) by subtracting the basis row there, which keeps the penalty
structure intact.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import BSpline

from .errors import DataValidationError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SplineConfig:
    """Requested basis dimension and degree for one smooth term."""

    n_basis: int = 10
    degree: int = 3

    def __post_init__(self):
        if self.degree < 1:
            raise DataValidationError("spline degree must be >= 1")
        if self.n_basis < self.degree + 1:
            raise DataValidationError("n_basis must be at least degree + 1")


def difference_matrix(k: int, order: int = 2) -> np.ndarray:
    """Recursive difference matrix of the given order, shape (k-order, k)."""
    d = np.eye(k)
    for o in range(order):
        first = -np.eye(k - o - 1, k - o) + np.eye(k - o - 1, k - o, k=1)
        d = first @ d
    return d


def penalty_block(k: int) -> np.ndarray:
    """Second-order difference penalty, rank k-2, nullspace {constant, linear}."""
    d2 = difference_matrix(k, order=2)
    return d2.T @ d2


@dataclass(frozen=True)
class LinearTerm:
    """Raw covariate column; the effect is a line through the origin."""

    name: str
    covariate: int
    lo: float = 0.0
    hi: float = 1.0

    dim = 1
    is_smooth = False

    def rows(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float).reshape(-1, 1)

    def penalty(self) -> np.ndarray:
        return np.zeros((1, 1))


@dataclass(frozen=True)
class SmoothTerm:
    """Clamped B-spline basis over the observed range of one covariate.

    ``anchor`` holds the basis row at x=0 (clamped into range) once the
    identifiability shift has been applied; evaluation then returns
    B(x) - B(0) so the fitted curve is exactly zero at the anchor.
    """

    name: str
    covariate: int
    knots: np.ndarray
    degree: int
    lo: float
    hi: float
    anchor: np.ndarray | None = field(default=None)

    is_smooth = True

    @property
    def dim(self) -> int:
        return len(self.knots) - self.degree - 1

    def raw_rows(self, x: np.ndarray) -> np.ndarray:
        x = np.clip(np.asarray(x, dtype=float), self.lo, self.hi)
        return BSpline.design_matrix(x, self.knots, self.degree).toarray()

    def rows(self, x: np.ndarray) -> np.ndarray:
        out = self.raw_rows(x)
        if self.anchor is not None:
            out -= self.anchor
        return out

    def penalty(self) -> np.ndarray:
        return penalty_block(self.dim)


def build_basis(config: SplineConfig, observed: np.ndarray, name: str = "x",
                covariate: int = 0) -> SmoothTerm:
    """Spline scaffold spanning the observed covariate range.

    Interior knots sit at equally spaced quantiles of the observed values;
    duplicates collapse, shrinking the effective dimension for heavily
    tied data.  Raises on a degenerate (constant) range.
    """
    observed = np.asarray(observed, dtype=float)
    lo, hi = float(observed.min()), float(observed.max())
    if not hi > lo:
        raise DataValidationError(f"degenerate range for {name}: all values equal {lo}")
    n_interior = config.n_basis - config.degree - 1
    if n_interior > 0:
        qs = np.linspace(0.0, 1.0, n_interior + 2)[1:-1]
        interior = np.quantile(observed, qs)
        interior = np.unique(interior[(interior > lo) & (interior < hi)])
    else:
        interior = np.empty(0)
    knots = np.concatenate(
        [np.full(config.degree + 1, lo), interior, np.full(config.degree + 1, hi)]
    )
    term = SmoothTerm(name=name, covariate=covariate, knots=knots,
                      degree=config.degree, lo=lo, hi=hi)
    if term.dim < config.n_basis:
        log.info("term %s: %d tied quantile knots dropped, basis dimension %d",
                 name, config.n_basis - term.dim, term.dim)
    return term


def apply_identifiability(term: SmoothTerm) -> SmoothTerm:
    """Anchor the curve to zero at x=0 (clamped into the observed range)."""
    anchor = term.raw_rows(np.array([0.0]))[0]
    return replace(term, anchor=anchor)


def make_term(config: SplineConfig, observed: np.ndarray, name: str,
              covariate: int) -> LinearTerm | SmoothTerm:
    """Smooth term over the observed values, demoted to linear when the
    data cannot support a spline (constant range or too few distinct values)."""
    observed = np.asarray(observed, dtype=float)
    lo, hi = float(observed.min()), float(observed.max())
    if not hi > lo:
        log.warning("term %s: degenerate range, demoted to linear", name)
        return LinearTerm(name=name, covariate=covariate, lo=lo, hi=hi)
    if len(np.unique(observed)) < config.n_basis:
        log.warning("term %s: fewer distinct values than basis functions, demoted to linear",
                    name)
        return LinearTerm(name=name, covariate=covariate, lo=lo, hi=hi)
    return apply_identifiability(build_basis(config, observed, name=name, covariate=covariate))


class ModelBasis:
    """Maps raw covariate matrices to the expanded coefficient design.

    Holds one term per covariate, in covariate order.  For an all-linear
    model the expansion is the identity.
    """

    def __init__(self, terms):
        self.terms = list(terms)
        self.slices = []
        self.dim = 0
        for t in self.terms:
            self.slices.append(slice(self.dim, self.dim + t.dim))
            self.dim += t.dim
        self._identity = all(not t.is_smooth for t in self.terms) and [
            t.covariate for t in self.terms
        ] == list(range(len(self.terms)))

    @property
    def is_identity(self) -> bool:
        return self._identity

    @property
    def smooth_terms(self):
        return [t for t in self.terms if t.is_smooth]

    def expand(self, x: np.ndarray) -> np.ndarray:
        """Expanded design rows; returns the input unchanged for all-linear."""
        if self._identity and x.shape[1] == self.dim:
            return x
        return np.hstack([t.rows(x[:, t.covariate]) for t in self.terms])

    def penalty(self, lambdas) -> np.ndarray:
        """Block-diagonal penalty; ``lambdas`` aligns with smooth terms in order."""
        lambdas = np.atleast_1d(np.asarray(lambdas, dtype=float))
        if lambdas.size != len(self.smooth_terms):
            raise DataValidationError(
                f"expected {len(self.smooth_terms)} smoothing parameters, got {lambdas.size}"
            )
        if np.any(lambdas < 0):
            raise DataValidationError("smoothing parameters must be nonnegative")
        k = np.zeros((self.dim, self.dim))
        s_idx = 0
        for t, sl in zip(self.terms, self.slices):
            if t.is_smooth:
                k[sl, sl] = lambdas[s_idx] * t.penalty()
                s_idx += 1
        return k

    def gauge_vectors(self) -> list[np.ndarray]:
        """Unit vectors spanning the exact null directions of anchored blocks.

        Every anchored spline block is invariant under adding a constant to
        its coefficients (rows sum to zero and so does the penalty gradient),
        so the per-block one-vector is pure gauge.
        """
        out = []
        for t, sl in zip(self.terms, self.slices):
            if t.is_smooth and t.anchor is not None:
                v = np.zeros(self.dim)
                v[sl] = 1.0 / np.sqrt(t.dim)
                out.append(v)
        return out


def linear_basis(n_covariates: int, names=None) -> ModelBasis:
    """All-linear model basis over the raw covariates."""
    names = names or [f"x{q + 1}" for q in range(n_covariates)]
    return ModelBasis([LinearTerm(name=names[q], covariate=q) for q in range(n_covariates)])

"""The two-parameter log-det divergence family on SPD matrices.

The family evaluates, for SPD X and Y and same-sign parameters (alpha, beta),

    D(X, Y; a, b) = (1/(a*b)) * logdet( (a*(X Y^-1)^b + b*(X Y^-1)^-a) / (a+b) )

which depends on (X, Y) only through the generalized eigenvalues of the pair.
Named members of the family (squared affine-invariant distance, Jensen-Bregman
log-det, Jeffreys KL, Burg) are exposed with their own closed forms so that
each can be tested independently of the parametric formula.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDivergence, DimensionMismatch, InvalidInput, NotPositiveDefinite
from .linalg import as_square, gen_eigvals

# Learned divergence parameters are kept at or above this floor: below it the
# 1/(alpha*beta) prefactor amplifies rounding error. Direct evaluation of
# abld() accepts any strictly positive pair so limit behavior can be probed.
PARAM_FLOOR = 1e-3

VARIANTS = ("S", "V", "N", "A", "B")


def _check_positive_params(alpha: float, beta: float) -> None:
    if not (np.isfinite(alpha) and np.isfinite(beta)):
        raise InvalidInput("alpha and beta must be finite")
    if alpha <= 0 or beta <= 0:
        raise InvalidInput(
            "alpha and beta must be strictly positive; the origin case is "
            "abld_airm and mixed signs are diagnosed by degeneracy_margin"
        )


def abld_eigen(lam: np.ndarray, alpha: float, beta: float) -> float:
    """Divergence evaluated on precomputed generalized eigenvalues."""
    lam = np.asarray(lam, dtype=float)
    core = alpha * lam ** beta + beta * lam ** (-alpha)
    if not np.all(np.isfinite(core)) or np.any(core <= 0):
        raise DegenerateDivergence("log argument is not positive definite")
    d = lam.size
    return float((np.log(core).sum() - d * np.log(alpha + beta)) / (alpha * beta))


def abld(x, y, alpha: float, beta: float) -> float:
    """Two-parameter log-det divergence between SPD matrices X and Y.

    Parameters
    ----------
    x, y : ndarray
        SPD matrices of equal dimension.
    alpha, beta : float
        Strictly positive divergence parameters. Learned parameters live in
        [PARAM_FLOOR, ...], but small positive values are accepted here so
        limits toward the named special cases can be evaluated.

    Returns
    -------
    float
        Nonnegative divergence; zero iff x == y.
    """
    _check_positive_params(alpha, beta)
    return abld_eigen(gen_eigvals(x, y), alpha, beta)


def abld_airm(x, y) -> float:
    """Exact limit of the divergence family at the origin (alpha, beta -> 0).

    Equals half the squared affine-invariant Riemannian distance,
    0.5 * ||Log(X^-1/2 Y X^-1/2)||_F^2, and is symmetric in its arguments.
    """
    lam = gen_eigvals(x, y)
    return float(0.5 * np.square(np.log(lam)).sum())


def _slogdet_pd(a, what: str) -> float:
    sign, logdet = np.linalg.slogdet(a)
    if sign <= 0:
        raise NotPositiveDefinite(f"{what} has non-positive determinant")
    return logdet


def jbld(x, y) -> float:
    """Jensen-Bregman log-det divergence logdet((X+Y)/2) - logdet(XY)/2."""
    x = as_square(x, "X")
    y = as_square(y, "Y")
    if x.shape != y.shape:
        raise DimensionMismatch(f"shapes differ: {x.shape} vs {y.shape}")
    mid = _slogdet_pd((x + y) / 2.0, "(X+Y)/2")
    return float(mid - 0.5 * (_slogdet_pd(x, "X") + _slogdet_pd(y, "Y")))


def burg(x, y) -> float:
    """Burg matrix divergence tr(X Y^-1) - logdet(X Y^-1) - d."""
    x = as_square(x, "X")
    y = as_square(y, "Y")
    if x.shape != y.shape:
        raise DimensionMismatch(f"shapes differ: {x.shape} vs {y.shape}")
    d = x.shape[0]
    tr = float(np.trace(np.linalg.solve(y, x)))
    logdet = _slogdet_pd(x, "X") - _slogdet_pd(y, "Y")
    return float(tr - logdet - d)


def jeffreys_kl(x, y) -> float:
    """Jeffreys (symmetrized) KL divergence tr(X Y^-1 + Y X^-1)/2 - d."""
    x = as_square(x, "X")
    y = as_square(y, "Y")
    if x.shape != y.shape:
        raise DimensionMismatch(f"shapes differ: {x.shape} vs {y.shape}")
    d = x.shape[0]
    t1 = float(np.trace(np.linalg.solve(y, x)))
    t2 = float(np.trace(np.linalg.solve(x, y)))
    return 0.5 * (t1 + t2) - d


def degeneracy_margin(x, y, alpha: float, beta: float) -> np.ndarray:
    """Per-eigenvalue slack before the divergence degenerates, mixed signs only.

    With alpha and beta of opposite signs the log-det argument stays positive
    definite only while every eigenvalue of X^-1 Y clears the bound
    |alpha/beta|^(1/(alpha+beta)) (for alpha > 0) from above, respectively
    |beta/alpha|^(1/(alpha+beta)) (for alpha < 0) from below. Returns the
    signed slack per eigenvalue; any non-positive entry marks a degenerate
    pairing.
    """
    if not (np.isfinite(alpha) and np.isfinite(beta)) or alpha == 0 or beta == 0:
        raise InvalidInput("alpha and beta must be finite and nonzero")
    if alpha * beta > 0:
        raise InvalidInput("slack bound applies to opposite-sign parameters only")
    if alpha + beta == 0:
        raise InvalidInput("alpha + beta must be nonzero")
    # eig(X^-1 Y) shares the spectrum of Y X^-1.
    lam = gen_eigvals(y, x)
    if alpha > 0:
        bound = abs(alpha / beta) ** (1.0 / (alpha + beta))
        return lam - bound
    bound = abs(beta / alpha) ** (1.0 / (alpha + beta))
    return bound - lam


@dataclass(frozen=True)
class AbldParams:
    """Per-atom divergence parameters with a sharing mode.

    Modes: "S" one scalar pair shared by all atoms, "V" per-atom tied
    (alpha == beta), "N" per-atom free, "A" frozen at the origin limit,
    "B" frozen at alpha = beta = 1.
    """

    alpha: np.ndarray
    beta: np.ndarray
    mode: str

    def __post_init__(self):
        if self.mode not in VARIANTS:
            raise InvalidInput(f"unknown mode {self.mode!r}, expected one of {VARIANTS}")
        alpha = np.asarray(self.alpha, dtype=float).reshape(-1).copy()
        beta = np.asarray(self.beta, dtype=float).reshape(-1).copy()
        if alpha.shape != beta.shape or alpha.size == 0:
            raise InvalidInput("alpha and beta must be equal-length nonempty vectors")
        if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(beta))):
            raise InvalidInput("parameters must be finite")
        if self.mode == "A":
            if np.any(alpha != 0) or np.any(beta != 0):
                raise InvalidInput("mode A pins alpha = beta = 0")
        else:
            if alpha.min() < PARAM_FLOOR or beta.min() < PARAM_FLOOR:
                raise InvalidInput(f"parameters below floor {PARAM_FLOOR}")
            if self.mode == "B" and (np.any(alpha != 1.0) or np.any(beta != 1.0)):
                raise InvalidInput("mode B pins alpha = beta = 1")
            if self.mode == "S" and (
                np.any(alpha != alpha[0]) or np.any(beta != beta[0])
            ):
                raise InvalidInput("mode S requires one shared pair")
            if self.mode == "V" and np.any(alpha != beta):
                raise InvalidInput("mode V requires alpha == beta per atom")
        alpha.flags.writeable = False
        beta.flags.writeable = False
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @property
    def n(self) -> int:
        return self.alpha.size

    @property
    def is_airm(self) -> bool:
        return self.mode == "A"

    @classmethod
    def scalar(cls, alpha: float, beta: float, n: int) -> "AbldParams":
        return cls(np.full(n, float(alpha)), np.full(n, float(beta)), "S")

    @classmethod
    def tied(cls, values) -> "AbldParams":
        v = np.asarray(values, dtype=float)
        return cls(v, v.copy(), "V")

    @classmethod
    def free(cls, alpha, beta) -> "AbldParams":
        return cls(np.asarray(alpha, float), np.asarray(beta, float), "N")

    @classmethod
    def airm(cls, n: int) -> "AbldParams":
        return cls(np.zeros(n), np.zeros(n), "A")

    @classmethod
    def burg(cls, n: int) -> "AbldParams":
        return cls(np.ones(n), np.ones(n), "B")

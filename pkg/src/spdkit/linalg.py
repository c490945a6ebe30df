"""Dense symmetric/SPD linear algebra.

Every spectral function here goes through a single symmetric
eigendecomposition followed by a spectral mapping; nothing is computed by
series expansion. Outputs of SPD-returning operations are re-symmetrized so
downstream code can rely on exact symmetry.
"""

from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np

from .errors import DimensionMismatch, InvalidInput, NotPositiveDefinite

# Absolute floor on eigenvalues below which a matrix is not accepted as SPD.
PD_TOL = 1e-10

# Relative tolerance for the symmetry check max|A - A.T| <= SYM_TOL * max|A|.
SYM_TOL = 1e-12


class SymEig(NamedTuple):
    """Spectral decomposition A = Q diag(w) Q^T with w ascending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def sym(a: np.ndarray) -> np.ndarray:
    """Symmetric part (A + A^T) / 2."""
    return 0.5 * (a + a.T)


def as_square(a, name: str = "matrix") -> np.ndarray:
    """Validate a finite square 2-D float array."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInput(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInput(f"{name} contains non-finite entries")
    return a


def check_symmetric(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    scale = np.abs(a).max() if a.size else 0.0
    if scale > 0 and np.abs(a - a.T).max() > SYM_TOL * scale:
        raise InvalidInput(f"{name} is not symmetric")
    return a


def sym_eig(a) -> SymEig:
    """Eigendecomposition of a symmetric matrix with a fixed sign convention.

    Eigenvalues come back ascending. Each eigenvector is flipped, if needed,
    so that its largest-magnitude entry is positive; this makes downstream
    encodings and gradients bit-reproducible across runs.
    """
    a = check_symmetric(as_square(a))
    w, q = np.linalg.eigh(a)
    idx = np.argmax(np.abs(q), axis=0)
    signs = np.sign(q[idx, np.arange(q.shape[1])])
    signs[signs == 0] = 1.0
    return SymEig(w, q * signs)


def schur_sym(a) -> SymEig:
    """Spectral decomposition via the symmetric Schur route.

    For symmetric input the Schur form *is* the spectral decomposition, so
    this shares one factorization with :func:`sym_eig`; it exists as a named
    entry point for callers that think in terms of Schur factors.
    """
    return sym_eig(a)


def spd_eig(a, pd_tol: float = PD_TOL) -> SymEig:
    """Eigendecomposition that also enforces positive definiteness."""
    e = sym_eig(a)
    if e.eigenvalues[0] <= pd_tol:
        raise NotPositiveDefinite(
            f"smallest eigenvalue {e.eigenvalues[0]:.3e} <= {pd_tol:.1e}"
        )
    return e


def _spectral(a, fn: Callable[[np.ndarray], np.ndarray], require_pd: bool) -> np.ndarray:
    e = spd_eig(a) if require_pd else sym_eig(a)
    q = e.eigenvectors
    return sym((q * fn(e.eigenvalues)) @ q.T)


def spd_power(a, p: float) -> np.ndarray:
    """Real matrix power A^p of an SPD matrix."""
    return _spectral(a, lambda w: w ** p, require_pd=True)


def spd_sqrt(a) -> np.ndarray:
    return spd_power(a, 0.5)


def spd_invsqrt(a) -> np.ndarray:
    return spd_power(a, -0.5)


def spd_log(a) -> np.ndarray:
    """Matrix logarithm of an SPD matrix (symmetric output)."""
    return _spectral(a, np.log, require_pd=True)


def spd_exp(s) -> np.ndarray:
    """Matrix exponential of a symmetric matrix (SPD output)."""
    return _spectral(s, np.exp, require_pd=False)


def gen_eigvals(x, y) -> np.ndarray:
    """Generalized eigenvalues of the SPD pair (X, Y), i.e. eig(X Y^-1).

    Computed through the congruent symmetric form eig(Y^-1/2 X Y^-1/2) for
    stability. All values are strictly positive and returned ascending.
    """
    x = as_square(x, "X")
    y = as_square(y, "Y")
    if x.shape != y.shape:
        raise DimensionMismatch(f"shapes differ: {x.shape} vs {y.shape}")
    yi = spd_invsqrt(y)
    w = np.linalg.eigvalsh(sym(yi @ x @ yi))
    if w[0] <= 0:
        raise NotPositiveDefinite("generalized eigenvalue <= 0; X is not SPD")
    return w


def regularize(a, eps: float | None = None) -> np.ndarray:
    """Add eps * I (default 1e-8 * trace(A) / d) to push a matrix into SPD."""
    a = as_square(a)
    if eps is None:
        eps = 1e-8 * np.trace(a) / a.shape[0]
    return a + eps * np.eye(a.shape[0])


def is_spd(a, pd_tol: float = PD_TOL) -> bool:
    """True if a is symmetric with smallest eigenvalue above pd_tol."""
    try:
        spd_eig(a, pd_tol)
    except (InvalidInput, NotPositiveDefinite):
        return False
    return True


def random_spd(dim: int, rng: np.random.Generator, log_spread: float = 1.0) -> np.ndarray:
    """Random SPD matrix with log-eigenvalues uniform in [-log_spread, log_spread]."""
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    w = np.exp(rng.uniform(-log_spread, log_spread, size=dim))
    return sym((q * w) @ q.T)

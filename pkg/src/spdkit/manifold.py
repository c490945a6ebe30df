"""Conjugate-gradient descent on the SPD manifold and on positive scalars.

The manifold machinery uses the affine-invariant geometry: tangent vectors at
a base point B are symmetric matrices, the inner product is
<u, v>_B = tr(B^-1 u B^-1 v), points move along the exponential-map
retraction, and directions are carried between base points by the congruence
transport Z P Z^T with Z = (Y X^-1)^(1/2).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .divergence import PARAM_FLOOR
from .errors import (
    DimensionMismatch,
    InvalidGradient,
    InvalidInput,
    InvalidStart,
    StepOverflow,
)
from .linalg import as_square, spd_invsqrt, spd_sqrt, sym, sym_eig

# Upper clamp for learned divergence parameters; keeps lambda**alpha inside
# double range for eigenvalue spreads up to about 1e6.
PARAM_CEILING = 10.0

# exp() overflows float64 just above this exponent.
_EXP_LIMIT = 700.0


@dataclass(frozen=True)
class TangentVector:
    """A symmetric direction attached to an SPD base point."""

    base: np.ndarray
    value: np.ndarray

    def __post_init__(self):
        base = as_square(self.base, "base")
        value = as_square(self.value, "value")
        if base.shape != value.shape:
            raise DimensionMismatch(
                f"base {base.shape} and value {value.shape} differ"
            )
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "value", sym(value))


@dataclass
class RcgConfig:
    """Stopping rules and Armijo line-search constants for the CG loop."""

    max_iters: int = 300
    rel_obj_tol: float = 1e-6
    grad_norm_tol: float = 1e-6
    c1: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 30
    initial_step: float = 1.0
    window: int = 5

    def __post_init__(self):
        if self.max_iters < 1:
            raise InvalidInput("max_iters must be at least 1")
        for name in ("rel_obj_tol", "grad_norm_tol", "c1", "shrink", "initial_step"):
            if getattr(self, name) <= 0:
                raise InvalidInput(f"{name} must be positive")


def metric_inner(base: np.ndarray, u: np.ndarray, v: np.ndarray) -> float:
    """Affine-invariant inner product tr(B^-1 u B^-1 v) at base point B."""
    bu = np.linalg.solve(base, u)
    bv = np.linalg.solve(base, v)
    return float(np.sum(bu * bv.T))


def riemannian_grad(base, egrad) -> TangentVector:
    """Riemannian gradient B sym(egrad) B from the Euclidean gradient."""
    base = as_square(base, "base")
    egrad = as_square(egrad, "egrad")
    if base.shape != egrad.shape:
        raise DimensionMismatch(f"base {base.shape} vs egrad {egrad.shape}")
    return TangentVector(base, base @ sym(egrad) @ base)


def retract(base, xi: TangentVector, step: float = 1.0) -> np.ndarray:
    """Map a scaled tangent vector onto the manifold.

    Computes B^(1/2) Exp(step * B^(-1/2) xi B^(-1/2)) B^(1/2), which is SPD for
    any step. Raises StepOverflow when the exponent would overflow float64 so
    the caller can shrink the step.
    """
    bs = spd_sqrt(base)
    bis = spd_invsqrt(base)
    inner = sym(bis @ xi.value @ bis) * step
    w, q = sym_eig(inner)
    if np.abs(w).max() > _EXP_LIMIT:
        raise StepOverflow(f"retraction exponent {np.abs(w).max():.3e} too large")
    return sym(bs @ ((q * np.exp(w)) @ q.T) @ bs)


def parallel_transport(p: TangentVector, x, y) -> TangentVector:
    """Carry a tangent vector from base X to base Y along the geodesic.

    Uses Z P Z^T with Z = (Y X^-1)^(1/2); the transport is an isometry of the
    affine-invariant metric and is the identity when X == Y.
    """
    x = as_square(x, "X")
    y = as_square(y, "Y")
    if x.shape != y.shape or p.value.shape != x.shape:
        raise DimensionMismatch("transport endpoints and vector must share shape")
    ys = spd_sqrt(y)
    yis = spd_invsqrt(y)
    s = sym(yis @ x @ yis)
    z = ys @ spd_invsqrt(s) @ yis
    return TangentVector(y, z @ p.value @ z.T)


def rcg_minimize(objective, egrad, b0, config: RcgConfig | None = None,
                 diagnostics: list | None = None):
    """Minimize a smooth function over SPD matrices by conjugate gradient.

    Parameters
    ----------
    objective : callable
        Maps an SPD matrix to a float.
    egrad : callable
        Maps an SPD matrix to its (symmetric) Euclidean gradient.
    b0 : ndarray
        SPD starting point; the objective must be finite there.
    config : RcgConfig, optional
    diagnostics : list, optional
        When given, one dict per iteration is appended with the step size,
        gradient norm, and whether the direction was restarted to steepest
        descent.

    Returns
    -------
    (ndarray, list of float)
        Final point and the trace of objective values (never increasing up to
        the Armijo tolerance). The trace has length 1 when the start already
        satisfies the gradient tolerance.

    Notes
    -----
    Directions follow the Fletcher-Reeves rule with the previous direction
    parallel-transported to the new base point; whenever the combined
    direction fails to be a descent direction the loop restarts from steepest
    descent. Steps are chosen by Armijo backtracking along the retraction.
    """
    cfg = config or RcgConfig()
    b = sym(as_square(b0, "b0"))
    f = float(objective(b))
    if not np.isfinite(f):
        raise InvalidStart("objective is not finite at the starting point")
    trace = [f]

    grad = riemannian_grad(b, egrad(b))
    gg = metric_inner(b, grad.value, grad.value)

    def line_search(direction, dg):
        step = cfg.initial_step
        for _ in range(cfg.max_backtracks):
            try:
                cand = retract(b, direction, step)
            except StepOverflow:
                step *= cfg.shrink
                continue
            f_cand = float(objective(cand))
            if np.isfinite(f_cand) and f_cand <= f + cfg.c1 * step * dg:
                return cand, f_cand, step
            step *= cfg.shrink
        return None, None, None

    direction = TangentVector(b, -grad.value)
    for it in range(cfg.max_iters):
        gnorm = np.sqrt(max(gg, 0.0))
        if gnorm < cfg.grad_norm_tol:
            break

        dg = metric_inner(b, direction.value, grad.value)
        restarted = False
        if not dg < 0:
            direction = TangentVector(b, -grad.value)
            dg = -gg
            restarted = True

        b_new, f_new, step = line_search(direction, dg)
        if b_new is None and not restarted:
            direction = TangentVector(b, -grad.value)
            dg = -gg
            restarted = True
            b_new, f_new, step = line_search(direction, dg)
        if b_new is None:
            break

        grad_new = riemannian_grad(b_new, egrad(b_new))
        gg_new = metric_inner(b_new, grad_new.value, grad_new.value)
        eta = gg_new / gg if gg > 0 else 0.0
        carried = parallel_transport(direction, b, b_new)
        direction = TangentVector(b_new, -grad_new.value + eta * carried.value)

        b, f, grad, gg = b_new, f_new, grad_new, gg_new
        trace.append(f)
        if diagnostics is not None:
            diagnostics.append(
                {
                    "iter": it,
                    "objective": f,
                    "grad_norm": float(np.sqrt(max(gg, 0.0))),
                    "step": step,
                    "restarted": restarted,
                    "descent_inner": dg,
                }
            )

        if len(trace) > cfg.window:
            prev = trace[-1 - cfg.window]
            if prev - trace[-1] <= cfg.rel_obj_tol * max(1.0, abs(prev)):
                break
    return b, trace


def positive_scalar_step(objective, theta, egrad, config: RcgConfig | None = None,
                         floor: float = PARAM_FLOOR,
                         ceiling: float = PARAM_CEILING) -> np.ndarray:
    """One Armijo-backtracked descent step on a positive parameter vector.

    The step is taken in log coordinates u = log(theta), where the chain rule
    gives du f = theta * egrad, and the result is clamped to
    [floor, ceiling] so iterates never leave the feasible box. Returns theta
    unchanged when the gradient is zero or no backtracked step passes the
    Armijo test.
    """
    cfg = config or RcgConfig()
    theta = np.asarray(theta, dtype=float).reshape(-1)
    g = np.asarray(egrad, dtype=float).reshape(-1)
    if g.shape != theta.shape:
        raise DimensionMismatch("theta and gradient lengths differ")
    if not np.all(np.isfinite(g)):
        raise InvalidGradient("gradient contains non-finite entries")
    if theta.min() < floor:
        raise InvalidInput(f"theta must be elementwise >= {floor}")

    gu = theta * g
    if not np.any(gu):
        return theta.copy()

    u = np.log(theta)
    lo, hi = np.log(floor), np.log(ceiling)
    f0 = float(objective(theta))
    step = cfg.initial_step
    for _ in range(cfg.max_backtracks):
        u_new = np.clip(u - step * gu, lo, hi)
        du = u_new - u
        slope = float(gu @ du)
        if np.any(du) and slope < 0:
            theta_new = np.exp(u_new)
            f_new = float(objective(theta_new))
            if np.isfinite(f_new) and f_new <= f0 + cfg.c1 * slope:
                return theta_new
        step *= cfg.shrink
    return theta.copy()

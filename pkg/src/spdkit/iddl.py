"""Joint learning of an SPD dictionary, divergence parameters, and classifier.

A sample X is embedded as the vector of its divergences to n learned SPD
atoms; a ridge-regression matrix W maps that encoding to one-hot class
targets. Training alternates three blocks, each of which can only lower the
objective

    0.5 * sum_i ||h_i - W v_i||^2 + gamma * ||W||_F^2

namely conjugate-gradient updates of each atom on the SPD manifold, clamped
log-space descent on the positive divergence parameters, and the closed-form
ridge solve for W.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
import struct

import numpy as np

from ._parallel import map_chunks
from .divergence import PARAM_FLOOR, VARIANTS, AbldParams
from .errors import (
    CorruptFile,
    DegenerateDivergence,
    DimensionMismatch,
    InvalidDataset,
    InvalidInput,
    NotPositiveDefinite,
    NumericalBreakdown,
    SingularSystem,
    StepOverflow,
)
from .linalg import PD_TOL, as_square, spd_power, sym
from .manifold import PARAM_CEILING, RcgConfig, positive_scalar_step, rcg_minimize


# ---------------------------------------------------------------------------
# data containers
# ---------------------------------------------------------------------------

@dataclass
class SampleFactors:
    """Per-sample spectral factors reused across gradient evaluations."""

    inv: np.ndarray
    sqrt: np.ndarray
    invsqrt: np.ndarray


@dataclass
class LabeledSpdDataset:
    """SPD samples with integer labels in [1..L].

    The per-sample inverse and square roots are computed once on first use
    and cached; they depend only on the samples, never on the model.
    """

    samples: np.ndarray
    labels: np.ndarray
    _factors: SampleFactors | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        labels = np.asarray(self.labels, dtype=int).reshape(-1)
        if samples.ndim != 3 or samples.shape[1] != samples.shape[2]:
            raise InvalidDataset(f"samples must be (N, d, d), got {samples.shape}")
        if samples.shape[0] != labels.shape[0]:
            raise InvalidDataset("samples and labels lengths differ")
        if samples.shape[0] == 0:
            raise InvalidDataset("dataset is empty")
        if not np.all(np.isfinite(samples)):
            raise InvalidDataset("samples contain non-finite entries")
        if labels.min() < 1:
            raise InvalidDataset("labels must be integers >= 1")
        self.samples = samples
        self.labels = labels

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    @property
    def label_count(self) -> int:
        return int(self.labels.max())

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.label_count + 1)[1:]

    def validate_for_training(self):
        if np.any(self.class_counts() == 0):
            missing = np.where(self.class_counts() == 0)[0] + 1
            raise InvalidDataset(f"empty class(es) {missing.tolist()} in training data")

    def factors(self) -> SampleFactors:
        if self._factors is None:
            self._factors = _compute_factors(self.samples)
        return self._factors


def _compute_factors(samples: np.ndarray) -> SampleFactors:
    w, q = np.linalg.eigh(sym_batch(samples))
    if w[:, 0].min() <= PD_TOL:
        bad = int(np.argmin(w[:, 0]))
        raise NotPositiveDefinite(
            f"sample {bad} has eigenvalue {w[bad, 0]:.3e} <= {PD_TOL:.1e}"
        )
    inv = _batched_spectral(q, 1.0 / w)
    sqrt = _batched_spectral(q, np.sqrt(w))
    invsqrt = _batched_spectral(q, 1.0 / np.sqrt(w))
    return SampleFactors(inv=inv, sqrt=sqrt, invsqrt=invsqrt)


def sym_batch(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.transpose(0, 2, 1))


def _batched_spectral(q: np.ndarray, fw: np.ndarray) -> np.ndarray:
    return sym_batch((q * fw[:, None, :]) @ q.transpose(0, 2, 1))


@dataclass
class FitHistory:
    """Objective values recorded after each block of every outer iteration."""

    initial: float
    after_dict: np.ndarray
    after_params: np.ndarray
    after_w: np.ndarray
    params_skipped: bool

    @property
    def outer_objectives(self) -> np.ndarray:
        return self.after_w

    def __len__(self) -> int:
        return len(self.after_w)


@dataclass
class IddlModel:
    """A fitted embedding-plus-classifier: atoms, divergence parameters, W."""

    atoms: np.ndarray
    params: AbldParams
    w: np.ndarray
    gamma: float
    label_count: int
    history: FitHistory | None = None

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        w = np.asarray(self.w, dtype=float)
        if atoms.ndim != 3 or atoms.shape[1] != atoms.shape[2]:
            raise InvalidInput(f"atoms must be (n, d, d), got {atoms.shape}")
        if self.params.n != atoms.shape[0]:
            raise InvalidInput("parameter count does not match atom count")
        if w.shape != (self.label_count, atoms.shape[0]):
            raise InvalidInput(
                f"w must be ({self.label_count}, {atoms.shape[0]}), got {w.shape}"
            )
        if self.gamma < 0:
            raise InvalidInput("gamma must be nonnegative")
        self.atoms = atoms
        self.w = w

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[0]

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]


# ---------------------------------------------------------------------------
# encoding
# ---------------------------------------------------------------------------

def _check_mu(mu: np.ndarray) -> np.ndarray:
    if mu[:, 0].min() <= 0 or not np.all(np.isfinite(mu)):
        bad = int(np.argmin(mu[:, 0]))
        raise NumericalBreakdown(f"congruence of sample {bad} lost definiteness")
    return mu


def _atom_eigensystem(invsqrt: np.ndarray, atom: np.ndarray):
    """Eigensystem of X^-1/2 B X^-1/2 for a batch of samples."""
    m = sym_batch(invsqrt @ atom @ invsqrt)
    mu, u = np.linalg.eigh(m)
    return _check_mu(mu), u


def _atom_eigvals(invsqrt: np.ndarray, atom: np.ndarray) -> np.ndarray:
    """Eigenvalues only; cheaper when the eigenvectors are not needed."""
    m = sym_batch(invsqrt @ atom @ invsqrt)
    return _check_mu(np.linalg.eigvalsh(m))


def _abld_from_mu(mu: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    # mu holds eig(X^-1/2 B X^-1/2); the generalized eigenvalues of (X, B)
    # are their reciprocals.
    lam = 1.0 / mu
    core = alpha * lam ** beta + beta * lam ** (-alpha)
    if not np.all(np.isfinite(core)) or np.any(core <= 0):
        bad = int(np.where(~np.all((core > 0) & np.isfinite(core), axis=1))[0][0])
        raise DegenerateDivergence(f"sample {bad}: log argument not positive")
    d = mu.shape[1]
    return (np.log(core).sum(axis=1) - d * np.log(alpha + beta)) / (alpha * beta)


def _airm_from_mu(mu: np.ndarray) -> np.ndarray:
    return 0.5 * np.square(np.log(mu)).sum(axis=1)


def _encode_column(invsqrt, atom, alpha, beta, airm) -> np.ndarray:
    def chunk(sl):
        mu = _atom_eigvals(invsqrt[sl], atom)
        return _airm_from_mu(mu) if airm else _abld_from_mu(mu, alpha, beta)

    return np.concatenate(map_chunks(chunk, invsqrt.shape[0]))


def encode_batch(samples, atoms, params: AbldParams,
                 factors: SampleFactors | None = None) -> np.ndarray:
    """Encodings of many samples, one row per sample, one column per atom."""
    samples = np.asarray(samples, dtype=float)
    atoms = np.asarray(atoms, dtype=float)
    if atoms.shape[0] != params.n:
        raise DimensionMismatch("atom count does not match parameter count")
    if samples.shape[1:] != atoms.shape[1:]:
        raise DimensionMismatch(
            f"sample dim {samples.shape[1:]} vs atom dim {atoms.shape[1:]}"
        )
    invsqrt = (factors or _compute_factors(samples)).invsqrt
    v = np.empty((samples.shape[0], params.n))
    for k in range(params.n):
        try:
            v[:, k] = _encode_column(
                invsqrt, atoms[k], params.alpha[k], params.beta[k], params.is_airm
            )
        except DegenerateDivergence as exc:
            raise DegenerateDivergence(f"atom {k}: {exc}") from exc
    return v


def encode(x, atoms, params: AbldParams) -> np.ndarray:
    """Divergences from one sample to every atom, as an n-vector."""
    x = as_square(x, "X")
    return encode_batch(x[None], atoms, params)[0]


def one_hot(labels, label_count: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=int).reshape(-1)
    h = np.zeros((labels.size, label_count))
    h[np.arange(labels.size), labels - 1] = 1.0
    return h


def objective(data: LabeledSpdDataset, model: IddlModel) -> float:
    """Full training objective at the model's current state."""
    v = encode_batch(data.samples, model.atoms, model.params, data.factors())
    h = one_hot(data.labels, model.label_count)
    r = h - v @ model.w.T
    return float(0.5 * np.sum(r * r) + model.gamma * np.sum(model.w ** 2))


def encoding_loss_grad(model: IddlModel, v, h) -> np.ndarray:
    """Gradient of the per-sample ridge loss with respect to the encoding.

    For loss 0.5 * ||h - W v||^2 this is (W v - h)^T W, an n-vector; it
    weights every divergence gradient that flows into the same encoding slot.
    """
    v = np.asarray(v, dtype=float).reshape(-1)
    h = np.asarray(h, dtype=float).reshape(-1)
    return (model.w @ v - h) @ model.w


def _all_encoding_grads(model: IddlModel, v: np.ndarray, labels) -> np.ndarray:
    h = one_hot(labels, model.label_count)
    return (v @ model.w.T - h) @ model.w


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------

def _abld_weights(mu: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    # Spectral weights of the divergence gradient with respect to the atom:
    # with t = alpha + beta, w(mu) = (mu^t - 1) / (mu * (alpha + beta * mu^t)).
    mt = mu ** (alpha + beta)
    return (mt - 1.0) / (mu * (alpha + beta * mt))


def _airm_weights(mu: np.ndarray) -> np.ndarray:
    return np.log(mu) / mu


def _weighted_atom_grad(invsqrt, atom, coeff, weight_fn) -> np.ndarray:
    """sum_i coeff_i * S_i U diag(w(mu)) U^T S_i with S_i = X_i^-1/2."""
    def chunk(sl):
        mu, u = _atom_eigensystem(invsqrt[sl], atom)
        su = invsqrt[sl] @ u
        w = weight_fn(mu) * coeff[sl, None]
        return np.tensordot(su * w[:, None, :], su, axes=([0, 2], [0, 2]))

    parts = map_chunks(chunk, invsqrt.shape[0])
    total = parts[0]
    for p in parts[1:]:
        total = total + p
    return sym(total)


def _check_not_airm(params: AbldParams):
    if params.is_airm:
        raise InvalidInput("parameters are pinned at the origin; use the *_airm path")


def grad_atom(data: LabeledSpdDataset, model: IddlModel, k: int) -> np.ndarray:
    """Full-batch Euclidean gradient of the objective with respect to atom k."""
    _check_not_airm(model.params)
    v = encode_batch(data.samples, model.atoms, model.params, data.factors())
    zk = _all_encoding_grads(model, v, data.labels)[:, k]
    alpha, beta = model.params.alpha[k], model.params.beta[k]
    return _weighted_atom_grad(
        data.factors().invsqrt,
        model.atoms[k],
        zk,
        lambda mu: _abld_weights(mu, alpha, beta),
    )


def grad_atom_reference(data: LabeledSpdDataset, model: IddlModel, k: int) -> np.ndarray:
    """Atom gradient by explicit matrix products; cross-checks grad_atom.

    Per sample, with Z = X^-1, T = Z^(1/2) B Z^(1/2), r = beta/alpha and
    t = alpha + beta, the divergence gradient is

        (r t / (alpha beta)) B^-1 Z^(-1/2) T^t (I + r T^t)^-1 Z^(1/2)
        - (1/alpha) B^-1

    which the spectral fast path collapses to three products around one
    factorization.
    """
    _check_not_airm(model.params)
    v = encode_batch(data.samples, model.atoms, model.params, data.factors())
    zk = _all_encoding_grads(model, v, data.labels)[:, k]
    alpha, beta = model.params.alpha[k], model.params.beta[k]
    r = beta / alpha
    t = alpha + beta
    b = model.atoms[k]
    binv = np.linalg.inv(b)
    fac = data.factors()
    d = b.shape[0]
    eye = np.eye(d)
    acc = np.zeros((d, d))
    for i in range(len(data)):
        z_half = fac.invsqrt[i]   # Z^(1/2) = X^(-1/2)
        z_mhalf = fac.sqrt[i]     # Z^(-1/2) = X^(1/2)
        tt = spd_power(sym(z_half @ b @ z_half), t)
        core = binv @ z_mhalf @ tt @ np.linalg.inv(eye + r * tt) @ z_half
        acc = acc + zk[i] * ((r * t / (alpha * beta)) * core - binv / alpha)
    return sym(acc)


def grad_atom_airm(data: LabeledSpdDataset, model: IddlModel, k: int) -> np.ndarray:
    """Atom gradient in origin-limit mode.

    Per sample this is X^-1/2 Log(P) P^-1 X^-1/2 with P = X^-1/2 B X^-1/2,
    weighted by the encoding-loss gradient.
    """
    if not model.params.is_airm:
        raise InvalidInput("model parameters are not in origin-limit mode")
    v = encode_batch(data.samples, model.atoms, model.params, data.factors())
    zk = _all_encoding_grads(model, v, data.labels)[:, k]
    return _weighted_atom_grad(
        data.factors().invsqrt, model.atoms[k], zk, _airm_weights
    )


def _dalpha_eigen(lam: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    """d/d(alpha) of the per-eigenvalue divergence term, vectorized over lam."""
    n = alpha * lam ** beta + beta * lam ** (-alpha)
    dn = lam ** beta - beta * lam ** (-alpha) * np.log(lam)
    logpart = np.log(n) - np.log(alpha + beta)
    return (-logpart / (alpha * alpha * beta)
            + (dn / n - 1.0 / (alpha + beta)) / (alpha * beta))


def _raw_param_grads(data, model, v=None, mu_all=None):
    """Per-atom (d/d alpha_k, d/d beta_k) before any mode reduction."""
    fac = data.factors()
    if v is None:
        v = encode_batch(data.samples, model.atoms, model.params, fac)
    zmat = _all_encoding_grads(model, v, data.labels)
    n = model.n_atoms
    ga = np.empty(n)
    gb = np.empty(n)
    for k in range(n):
        if mu_all is not None:
            mu = mu_all[k]
        else:
            mu = _atom_eigvals(fac.invsqrt, model.atoms[k])
        lam = 1.0 / mu
        alpha, beta = model.params.alpha[k], model.params.beta[k]
        da = _dalpha_eigen(lam, alpha, beta).sum(axis=1)
        # The beta derivative follows from the pair symmetry
        # D(X, Y; a, b) = D(Y, X; b, a): swap the roles and invert the spectrum.
        db = _dalpha_eigen(mu, beta, alpha).sum(axis=1)
        if not (np.all(np.isfinite(da)) and np.all(np.isfinite(db))):
            raise NumericalBreakdown(f"non-finite parameter gradient at atom {k}")
        ga[k] = zmat[:, k] @ da
        gb[k] = zmat[:, k] @ db
    return ga, gb


def grad_alpha_beta(data: LabeledSpdDataset, model: IddlModel):
    """Objective gradient with respect to the divergence parameters.

    Returns a pair whose shape tracks the sharing mode: per-atom vectors for
    mode N, the tied per-atom gradient (d/d alpha + d/d beta) in both slots
    for mode V, and scalars summed over atoms for mode S.
    """
    _check_not_airm(model.params)
    ga, gb = _raw_param_grads(data, model)
    mode = model.params.mode
    if mode == "S":
        return float(ga.sum()), float(gb.sum())
    if mode == "V":
        tied = ga + gb
        return tied, tied.copy()
    return ga, gb


# ---------------------------------------------------------------------------
# closed-form classifier
# ---------------------------------------------------------------------------

def _ridge_solve(v: np.ndarray, h: np.ndarray, gamma: float) -> np.ndarray:
    """Minimizer of 0.5*||H - W V||_F^2 + gamma*||W||_F^2 over W.

    With encodings as rows of v (N, n) and targets as rows of h (N, L), the
    stationarity condition (W V - H) V^T + 2 gamma W = 0 gives
    W = H^T v (v^T v + 2 gamma I)^-1.
    """
    n = v.shape[1]
    gram = v.T @ v + 2.0 * gamma * np.eye(n)
    rhs = v.T @ h
    try:
        if gamma == 0 and np.linalg.cond(gram) > 1e14:
            raise SingularSystem(
                "encoding Gram matrix is singular; set gamma > 0"
            )
        sol = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc) + "; set gamma > 0") from exc
    return sol.T


def solve_w(data: LabeledSpdDataset, model: IddlModel) -> np.ndarray:
    """Closed-form ridge classifier for the model's current encodings."""
    v = encode_batch(data.samples, model.atoms, model.params, data.factors())
    h = one_hot(data.labels, model.label_count)
    return _ridge_solve(v, h, model.gamma)


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def _kmeans(points: np.ndarray, k: int, rng: np.random.Generator,
            iters: int = 100, tol: float = 1e-6) -> np.ndarray:
    """Euclidean K-means with k-means++ seeding and empty-cluster repair."""
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    d2 = np.square(points - centers[0]).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[j] = points[idx]
        d2 = np.minimum(d2, np.square(points - centers[j]).sum(axis=1))

    for _ in range(iters):
        dists = np.square(points[:, None, :] - centers[None, :, :]).sum(axis=2)
        assign = np.argmin(dists, axis=1)
        new_centers = np.empty_like(centers)
        own = dists[np.arange(n), assign]
        for j in range(k):
            mask = assign == j
            if mask.any():
                new_centers[j] = points[mask].mean(axis=0)
            else:
                new_centers[j] = points[int(np.argmax(own))]
        shift = np.linalg.norm(new_centers - centers)
        scale = np.linalg.norm(centers) + 1e-30
        centers = new_centers
        if shift / scale < tol:
            break
    return centers


def init_dictionary(data: LabeledSpdDataset, n_atoms: int, seed: int) -> np.ndarray:
    """Atoms from K-means on the matrix logarithms of the samples.

    Samples are mapped by the matrix log into the flat space of symmetric
    matrices, clustered there (k-means++ seeding, 100 Lloyd iterations,
    relative-shift tolerance 1e-6), and the centroids are mapped back by the
    matrix exponential. Deterministic for a fixed seed.
    """
    if n_atoms < 1 or n_atoms > len(data):
        raise InvalidInput(f"n_atoms must be in [1, {len(data)}]")
    w, q = np.linalg.eigh(sym_batch(data.samples))
    if w[:, 0].min() <= PD_TOL:
        raise NotPositiveDefinite("a sample is not positive definite")
    logs = _batched_spectral(q, np.log(w))
    d = data.dim
    points = logs.reshape(len(data), d * d)
    rng = np.random.default_rng(seed)
    centers = _kmeans(points, n_atoms, rng)
    mats = sym_batch(centers.reshape(n_atoms, d, d))
    cw, cq = np.linalg.eigh(mats)
    return _batched_spectral(cq, np.exp(cw))


def _params_for_variant(variant: str, n: int, alpha: float, beta: float) -> AbldParams:
    if variant == "A":
        return AbldParams.airm(n)
    if variant == "B":
        return AbldParams.burg(n)
    if variant == "S":
        return AbldParams.scalar(alpha, beta, n)
    if variant == "V":
        if alpha != beta:
            raise InvalidInput("variant V requires alpha == beta")
        return AbldParams.tied(np.full(n, alpha))
    return AbldParams.free(np.full(n, alpha), np.full(n, beta))


def init_params(data: LabeledSpdDataset, atoms, variant: str,
                grid=None, gamma: float | None = None) -> AbldParams:
    """Starting divergence parameters: alpha = beta = 1, or a grid argmax.

    When a grid of (alpha, beta) pairs is given, each candidate is scored by
    the training accuracy of a classifier-only solve with the atoms held
    fixed, and the best pair (first on ties) is replicated per the variant.
    """
    if variant not in VARIANTS:
        raise InvalidInput(f"unknown variant {variant!r}")
    atoms = np.asarray(atoms, dtype=float)
    n = atoms.shape[0]
    if variant in ("A", "B") or grid is None:
        return _params_for_variant(variant, n, 1.0, 1.0)
    grid = [(float(a), float(b)) for a, b in grid]
    if not grid:
        raise InvalidInput("parameter grid is empty")
    if gamma is None:
        gamma = 1e-3 * len(data) / data.label_count
    h = one_hot(data.labels, data.label_count)
    best_pair, best_acc = None, -1.0
    for a, b in grid:
        params = _params_for_variant(variant, n, a, b)
        v = encode_batch(data.samples, atoms, params, data.factors())
        w = _ridge_solve(v, h, gamma)
        pred = np.argmax(v @ w.T, axis=1) + 1
        acc = float(np.mean(pred == data.labels))
        if acc > best_acc:
            best_pair, best_acc = (a, b), acc
    return _params_for_variant(variant, n, *best_pair)


# ---------------------------------------------------------------------------
# block-coordinate descent driver
# ---------------------------------------------------------------------------

@dataclass
class FitConfig:
    """Knobs for the block-coordinate fit.

    gamma defaults to 1e-3 * N / L at fit time. The per-atom conjugate
    gradient runs a short budget (5 iterations) per outer pass rather than to
    convergence; every accepted step still descends, so the recorded history
    is monotone. rel_obj_tol stops the outer loop early on a small relative
    objective change (None disables). update_atoms / update_params freeze a
    block for ablations; variants A and B force the parameter block off.
    """

    n_atoms: int
    variant: str = "N"
    gamma: float | None = None
    init: str = "burg"
    grid: tuple = None
    rcg: RcgConfig = field(default_factory=lambda: RcgConfig(max_iters=5))
    outer_iters: int = 30
    rel_obj_tol: float | None = 1e-5
    param_steps: int = 5
    update_atoms: bool = True
    update_params: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InvalidInput(f"unknown variant {self.variant!r}")
        if self.init not in ("burg", "grid"):
            raise InvalidInput("init must be 'burg' or 'grid'")
        if self.outer_iters < 1:
            raise InvalidInput("outer_iters must be at least 1")


def _objective_from(v, w, h, gamma) -> float:
    r = h - v @ w.T
    return float(0.5 * np.sum(r * r) + gamma * np.sum(w * w))


def _update_atom(invsqrt, b0, alpha, beta, airm, c, wk, const_term, cfg):
    """Short conjugate-gradient run on one atom with the rest held fixed.

    c holds the residual H - W V with this atom's column added back, so the
    objective restricted to this atom is
    0.5*||c - v_k(B) wk^T||^2 + const. A one-slot cache shares the
    eigensystem between the objective and gradient evaluated at one point.
    """
    cache: dict = {}

    def eigsys(b):
        key = b.tobytes()
        if key not in cache:
            cache.clear()
            cache[key] = _atom_eigensystem(invsqrt, b)
        return cache[key]

    def column(b):
        mu, _ = eigsys(b)
        return _airm_from_mu(mu) if airm else _abld_from_mu(mu, alpha, beta)

    def obj(b):
        vk = column(b)
        r = c - vk[:, None] * wk[None, :]
        return 0.5 * float(np.sum(r * r)) + const_term

    def egrad(b):
        mu, u = eigsys(b)
        vk = _airm_from_mu(mu) if airm else _abld_from_mu(mu, alpha, beta)
        zk = (vk[:, None] * wk[None, :] - c) @ wk
        su = invsqrt @ u
        wmu = (_airm_weights(mu) if airm else _abld_weights(mu, alpha, beta))
        w = wmu * zk[:, None]
        return sym(np.tensordot(su * w[:, None, :], su, axes=([0, 2], [0, 2])))

    b, _ = rcg_minimize(obj, egrad, b0, cfg)
    return b, column(b)


def _theta_of(params: AbldParams) -> np.ndarray:
    if params.mode == "S":
        return np.array([params.alpha[0], params.beta[0]])
    if params.mode == "V":
        return params.alpha.copy()
    return np.concatenate([params.alpha, params.beta])


def _params_of(theta: np.ndarray, mode: str, n: int) -> AbldParams:
    if mode == "S":
        return AbldParams.scalar(theta[0], theta[1], n)
    if mode == "V":
        return AbldParams.tied(theta)
    return AbldParams.free(theta[:n], theta[n:])


def _encode_from_mu_all(mu_all, params: AbldParams) -> np.ndarray:
    v = np.empty((mu_all.shape[1], params.n))
    for k in range(params.n):
        v[:, k] = _abld_from_mu(mu_all[k], params.alpha[k], params.beta[k])
    return v


def fit(data: LabeledSpdDataset, config: FitConfig) -> IddlModel:
    """Learn atoms, divergence parameters, and classifier by block descent.

    Each outer iteration updates every atom by a short Riemannian conjugate
    gradient run, then the divergence parameters by clamped log-space descent
    (skipped for variants A and B), then the classifier in closed form. All
    randomness flows from config.seed, so results are bit-reproducible.

    Raises
    ------
    InvalidDataset
        If a class is empty or shapes are inconsistent.
    NumericalBreakdown
        If a factorization fails mid-run; the partial history and the failing
        block (and atom index, where applicable) are attached to the error.
    """
    data.validate_for_training()
    n = config.n_atoms
    if n > len(data):
        raise InvalidDataset(f"n_atoms {n} exceeds sample count {len(data)}")
    big_l = data.label_count
    gamma = config.gamma if config.gamma is not None else 1e-3 * len(data) / big_l

    atoms = init_dictionary(data, n, config.seed)
    params = init_params(
        data, atoms, config.variant,
        grid=config.grid if config.init == "grid" else None, gamma=gamma,
    )
    fac = data.factors()
    h = one_hot(data.labels, big_l)

    v = encode_batch(data.samples, atoms, params, fac)
    w = _ridge_solve(v, h, gamma)
    initial = _objective_from(v, w, h, gamma)

    params_frozen = config.variant in ("A", "B") or not config.update_params
    after_dict, after_params, after_w = [], [], []
    block, atom_idx = "setup", None
    try:
        for _ in range(config.outer_iters):
            if config.update_atoms:
                block = "dictionary"
                const_term = gamma * float(np.sum(w * w))
                resid = h - v @ w.T
                for k in range(n):
                    atom_idx = k
                    wk = w[:, k]
                    c = resid + v[:, k][:, None] * wk[None, :]
                    atoms[k], v[:, k] = _update_atom(
                        fac.invsqrt, atoms[k],
                        params.alpha[k], params.beta[k], params.is_airm,
                        c, wk, const_term, config.rcg,
                    )
                    resid = c - v[:, k][:, None] * wk[None, :]
                atom_idx = None
            after_dict.append(_objective_from(v, w, h, gamma))

            if not params_frozen:
                block = "parameters"
                mu_all = np.stack([
                    _atom_eigvals(fac.invsqrt, atoms[k]) for k in range(n)
                ])

                def theta_obj(theta):
                    p = _params_of(theta, params.mode, n)
                    return _objective_from(_encode_from_mu_all(mu_all, p), w, h, gamma)

                theta = _theta_of(params)
                for _ in range(config.param_steps):
                    model_now = IddlModel(atoms, params, w, gamma, big_l)
                    ga, gb = _raw_param_grads(data, model_now, v=v, mu_all=mu_all)
                    if params.mode == "S":
                        grad_theta = np.array([ga.sum(), gb.sum()])
                    elif params.mode == "V":
                        grad_theta = ga + gb
                    else:
                        grad_theta = np.concatenate([ga, gb])
                    new_theta = positive_scalar_step(theta_obj, theta, grad_theta)
                    if np.array_equal(new_theta, theta):
                        break
                    theta = new_theta
                    params = _params_of(theta, params.mode, n)
                    v = _encode_from_mu_all(mu_all, params)
            after_params.append(_objective_from(v, w, h, gamma))

            block = "classifier"
            w = _ridge_solve(v, h, gamma)
            after_w.append(_objective_from(v, w, h, gamma))

            if config.rel_obj_tol is not None and len(after_w) >= 2:
                prev, cur = after_w[-2], after_w[-1]
                if prev - cur < config.rel_obj_tol * max(1.0, abs(prev)):
                    break
    except (NumericalBreakdown, NotPositiveDefinite, DegenerateDivergence,
            SingularSystem, StepOverflow) as exc:
        where = block if atom_idx is None else f"{block} (atom {atom_idx})"
        err = NumericalBreakdown(f"{where} block failed: {exc}")
        err.block = block
        err.atom = atom_idx
        err.history = FitHistory(
            initial, np.asarray(after_dict), np.asarray(after_params),
            np.asarray(after_w), params_frozen,
        )
        raise err from exc

    history = FitHistory(
        initial=initial,
        after_dict=np.asarray(after_dict),
        after_params=np.asarray(after_params),
        after_w=np.asarray(after_w),
        params_skipped=params_frozen,
    )
    return IddlModel(atoms, params, w, gamma, big_l, history)


# ---------------------------------------------------------------------------
# model container file
# ---------------------------------------------------------------------------

MODEL_MAGIC = b"IDDL"
MODEL_VERSION = 1
_MODEL_HEADER = struct.Struct("<4sIIIIIIIdd")
_FLAG_PARAMS_SKIPPED = 1


def save_model(model: IddlModel, path):
    """Write the model container (layout documented in the README)."""
    n, d = model.n_atoms, model.dim
    hist = model.history
    t = 0 if hist is None else len(hist)
    flags = 0
    initial = float("nan")
    if hist is not None:
        initial = hist.initial
        if hist.params_skipped:
            flags |= _FLAG_PARAMS_SKIPPED
    header = _MODEL_HEADER.pack(
        MODEL_MAGIC, MODEL_VERSION, d, n, model.label_count,
        VARIANTS.index(model.params.mode), flags, t, model.gamma, initial,
    )
    with open(path, "wb") as f:
        f.write(header)
        f.write(model.atoms.astype("<f8").tobytes())
        f.write(model.params.alpha.astype("<f8").tobytes())
        f.write(model.params.beta.astype("<f8").tobytes())
        f.write(model.w.astype("<f8").tobytes())
        if hist is not None:
            blocks = np.column_stack([hist.after_dict, hist.after_params, hist.after_w])
            f.write(blocks.astype("<f8").tobytes())


def load_model(path) -> IddlModel:
    """Read a model container written by save_model; bit-exact round trip."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _MODEL_HEADER.size:
        raise CorruptFile("model file truncated")
    magic, version, d, n, big_l, variant_idx, flags, t, gamma, initial = \
        _MODEL_HEADER.unpack_from(raw)
    if magic != MODEL_MAGIC:
        raise CorruptFile(f"bad magic {magic!r}")
    if version != MODEL_VERSION:
        raise CorruptFile(f"unsupported version {version}")
    if variant_idx >= len(VARIANTS):
        raise CorruptFile(f"unknown variant code {variant_idx}")
    expected = _MODEL_HEADER.size + 8 * (n * d * d + 2 * n + big_l * n + 3 * t)
    if len(raw) != expected:
        raise CorruptFile(
            f"model file size {len(raw)} != expected {expected}"
        )
    off = _MODEL_HEADER.size

    def take(count, shape):
        nonlocal off
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=off)
        off += 8 * count
        return arr.reshape(shape).astype(float)

    atoms = take(n * d * d, (n, d, d))
    alpha = take(n, (n,))
    beta = take(n, (n,))
    w = take(big_l * n, (big_l, n))
    history = None
    if t > 0:
        blocks = take(3 * t, (t, 3))
        history = FitHistory(
            initial=initial,
            after_dict=blocks[:, 0].copy(),
            after_params=blocks[:, 1].copy(),
            after_w=blocks[:, 2].copy(),
            params_skipped=bool(flags & _FLAG_PARAMS_SKIPPED),
        )
    params = AbldParams(alpha, beta, VARIANTS[variant_idx])
    return IddlModel(atoms, params, w, gamma, big_l, history)


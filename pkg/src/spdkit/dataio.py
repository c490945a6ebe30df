"""Dataset file format, covariance descriptors, synthetic data, and splits.

The binary dataset format stores each symmetric matrix as its lower triangle
(row-major, little-endian float64) behind a fixed header, which halves the
file size and makes symmetry a property of the format itself:

    offset  size  field
    0       4     magic "SPDS"
    4       4     u32 version (currently 1)
    8       4     u32 d (matrix dimension)
    12      4     u32 N (record count)
    16      4     u32 L (label count)
    20      4     u32 flags (bit 0: repair near-singular matrices on read)
    24      ...   N records of { u32 label, d*(d+1)/2 float64 lower triangle }
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .divergence import abld_airm
from .errors import CorruptFile, InvalidDataset, InvalidInput, NotPositiveDefinite
from .iddl import LabeledSpdDataset, sym_batch
from .linalg import PD_TOL, regularize, sym

MAGIC = b"SPDS"
VERSION = 1
FLAG_REPAIR = 1

_HEADER = struct.Struct("<4sIIIII")


def covariance_descriptor(features, ridge: float = 0.0) -> np.ndarray:
    """Sample covariance of feature rows plus a ridge on the diagonal.

    features is a (T, m) array of per-pixel or per-frame feature vectors;
    the result is the unbiased covariance (1/(T-1)) sum (f - mean)(f - mean)^T
    plus ridge * I, which is SPD whenever ridge > 0.
    """
    features = np.asarray(features, dtype=float)
    if features.ndim != 2 or features.shape[0] < 2:
        raise InvalidInput("features must be (T, m) with T >= 2")
    if ridge < 0:
        raise InvalidInput("ridge must be nonnegative")
    centered = features - features.mean(axis=0, keepdims=True)
    cov = centered.T @ centered / (features.shape[0] - 1)
    cov = sym(cov) + ridge * np.eye(features.shape[1])
    if np.linalg.eigvalsh(cov)[0] <= PD_TOL:
        raise NotPositiveDefinite(
            "covariance is rank-deficient; pass a positive ridge"
        )
    return cov


@dataclass
class SyntheticSpec:
    """Recipe for a seeded synthetic SPD classification set.

    Samples of class c are C_c^(1/2) S C_c^(1/2) where S is a normalized
    Wishart-style scatter with `spread` degrees of freedom (larger means
    tighter classes; must exceed dim - 1). Class centers are commuting SPD
    matrices placed so every pair is at geodesic distance at least 1.
    """

    classes: int
    dim: int
    per_class: int
    spread: float
    seed: int
    centers: np.ndarray | None = None

    def __post_init__(self):
        if self.classes < 1:
            raise InvalidInput("classes must be at least 1")
        if self.dim < 1:
            raise InvalidInput("dim must be at least 1")
        if self.spread <= self.dim - 1:
            raise InvalidInput("spread must exceed dim - 1")


def _make_centers(classes: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    # Shared eigenbasis makes geodesic distances equal to distances between
    # the log-spectra; spacing those >= sqrt(2) * 1.05 along a line (with
    # small jitter) guarantees pairwise geodesic distance >= 1 under the
    # half-scaled squared metric used by abld_airm.
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    direction = rng.standard_normal(dim)
    direction /= np.linalg.norm(direction)
    sep = np.sqrt(2.0) * 1.05 + 0.3
    spectra = np.empty((classes, dim))
    for c in range(classes):
        jitter = rng.standard_normal(dim)
        jitter *= 0.15 / max(np.linalg.norm(jitter), 1e-12)
        spectra[c] = (c - (classes - 1) / 2.0) * sep * direction + jitter
    centers = np.stack([sym((q * np.exp(s)) @ q.T) for s in spectra])
    return centers


def _wishart_scatter(dim: int, dof: float, rng: np.random.Generator) -> np.ndarray:
    # Bartlett factorization: O(d^2) per draw for any degrees of freedom.
    a = np.zeros((dim, dim))
    for i in range(dim):
        a[i, i] = np.sqrt(rng.chisquare(dof - i))
        a[i, :i] = rng.standard_normal(i)
    return (a @ a.T) / dof


def generate_synthetic(spec: SyntheticSpec) -> LabeledSpdDataset:
    """Seeded synthetic dataset with separated classes; see SyntheticSpec."""
    if spec.per_class < 1:
        raise InvalidDataset("per_class must be at least 1")
    rng = np.random.default_rng(spec.seed)
    centers = spec.centers
    if centers is None:
        centers = _make_centers(spec.classes, spec.dim, rng)
    w, q = np.linalg.eigh(sym_batch(np.asarray(centers, dtype=float)))
    roots = np.einsum("nij,nj,nkj->nik", q, np.sqrt(w), q)
    samples = []
    labels = []
    for c in range(spec.classes):
        r = roots[c]
        for _ in range(spec.per_class):
            s = _wishart_scatter(spec.dim, spec.spread, rng)
            samples.append(sym(r @ s @ r))
            labels.append(c + 1)
    return LabeledSpdDataset(np.stack(samples), np.asarray(labels))


def pairwise_center_distances(centers) -> np.ndarray:
    """Geodesic distances sqrt(abld_airm) between all center pairs."""
    centers = np.asarray(centers, dtype=float)
    k = centers.shape[0]
    out = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            out[i, j] = out[j, i] = np.sqrt(abld_airm(centers[i], centers[j]))
    return out


def split(data: LabeledSpdDataset, fraction: float, seed: int):
    """Stratified train/test split, deterministic for a fixed seed.

    Each class contributes round(fraction * count) training samples (half-up
    rounding). Classes with fewer than two samples cannot be split.
    """
    if not 0.0 < fraction < 1.0:
        raise InvalidInput("fraction must be strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for c in range(1, data.label_count + 1):
        idx = np.where(data.labels == c)[0]
        if idx.size < 2:
            raise InvalidDataset(f"class {c} has fewer than 2 samples")
        perm = rng.permutation(idx.size)
        n_train = int(np.floor(fraction * idx.size + 0.5))
        train_idx.append(idx[perm[:n_train]])
        test_idx.append(idx[perm[n_train:]])
    train_idx = np.sort(np.concatenate(train_idx))
    test_idx = np.sort(np.concatenate(test_idx))
    return (
        LabeledSpdDataset(data.samples[train_idx], data.labels[train_idx]),
        LabeledSpdDataset(data.samples[test_idx], data.labels[test_idx]),
    )


def _record_dtype(d: int) -> np.dtype:
    return np.dtype([("label", "<u4"), ("tri", "<f8", (d * (d + 1) // 2,))])


def write_dataset(path, data: LabeledSpdDataset, flags: int = 0):
    """Write the binary dataset format; read_dataset inverts it bit-exactly."""
    d = data.dim
    tri = np.tril_indices(d)
    records = np.zeros(len(data), dtype=_record_dtype(d))
    records["label"] = data.labels
    records["tri"] = data.samples[:, tri[0], tri[1]]
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, d, len(data), data.label_count, flags))
        f.write(records.tobytes())


def read_dataset(path) -> LabeledSpdDataset:
    """Read the binary dataset format written by write_dataset."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _HEADER.size:
        raise CorruptFile("file shorter than header")
    magic, version, d, n, big_l, flags = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise CorruptFile(f"bad magic {magic!r}")
    if version != VERSION:
        raise CorruptFile(f"unsupported version {version}")
    dtype = _record_dtype(d)
    expected = _HEADER.size + n * dtype.itemsize
    if len(raw) != expected:
        raise CorruptFile(f"file size {len(raw)} != expected {expected}")
    records = np.frombuffer(raw, dtype=dtype, count=n, offset=_HEADER.size)
    labels = records["label"].astype(int)
    if n and (labels.min() < 1 or labels.max() > big_l):
        raise CorruptFile("label outside [1..L]")
    tri = np.tril_indices(d)
    samples = np.zeros((n, d, d))
    samples[:, tri[0], tri[1]] = records["tri"]
    samples[:, tri[1], tri[0]] = records["tri"]
    eigmin = np.linalg.eigvalsh(samples)[:, 0]
    bad = np.where(eigmin <= PD_TOL)[0]
    if bad.size:
        if flags & FLAG_REPAIR:
            for i in bad:
                shift = max(0.0, -eigmin[i]) + PD_TOL
                samples[i] = regularize(samples[i], shift + 1e-8)
        else:
            raise NotPositiveDefinite(
                f"record {bad[0]} is not positive definite "
                "(write with the repair flag to shift it)"
            )
    return LabeledSpdDataset(samples, labels)


def read_dataset_text(path) -> LabeledSpdDataset:
    """Plain-text import: one sample per line, label then d*d reals."""
    samples, labels = [], []
    d = None
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            tokens = line.split()
            if not tokens:
                continue
            if d is None:
                d = int(round(np.sqrt(len(tokens) - 1)))
            if len(tokens) != 1 + d * d:
                raise CorruptFile(f"line {lineno}: expected {1 + d * d} tokens")
            labels.append(int(tokens[0]))
            m = np.array([float(t) for t in tokens[1:]]).reshape(d, d)
            samples.append(sym(m))
    if not samples:
        raise CorruptFile("no samples in text file")
    return LabeledSpdDataset(np.stack(samples), np.asarray(labels))

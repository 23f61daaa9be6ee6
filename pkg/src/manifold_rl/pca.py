"""
Principal component analysis with a self-contained cyclic Jacobi eigensolver.

A basis is fitted once from a matrix of demonstration observations and then
used to map raw observations onto the leading ``k`` principal directions::

    basis = fit_pca(samples)                 # mean, scale, W, spectrum
    tb = truncate(basis, 4)                  # first 4 columns of W
    coords = project(tb, x)                  # W_k^T (x - mean) / scale
    x_hat = reconstruct(tb, coords)          # inverse map, exact for k = p
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100


class PCAError(ValueError):
    """Raised for inputs PCA cannot be fitted or applied to."""


class ConvergenceError(PCAError):
    pass


def jacobi_eigh(a, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    """Eigen-decomposition of a real symmetric matrix by cyclic Jacobi rotations.

    Sweeps over every off-diagonal pair (p, q) in row order, annihilating
    a[p, q] with a plane rotation, until the off-diagonal Frobenius norm
    drops below ``tol`` times the Frobenius norm of the input.

    Returns ``(eigenvalues, eigenvectors)`` in the solver's natural
    (unsorted) order; column ``i`` of ``eigenvectors`` pairs with
    ``eigenvalues[i]``.
    """
    a = np.array(a, dtype=float, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise PCAError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise PCAError("matrix has non-finite entries")
    n = a.shape[0]
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    scale = np.linalg.norm(a)
    if scale == 0.0 or n == 1:
        return np.diag(a).copy(), v

    threshold = tol * scale
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2) * 2.0)
        if off <= threshold:
            return np.diag(a).copy(), v
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                # rotation angle from the stable tangent formula
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c

                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0

                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq

    off = np.sqrt(np.sum(np.tril(a, -1) ** 2) * 2.0)
    if off <= threshold:
        return np.diag(a).copy(), v
    raise ConvergenceError(
        f"Jacobi did not converge in {max_sweeps} sweeps (off-diagonal norm {off:.3e})"
    )


def canonical_signs(w):
    """Flip each column so its largest-magnitude entry (first on ties) is >= 0."""
    w = np.array(w, dtype=float, copy=True)
    idx = np.argmax(np.abs(w), axis=0)
    signs = np.where(w[idx, np.arange(w.shape[1])] < 0.0, -1.0, 1.0)
    return w * signs


def sorted_eigh(a):
    """Jacobi eigenpairs sorted by descending eigenvalue with canonical signs.

    Sorting is stable, so equal eigenvalues keep the solver's column order.
    """
    vals, vecs = jacobi_eigh(a)
    order = np.argsort(-vals, kind="stable")
    return vals[order], canonical_signs(vecs[:, order])


@dataclass(frozen=True)
class PrincipalBasis:
    """Fitted PCA transform.

    ``w`` holds eigenvectors of the preprocessed covariance as columns,
    ordered by descending ``eigenvalues``.
    """

    mean: np.ndarray
    scale: np.ndarray
    w: np.ndarray
    eigenvalues: np.ndarray
    standardized: bool = True

    def __post_init__(self):
        for name in ("mean", "scale", "w", "eigenvalues"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def p(self) -> int:
        return self.mean.shape[0]

    def preprocess(self, x):
        return (np.asarray(x, dtype=float) - self.mean) / self.scale

    def unpreprocess(self, z):
        return np.asarray(z, dtype=float) * self.scale + self.mean

    def to_dict(self, k=None):
        doc = {
            "p": self.p,
            "standardized": self.standardized,
            "mean": [_exact(v) for v in self.mean],
            "scale": [_exact(v) for v in self.scale],
            "eigenvalues": [_exact(v) for v in self.eigenvalues],
            "w": [_exact(v) for v in self.w.ravel()],
        }
        if k is not None:
            doc["k"] = int(k)
        return doc

    @classmethod
    def from_dict(cls, doc):
        p = int(doc["p"])
        w = np.array(doc["w"], dtype=float)
        if w.size != p * p:
            raise PCAError(f"w has {w.size} entries, expected {p * p}")
        return cls(
            mean=np.array(doc["mean"], dtype=float),
            scale=np.array(doc["scale"], dtype=float),
            w=w.reshape(p, p),
            eigenvalues=np.array(doc["eigenvalues"], dtype=float),
            standardized=bool(doc.get("standardized", True)),
        )


@dataclass(frozen=True)
class TruncatedBasis:
    parent: PrincipalBasis
    k: int

    @property
    def p(self) -> int:
        return self.parent.p

    @property
    def wk(self) -> np.ndarray:
        return self.parent.w[:, : self.k]


def _exact(v) -> float:
    # json writes repr(float), which round-trips (17 significant digits)
    return float(v)


def _as_samples(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=float)
    if x.ndim != 2:
        raise PCAError(f"samples must be a 2-D matrix, got {x.ndim}-D")
    return x


def fit_pca(samples, standardize=True) -> PrincipalBasis:
    """Fit a principal basis to an ``n x p`` sample matrix.

    Rows are always mean-centred; with ``standardize`` each feature is also
    divided by its sample standard deviation (1.0 where the feature is
    constant). Eigenpairs come from the 1/(n-1) covariance of the
    preprocessed data.
    """
    x = _as_samples(samples)
    n, p = x.shape
    if n < 2:
        raise PCAError(f"need at least 2 samples to fit PCA, got {n}")
    if p < 1:
        raise PCAError("samples have no features")
    if not np.all(np.isfinite(x)):
        raise PCAError("samples contain non-finite values")

    mean = x.mean(axis=0)
    centred = x - mean
    if standardize:
        std = centred.std(axis=0, ddof=1)
        scale = np.where(std > 0.0, std, 1.0)
    else:
        scale = np.ones(p)
    z = centred / scale
    cov = (z.T @ z) / (n - 1)
    vals, vecs = sorted_eigh(cov)
    return PrincipalBasis(mean=mean, scale=scale, w=vecs, eigenvalues=vals,
                          standardized=bool(standardize))


def covariance(basis: PrincipalBasis, samples) -> np.ndarray:
    """Covariance of ``samples`` after the basis' preprocessing."""
    z = basis.preprocess(_as_samples(samples))
    return (z.T @ z) / (z.shape[0] - 1)


def truncate(basis: PrincipalBasis, k: int) -> TruncatedBasis:
    if not isinstance(k, (int, np.integer)) or not 1 <= k <= basis.p:
        raise PCAError(f"k must be an integer in [1, {basis.p}], got {k!r}")
    return TruncatedBasis(basis, int(k))


def project(tb: TruncatedBasis, x) -> np.ndarray:
    """Manifold coordinates ``W_k^T preprocess(x)`` of one raw observation."""
    x = np.asarray(x, dtype=float)
    if x.shape != (tb.p,):
        raise PCAError(f"expected a vector of length {tb.p}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise PCAError("observation contains non-finite values")
    return tb.parent.preprocess(x) @ tb.wk


def project_batch(tb: TruncatedBasis, samples) -> np.ndarray:
    x = _as_samples(samples)
    if x.shape[1] != tb.p:
        raise PCAError(f"samples have {x.shape[1]} columns, basis expects {tb.p}")
    return tb.parent.preprocess(x) @ tb.wk


def reconstruct(tb: TruncatedBasis, coords) -> np.ndarray:
    coords = np.asarray(coords, dtype=float)
    if coords.shape != (tb.k,):
        raise PCAError(f"expected {tb.k} coordinates, got shape {coords.shape}")
    return tb.parent.unpreprocess(tb.wk @ coords)


def explained_variance_ratio(basis: PrincipalBasis, k: int) -> float:
    if not 1 <= k <= basis.p:
        raise PCAError(f"k must be in [1, {basis.p}], got {k}")
    vals = np.clip(basis.eigenvalues, 0.0, None)
    total = vals.sum()
    if total <= 0.0:
        raise PCAError("eigenvalue spectrum is all zero (degenerate data)")
    if k == basis.p:
        return 1.0
    return float(min(1.0, vals[:k].sum() / total))


def reconstruction_mse(tb: TruncatedBasis, samples) -> float:
    """Mean squared error of project-then-reconstruct over ``samples``."""
    x = _as_samples(samples)
    coords = project_batch(tb, x)
    x_hat = tb.parent.unpreprocess(coords @ tb.wk.T)
    return float(np.mean((x - x_hat) ** 2))


def save_basis(path, basis: PrincipalBasis, k=None):
    Path(path).write_text(json.dumps(basis.to_dict(k), indent=1) + "\n")


def load_basis(path) -> PrincipalBasis:
    return PrincipalBasis.from_dict(json.loads(Path(path).read_text()))


def write_loadings_csv(path, basis: PrincipalBasis, feature_names, absolute=True):
    """One row per principal component, one column per feature."""
    if len(feature_names) != basis.p:
        raise PCAError("feature_names length does not match basis dimension")
    w = np.abs(basis.w) if absolute else basis.w
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["component", *feature_names])
        for j in range(basis.p):
            writer.writerow([j + 1, *(format(v, ".15g") for v in w[:, j])])

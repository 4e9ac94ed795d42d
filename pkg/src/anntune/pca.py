"""PCA dimensionality reduction: fit on the (possibly subsampled) database,
apply to database and queries.

Plain covariance eigendecomposition, no whitening.  All model math is
float64; transformed vectors are returned as float32 ``VectorSet`` rows.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .dataset import VectorSet

__all__ = ["PcaModel", "pca_fit", "pca_transform"]


@dataclasses.dataclass
class PcaModel:
    """Mean + orthonormal basis projecting dimension ``d0`` down to ``d``.

    ``basis`` columns are the top-``d`` eigenvectors of the sample
    covariance, eigenvalues non-increasing and clamped at zero.  Sign
    convention: each column's largest-magnitude entry is non-negative.
    """

    mean: np.ndarray
    basis: np.ndarray
    eigenvalues: np.ndarray
    d0: int
    d: int

    def __post_init__(self):
        self.mean = np.ascontiguousarray(self.mean, dtype=np.float64)
        self.basis = np.ascontiguousarray(self.basis, dtype=np.float64)
        self.eigenvalues = np.ascontiguousarray(self.eigenvalues, dtype=np.float64)
        if self.mean.shape != (self.d0,) or self.basis.shape != (self.d0, self.d):
            raise ValueError("inconsistent PcaModel shapes")
        if self.eigenvalues.shape != (self.d,):
            raise ValueError("eigenvalues must have length d")
        if not 1 <= self.d <= self.d0:
            raise ValueError(f"need 1 <= d <= d0, got d={self.d}, d0={self.d0}")


def pca_fit(base: VectorSet, d: int) -> PcaModel:
    """Fit a ``d``-dimensional PCA model on ``base``.

    Sample covariance (ddof=1) in float64, symmetric eigendecomposition,
    top-``d`` eigenvectors by descending eigenvalue.  Rank-deficient data
    yields trailing zero eigenvalues, not an error.  Deterministic: ties
    and signs are fixed by the largest-magnitude-entry-non-negative
    convention.
    """
    if base.count < 2:
        raise ValueError(f"pca_fit needs at least 2 vectors, got {base.count}")
    if not 1 <= d <= base.dim:
        raise ValueError(f"d must be in [1, {base.dim}], got {d}")
    x = base.values.astype(np.float64)
    mean = x.mean(axis=0)
    z = x - mean
    cov = (z.T @ z) / (base.count - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:d]
    eigvals = np.maximum(eigvals[order], 0.0)
    basis = eigvecs[:, order]
    anchor = np.abs(basis).argmax(axis=0)
    signs = np.sign(basis[anchor, np.arange(d)])
    signs[signs == 0] = 1.0
    basis = basis * signs
    return PcaModel(mean=mean, basis=basis, eigenvalues=eigvals,
                    d0=base.dim, d=d)


def pca_transform(model: PcaModel, vs: VectorSet) -> VectorSet:
    """Project rows: ``basis.T @ (x - mean)``; ids carried through."""
    if vs.dim != model.d0:
        raise ValueError(f"dim mismatch: model d0={model.d0}, vectors dim={vs.dim}")
    z = vs.values.astype(np.float64) - model.mean
    out = (z @ model.basis).astype(np.float32)
    return VectorSet(out, ids=None if vs.ids is None else vs.ids.copy())

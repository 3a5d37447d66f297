"""Proper orthogonal decomposition of snapshot matrices."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sps


@dataclass
class PodBasis:
    """
    Attributes:
        V (np.ndarray): (N_h, n) basis, orthonormal in the inner product used to
            build it (plain l2 unless ``weighted``).
        singular_values (np.ndarray): all singular values of the snapshot matrix.
        latent_gramian (np.ndarray): V^T D V for the Gramian D of the target
            norm; the identity when no Gramian was given.
        weighted (bool): True if V is D-orthonormal.
    """

    V: np.ndarray
    singular_values: np.ndarray
    latent_gramian: np.ndarray
    weighted: bool = False
    inner: Optional[sps.spmatrix] = None

    @property
    def n(self) -> int:
        return self.V.shape[1]

    def project(self, sigma: np.ndarray) -> np.ndarray:
        if self.weighted:
            return self.V.T @ (self.inner @ sigma)
        return self.V.T @ sigma

    def reconstruct(self, c: np.ndarray) -> np.ndarray:
        return self.V @ c

    def projection_error(self, snapshots: np.ndarray) -> float:
        """Mean squared l2 error of the basis projection over the columns."""
        res = snapshots - self.V @ self.project(snapshots)
        return float(np.mean(np.sum(res**2, axis=0)))


def _numerical_rank(s: np.ndarray, shape) -> int:
    if s.size == 0 or s[0] == 0:
        return 0
    tol = max(shape) * np.finfo(float).eps * s[0]
    return int(np.sum(s > tol))


def compute_pod(
    snapshots: np.ndarray,
    n: int,
    gramian: Optional[sps.spmatrix] = None,
    weighted: bool = False,
) -> PodBasis:
    """
    POD basis of the columns of ``snapshots`` via a thin SVD.

    Args:
        snapshots (np.ndarray): (N_h, N) snapshot matrix, one snapshot per column.
        n (int): reduced dimension; must not exceed the numerical rank.
        gramian (sparse matrix, optional): Gramian D of the target norm. Used for
            the latent Gramian, and for the basis itself when ``weighted``.
        weighted (bool): build a D-orthonormal basis from the SVD of D^{1/2} Xi,
            computed through the N x N correlation matrix Xi^T D Xi.

    Returns:
        PodBasis
    """
    Xi = np.asarray(snapshots, dtype=float)
    if Xi.ndim != 2 or Xi.shape[1] == 0:
        raise ValueError("need a non-empty 2D snapshot matrix")
    if n < 1 or n > min(Xi.shape):
        raise ValueError(f"reduced dimension {n} outside [1, {min(Xi.shape)}]")

    if weighted:
        if gramian is None:
            raise ValueError("weighted POD needs a Gramian")
        C = Xi.T @ (gramian @ Xi)
        C = 0.5 * (C + C.T)
        lam, Z = np.linalg.eigh(C)
        idx = np.argsort(lam)[::-1]
        lam, Z = np.clip(lam[idx], 0.0, None), Z[:, idx]
        s = np.sqrt(lam)
        rank = _numerical_rank(s, (Xi.shape[1],) * 2) if s.size else 0
        # eigen route squares the condition number
        rank = min(rank, int(np.sum(s > np.sqrt(np.finfo(float).eps) * s[0])))
        if n > rank:
            raise ValueError(f"reduced dimension {n} exceeds snapshot rank {rank}")
        V = Xi @ Z[:, :n] / s[:n]
    else:
        U, s, _ = np.linalg.svd(Xi, full_matrices=False)
        rank = _numerical_rank(s, Xi.shape)
        if n > rank:
            raise ValueError(f"reduced dimension {n} exceeds snapshot rank {rank}")
        V = U[:, :n]

    if gramian is not None:
        G = V.T @ (gramian @ V)
        G = 0.5 * (G + G.T)
    else:
        G = np.eye(n)
    return PodBasis(
        V=V,
        singular_values=s,
        latent_gramian=G,
        weighted=weighted,
        inner=gramian if weighted else None,
    )


def project(basis: PodBasis, sigma: np.ndarray) -> np.ndarray:
    return basis.project(sigma)


def reconstruct(basis: PodBasis, c: np.ndarray) -> np.ndarray:
    return basis.reconstruct(c)

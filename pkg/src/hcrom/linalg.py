"""Sparse SPD solves and energy-orthonormalization helpers."""

import logging

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverError

log = logging.getLogger(__name__)

BACKENDS = ("direct", "cg")
REORTH_KEEP = 1e-3


class Factorization:
    """Sparse LU factorization of an SPD matrix, reusable over many right-hand sides."""

    def __init__(self, M):
        self.M = sp.csc_matrix(M)
        if self.M.shape[0] == 0:
            self._lu = None
        else:
            try:
                self._lu = spla.splu(self.M)
            except RuntimeError as exc:  # exactly singular
                raise SolverError(f"factorization failed: {exc}") from exc

    @property
    def shape(self):
        return self.M.shape

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if self._lu is None:
            return np.zeros_like(b)
        return self._lu.solve(b)


def _relative_residual(M, x, b):
    bn = np.linalg.norm(b)
    if bn == 0.0:
        return float(np.linalg.norm(M @ x))
    return float(np.linalg.norm(M @ x - b) / bn)


def spd_solve(M, b, tol=1e-8, backend="direct", maxiter=None):
    """Solve ``M x = b`` for sparse symmetric positive definite ``M``.

    Parameters
    ----------
    M : sparse matrix
        SPD system matrix.
    b : ndarray
        Right-hand side (1-D).
    tol : float
        Required relative residual ``||Mx - b|| / ||b||``. The ``cg`` backend
        iterates to ``min(tol, 1e-12)``.
    backend : {"direct", "cg"}
        Sparse LU (reproducible) or Jacobi-preconditioned conjugate gradients.

    Raises
    ------
    SolverError
        If the final residual exceeds ``tol``.
    """
    if not 0.0 < tol < 1.0:
        raise ValueError(f"tol must lie in (0, 1), got {tol}")
    b = np.asarray(b, dtype=float)
    if not np.any(b):
        return np.zeros_like(b)

    if backend == "direct":
        M = sp.csc_matrix(M)
        x = Factorization(M).solve(b)
        res = _relative_residual(M, x, b)
        if res > tol:
            # one step of iterative refinement before giving up
            x = x + Factorization(M).solve(b - M @ x)
            res = _relative_residual(M, x, b)
    elif backend == "cg":
        M = sp.csr_matrix(M)
        diag = M.diagonal()
        if np.any(diag <= 0):
            raise SolverError("non-positive diagonal, matrix is not SPD")
        precond = spla.LinearOperator(M.shape, matvec=lambda v: v / diag)
        x, info = spla.cg(M, b, rtol=min(tol, 1e-12), atol=0.0, M=precond,
                          maxiter=maxiter or 10 * M.shape[0])
        res = _relative_residual(M, x, b)
        if info != 0 and res > tol:
            raise SolverError(f"CG did not converge (info={info}), residual {res:.3e}", res)
    else:
        raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}")

    if not np.isfinite(res) or res > tol:
        raise SolverError(f"{backend} solve residual {res:.3e} exceeds tol {tol:.1e}", res)
    return x


def energy_orthonormalize(V, grad, against=None, tol=1e-10, relative=True):
    """Orthonormalize the columns of ``V`` in the energy product ``<u, v> = (Du)^T (Dv)``.

    ``grad`` is the factor ``D`` with ``D^T D`` equal to the Gram matrix, so the
    rank decision is an SVD of ``D V`` rather than of the squared Gram matrix.

    Parameters
    ----------
    V : ndarray, shape (N, p)
    grad : sparse matrix, shape (M, N)
    against : ndarray, shape (N, q), optional
        Already orthonormal columns; the result is orthogonal to them.
    tol : float
        Singular values below ``tol * sigma_max`` (``relative``) or below ``tol``
        (absolute, columns are unit-normalized beforehand) are dropped.

    Returns
    -------
    ndarray, shape (N, r)
        New orthonormal columns only (``against`` is not included).
    """
    V = np.array(V, dtype=float, copy=True)
    if V.ndim == 1:
        V = V[:, None]
    W = _orthonormal_pass(V, grad, against, tol, relative)
    if against is not None and against.shape[1] > 0 and W.shape[1] > 0:
        # columns kept near the cutoff lose orthogonality to `against` by about
        # eps / sigma; a second pass restores it and drops what was only noise
        W = _orthonormal_pass(W, grad, against, REORTH_KEEP, relative=False)
    return W


def _orthonormal_pass(V, grad, against, tol, relative):
    N = V.shape[0]
    if V.shape[1] == 0:
        return np.zeros((N, 0))
    DV = grad @ V
    norms = np.linalg.norm(DV, axis=0)
    keep = norms > 0
    V = V[:, keep] / norms[keep]
    if V.shape[1] == 0:
        return np.zeros((N, 0))
    if against is not None and against.shape[1] > 0:
        Dq = grad @ against
        for _ in range(2):
            V -= against @ (Dq.T @ (grad @ V))
    DV = grad @ V
    U, sig, Wt = sla.svd(DV, full_matrices=False)
    cutoff = tol * (sig[0] if relative and sig.size else 1.0)
    r = int(np.sum(sig > cutoff))
    if r == 0:
        return np.zeros((N, 0))
    return V @ (Wt[:r].T / sig[:r])

"""Dense brute-force reference implementations, written independently of the package internals.

Only the mesh geometry (vertex coordinates, triangles, labels) is taken from the
package; every operator is rebuilt here from first principles.
"""

import itertools

import numpy as np
import scipy.linalg as sla
from scipy.sparse.csgraph import connected_components
import scipy.sparse as sp


def p1_gradients(P):
    """Constant gradients of the three barycentric hats on triangle ``P`` (3x2) and its area."""
    M = np.column_stack([np.ones(3), P])  # rows (1, x, y)
    C = np.linalg.inv(M)  # columns: coefficients of each hat
    area = 0.5 * abs(np.linalg.det(M))
    return C[1:, :].T, area  # (3 hats, 2)


def dense_stiffness(mesh, coeff_per_triangle):
    """``K[i, k] = sum_T a_T |T| grad(phi_i) . grad(phi_k)`` over interior DOFs."""
    N = mesh.n_dofs
    K = np.zeros((N, N))
    dof = mesh.interior_dof_index
    for t, tri in enumerate(mesh.triangles):
        a = coeff_per_triangle[t]
        if a == 0:
            continue
        G, area = p1_gradients(mesh.vertices[tri])
        local = a * area * G @ G.T
        for p in range(3):
            for q in range(3):
                i, k = dof[tri[p]], dof[tri[q]]
                if i >= 0 and k >= 0:
                    K[i, k] += local[p, q]
    return K


def dense_load(mesh, f=1.0):
    """Exact ``int f phi_i`` for constant ``f``: each incident triangle contributes ``|T|/3``."""
    F = np.zeros(mesh.n_dofs)
    for tri in mesh.triangles:
        _, area = p1_gradients(mesh.vertices[tri])
        for v in tri:
            i = mesh.interior_dof_index[v]
            if i >= 0:
                F[i] += f * area / 3.0
    return F


def dense_operators(sys):
    A = [dense_stiffness(sys.mesh, (sys.tri_labels == j).astype(float)) for j in range(sys.d)]
    return A, dense_load(sys.mesh)


def dense_solve(sys, y):
    """Full-order solution; ``inf`` entries handled by an explicit null-space basis of the constraints."""
    A, F = dense_operators(sys)
    y = list(y)
    S = [j for j, v in enumerate(y) if v == np.inf]
    free = [j for j in range(sys.d) if j not in S]
    K = sum(y[j] * A[j] for j in free)
    if not S:
        return np.linalg.solve(K, F)
    # constraints: zero gradient on every stiff triangle, boundary values zero
    rows = []
    dof = sys.mesh.interior_dof_index
    for t, tri in enumerate(sys.mesh.triangles):
        if sys.tri_labels[t] in S:
            for a, b in ((tri[0], tri[1]), (tri[0], tri[2])):
                r = np.zeros(sys.n_dofs)
                if dof[a] >= 0:
                    r[dof[a]] += 1
                if dof[b] >= 0:
                    r[dof[b]] -= 1
                rows.append(r)
    Z = sla.null_space(np.array(rows))
    if Z.shape[1] == 0:
        return np.zeros(sys.n_dofs)
    c = np.linalg.solve(Z.T @ K @ Z, Z.T @ F)
    return Z @ c


def merged_dimension(sys, S):
    """Dimension of the constrained space from graph components (scipy csgraph)."""
    mesh = sys.mesh
    nv = len(mesh.vertices)
    stiff = mesh.triangles[np.isin(sys.tri_labels, list(S))]
    edges = np.vstack([stiff[:, [0, 1]], stiff[:, [0, 2]], stiff[:, [1, 2]]])
    G = sp.coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(nv, nv))
    _, lab = connected_components(G, directed=False)
    in_stiff = np.zeros(nv, bool)
    in_stiff[stiff.ravel()] = True
    boundary = mesh.interior_dof_index < 0
    comps = set(lab[in_stiff])
    pinned = set(lab[in_stiff & boundary])
    free_vertices = np.sum(~in_stiff & ~boundary)
    return int(free_vertices + len(comps - pinned))


def word_surrogate_coefficients(A, F, center, axes, k):
    """``v_nu = (-1)^|nu| sum over words with letter counts nu of B_w1 ... B_wl g``, dense."""
    Abar = sum(c * Aj for c, Aj in zip(center, A))
    Ainv = np.linalg.inv(Abar)
    B = {j: Ainv @ A[j] for j in axes}
    g = Ainv @ F
    out = {}
    m = len(axes)
    for total in range(k + 1):
        for word in itertools.product(range(m), repeat=total):
            nu = tuple(word.count(p) for p in range(m))
            v = g.copy()
            for p in reversed(word):
                v = B[axes[p]] @ v
            out[nu] = out.get(nu, 0.0) + (-1) ** total * v
    return out


def mu_generalized_eig(S, Q, Lm):
    """``mu = 1/sigma_min`` with ``sigma_min^2`` the least generalized eigenvalue of
    ``(Q^T L G^{-1} L^T Q, Q^T S Q)``, ``G = L^T S^{-1} L``."""
    Sd = S.toarray() if sp.issparse(S) else S
    G = Lm.T @ np.linalg.solve(Sd, Lm)
    C = Lm.T @ Q
    lam = sla.eigh(C.T @ np.linalg.solve(G, C), Q.T @ Sd @ Q, eigvals_only=True)
    s2 = max(lam[0], 0.0)
    return np.inf if s2 <= 1e-26 else 1.0 / np.sqrt(s2)


def dense_h_minus1(S, load):
    Sd = S.toarray() if sp.issparse(S) else S
    L = np.linalg.cholesky(Sd)
    z = sla.solve_triangular(L, load, lower=True)
    return float(np.sqrt(z @ z))

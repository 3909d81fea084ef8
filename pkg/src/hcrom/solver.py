"""Full-order solves for any ``y`` in ``(0, inf]^d``, limit problems included, and norms.

Infinite diffusivities are handled by constraint elimination: vertices of the
stiff subdomains are merged into one unknown per connected component (pinned to
zero when the component reaches the outer boundary), which gives the discrete
stiff-inclusion solution exactly instead of approximating it by a large number.
"""

import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import InfiniteEnergyError, SolverError
from .linalg import spd_solve
from .param import INF, ParamVector, normalize

# energies below this count as "zero gradient" on a stiff subdomain
ZERO_ENERGY = 1e-20


class UnionFind:
    """Disjoint sets over ``0..size-1`` with path halving and union by size."""

    def __init__(self, size):
        self.parent = list(range(size))
        self.size = [1] * size

    def find(self, a):
        parent = self.parent
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return ra


@dataclass(frozen=True, eq=False)
class MergedSystem:
    """Discrete ``V_S``: full coefficients are ``R @ c`` for merged coefficients ``c``.

    ``merge_map[i]`` is the merged ordinal of interior DOF ``i`` or ``-1`` when it
    belongs to a boundary-touching stiff component (pinned to zero).
    """

    S_set: frozenset
    merge_map: np.ndarray
    R: sp.csr_matrix
    n_components: int

    @property
    def dim(self):
        return self.R.shape[1]


def build_merged(sys, S_set):
    """Merge DOFs of the subdomains in ``S_set`` into one unknown per connected component."""
    S_set = frozenset(int(j) for j in S_set)
    if not S_set:
        raise ValueError("S_set must be non-empty")
    if not S_set <= set(range(sys.d)):
        raise ValueError(f"S_set {sorted(S_set)} not within 0..{sys.d - 1}")
    key = ("merged", S_set)
    if key in sys._cache:
        return sys._cache[key]

    mesh = sys.mesh
    nv = len(mesh.vertices)
    stiff = mesh.triangles[np.isin(sys.tri_labels, list(S_set))]
    uf = UnionFind(nv)
    for a, b, c in stiff.tolist():
        uf.union(a, b)
        uf.union(a, c)
    in_stiff = np.zeros(nv, dtype=bool)
    in_stiff[stiff.ravel()] = True
    dof = mesh.interior_dof_index

    roots = {}
    pinned = set()
    for v in np.flatnonzero(in_stiff & (dof < 0)).tolist():
        pinned.add(uf.find(v))

    merge_map = -np.ones(sys.n_dofs, dtype=np.int64)
    ordinal = 0
    for v in np.flatnonzero(dof >= 0).tolist():  # DOF (row-major) order
        if in_stiff[v]:
            r = uf.find(v)
            if r in pinned:
                continue
            if r not in roots:
                roots[r] = ordinal
                ordinal += 1
            merge_map[dof[v]] = roots[r]
        else:
            merge_map[dof[v]] = ordinal
            ordinal += 1
    rows = np.flatnonzero(merge_map >= 0)
    R = sp.csr_matrix((np.ones(rows.size), (rows, merge_map[rows])), shape=(sys.n_dofs, ordinal))
    merged = MergedSystem(S_set, merge_map, R, len(roots))
    sys._cache[key] = merged
    return merged


def _solve_normalized(sys, y, tol, backend):
    S = y.infinite_set()
    coeffs = [0.0 if v == INF else v for v in y]
    if not S:
        return spd_solve(sys.operator(coeffs), sys.F, tol=tol, backend=backend)
    merged = build_merged(sys, S)
    if merged.dim == 0:
        return np.zeros(sys.n_dofs)
    R = merged.R
    free = [j for j in range(sys.d) if j not in S]
    K = sp.csr_matrix(R.T @ sys.operator(coeffs, free) @ R)
    rhs = R.T @ sys.F
    # every merged unknown touches a free subdomain or is pinned, so K is SPD
    if np.any(K.diagonal() <= 0):
        raise SolverError("merged limit system is singular")
    return R @ spd_solve(K, rhs, tol=tol, backend=backend)


def solve_full(sys, y, tol=1e-8, backend="direct"):
    """Finite-element solution ``u(y)``; entries equal to ``inf`` give the limit solution.

    The solve is carried out at the normalized parameter ``y / t`` (``t`` the
    smallest finite entry) and rescaled by ``1/t``. The all-infinite parameter
    returns the zero field.
    """
    y = ParamVector.coerce(y)
    if y.d != sys.d:
        raise ValueError(f"parameter has {y.d} entries, system has d={sys.d}")
    if not y.finite_set():
        return np.zeros(sys.n_dofs)
    t, yn = normalize(y)
    return _solve_normalized(sys, yn, tol, backend) / t


def solve_many(sys, params, threads=1, **kw):
    """Columns ``u(y)`` for every parameter, in input order."""
    params = list(params)
    if threads and threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            cols = list(pool.map(lambda y: solve_full(sys, y, **kw), params))
    else:
        cols = [solve_full(sys, y, **kw) for y in params]
    if not cols:
        return np.zeros((sys.n_dofs, 0))
    return np.column_stack(cols)


def h10_norm(sys, v):
    """``||v||_{H^1_0}`` from per-triangle gradients (columns allowed)."""
    return np.sqrt(np.sum(sys.subdomain_energies(v), axis=0))


def y_norm(sys, v, y):
    """Energy norm ``sqrt(sum_j y_j ||grad v||^2_{Omega_j})``.

    Infinite entries require zero energy on that subdomain (the field must lie in
    ``V_S``); they then contribute nothing.
    """
    y = ParamVector.coerce(y)
    e = sys.subdomain_energies(v)
    total = np.zeros(e.shape[1:])
    for j, yj in enumerate(y):
        if yj == INF:
            if np.any(e[j] > ZERO_ENERGY):
                raise InfiniteEnergyError(
                    f"field has energy {np.max(e[j]):.3e} on stiff subdomain {sys.names[j]}")
            continue
        total = total + yj * e[j]
    return np.sqrt(total)


def norms(sys, v, y="h10"):
    """``||v||_y`` for a parameter ``y``, or the H^1_0 norm for ``y == "h10"``."""
    if isinstance(y, str) and y == "h10":
        return float(h10_norm(sys, v))
    return float(y_norm(sys, v, y))


def save_field(path, sys, v, comment=""):
    header = f"cells_per_side={sys.mesh.cells_per_side} ndof={sys.n_dofs}"
    if comment:
        header += f" {comment}"
    np.savetxt(path, np.asarray(v), fmt="%.17g", header=header)


def load_field(path, sys=None):
    """Read a field written by :func:`save_field`; checks the mesh header against ``sys``."""
    with open(path) as fh:
        first = fh.readline()
    meta = dict(tok.split("=", 1) for tok in first.lstrip("# ").split() if "=" in tok)
    v = np.loadtxt(path, ndmin=1)
    if sys is not None:
        if int(meta.get("cells_per_side", -1)) != sys.mesh.cells_per_side or v.size != sys.n_dofs:
            raise ValueError(f"{os.fspath(path)}: field resolution does not match the system")
    return v

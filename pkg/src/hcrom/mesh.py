"""Structured P1 discretization of the square [-1, 1]^2 with a 4x4 subdomain grid.

The affine family is stored as one stiffness matrix per subdomain, so that the
parametric operator is ``sum_j y_j A_j``. Boundary vertices carry homogeneous
Dirichlet values and are eliminated: every matrix and vector here lives on the
interior degrees of freedom.
"""

import os
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.sparse as sp

from .errors import ResolutionWarning
from .linalg import Factorization

GRID = 4  # subdomain cells per side
GEOMETRIES = ("lipschitz4", "latin4", "grid16")


@dataclass(frozen=True, eq=False)
class StructuredMesh:
    """Uniform triangulation; every grid square is cut by its positive-slope diagonal.

    Vertex ``(i, j)`` sits at ``(-1 + i h, -1 + j h)`` and has index ``j (n+1) + i``.
    Interior DOFs are numbered row-major, boundary vertices map to ``-1``.
    """

    cells_per_side: int
    vertices: np.ndarray
    triangles: np.ndarray
    interior_dof_index: np.ndarray

    @property
    def h(self):
        return 2.0 / self.cells_per_side

    @property
    def n_dofs(self):
        return (self.cells_per_side - 1) ** 2

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    def triangle_areas(self):
        p = self.vertices[self.triangles]
        e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def triangle_cells(self):
        """Subdomain-grid square ``(col, row)`` holding each triangle."""
        n = self.cells_per_side
        v0 = self.triangles[:, 0]
        i, j = v0 % (n + 1), v0 // (n + 1)
        scale = n // GRID
        return np.stack([i // scale, j // scale], axis=1)

    def dof_coordinates(self):
        interior = self.interior_dof_index >= 0
        coords = np.empty((self.n_dofs, 2))
        coords[self.interior_dof_index[interior]] = self.vertices[interior]
        return coords


def build_mesh(cells_per_side):
    """Uniform triangulation of [-1, 1]^2 with ``cells_per_side`` squares per side."""
    n = int(cells_per_side)
    if n != cells_per_side or n < GRID or n % GRID:
        raise ValueError(
            f"cells_per_side must be a positive multiple of {GRID} "
            f"(cells may not straddle subdomain boundaries), got {cells_per_side}")
    h = 2.0 / n
    ii, jj = np.meshgrid(np.arange(n + 1), np.arange(n + 1))
    ii, jj = ii.ravel(), jj.ravel()
    vertices = np.stack([-1.0 + ii * h, -1.0 + jj * h], axis=1)

    ci, cj = np.meshgrid(np.arange(n), np.arange(n))
    ci, cj = ci.ravel(), cj.ravel()
    v00 = cj * (n + 1) + ci
    v10, v01, v11 = v00 + 1, v00 + n + 1, v00 + n + 2
    lower = np.stack([v00, v10, v11], axis=1)
    upper = np.stack([v00, v11, v01], axis=1)
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2], triangles[1::2] = lower, upper

    dof = -np.ones((n + 1) ** 2, dtype=np.int64)
    inner = (ii > 0) & (ii < n) & (jj > 0) & (jj < n)
    dof[inner] = (jj[inner] - 1) * (n - 1) + (ii[inner] - 1)
    return StructuredMesh(n, vertices, triangles, dof)


@dataclass(frozen=True, eq=False)
class SubdomainPartition:
    """Labels of the 16 quarter-side squares; ``cell_labels[col, row]`` in ``0..d-1``."""

    geometry_name: str
    d: int
    cell_labels: np.ndarray
    names: tuple

    def __post_init__(self):
        labels = np.asarray(self.cell_labels)
        if labels.shape != (GRID, GRID):
            raise ValueError(f"cell_labels must have shape {(GRID, GRID)}")
        used = set(np.unique(labels).tolist())
        if used != set(range(self.d)):
            raise ValueError(f"labels {sorted(used)} do not cover 0..{self.d - 1}")
        if len(self.names) != self.d:
            raise ValueError("one name per subdomain required")

    def label(self, col, row):
        return int(self.cell_labels[col, row])

    def index(self, name_or_index):
        """Subdomain index from a name (``"A"``) or an integer."""
        if isinstance(name_or_index, (int, np.integer)):
            if not 0 <= name_or_index < self.d:
                raise ValueError(f"subdomain index {name_or_index} out of range 0..{self.d - 1}")
            return int(name_or_index)
        try:
            return self.names.index(str(name_or_index))
        except ValueError:
            raise ValueError(f"unknown subdomain {name_or_index!r}; known {self.names}") from None


# rows listed bottom-to-top, entries left-to-right
_LATIN4 = ("ACBD", "CADB", "BDAC", "DBCA")


def make_partition(geometry_name, d=None):
    """Named subdomain layout on the 4x4 grid of squares.

    ``lipschitz4``: A = {(1,0)}, B = {(3,1)}, C = {(1,2),(2,2),(3,2)}, D = the rest.
    ``latin4``: the non-Lipschitz Latin-square layout. ``grid16``: one label per square.
    """
    labels = np.empty((GRID, GRID), dtype=np.int64)
    if geometry_name == "lipschitz4":
        expected, names = 4, tuple("ABCD")
        labels[:] = 3
        labels[1, 0] = 0
        labels[3, 1] = 1
        labels[1:4, 2] = 2
    elif geometry_name == "latin4":
        expected, names = 4, tuple("ABCD")
        for row, letters in enumerate(_LATIN4):
            for col, ch in enumerate(letters):
                labels[col, row] = "ABCD".index(ch)
    elif geometry_name == "grid16":
        expected = GRID * GRID
        names = tuple(f"c{col}{row}" for row in range(GRID) for col in range(GRID))
        for row in range(GRID):
            for col in range(GRID):
                labels[col, row] = row * GRID + col
    else:
        raise ValueError(f"unknown geometry {geometry_name!r}; expected one of {GEOMETRIES}")
    if d is not None and d != expected:
        raise ValueError(f"geometry {geometry_name} has d={expected}, got d={d}")
    return SubdomainPartition(geometry_name, expected, labels, names)


def _element_stiffness(mesh):
    """Closed-form P1 stiffness ``area * G G^T`` for every triangle, shape (nt, 3, 3)."""
    n = mesh.cells_per_side
    tri = mesh.triangles
    # integer grid offsets keep edge vectors exact up to a single rounding by h
    gi, gj = tri % (n + 1), tri // (n + 1)
    h = mesh.h
    x = (gi - gi[:, :1]) * h
    y = (gj - gj[:, :1]) * h
    area = 0.5 * (x[:, 1] * y[:, 2] - x[:, 2] * y[:, 1])
    # gradients of barycentric coordinates
    gx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    gy = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    gx /= 2 * area[:, None]
    gy /= 2 * area[:, None]
    return area[:, None, None] * (gx[:, :, None] * gx[:, None, :] + gy[:, :, None] * gy[:, None, :])


def _assemble_interior(mesh, local, weights=None):
    """Scatter element matrices onto interior DOFs."""
    dof = mesh.interior_dof_index[mesh.triangles]
    if weights is not None:
        local = local * weights[:, None, None]
        nz = weights != 0
        dof, local = dof[nz], local[nz]
    rows = np.repeat(dof, 3, axis=1)
    cols = np.tile(dof, (1, 3))
    vals = local.reshape(len(dof), 9)
    keep = (rows >= 0) & (cols >= 0)
    N = mesh.n_dofs
    return sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(N, N))


def _gradient_operator(mesh):
    """Sparse ``D`` with ``|D v|^2 = ||grad v||^2``: two scaled edge differences per triangle.

    On the positive-diagonal mesh each gradient component of a triangle involves
    exactly two vertices, so ``D`` has entries ``+-1/sqrt(2)`` and maps equal
    nodal values to an exact zero.
    """
    tri = mesh.triangles
    nt = len(tri)
    lower = np.arange(nt) % 2 == 0
    # (first, second) vertex positions of the x- and y-differences within each triangle
    ax = np.where(lower, 0, 2)
    bx = np.where(lower, 1, 1)
    ay = np.where(lower, 1, 0)
    by = np.where(lower, 2, 2)
    c = 1.0 / np.sqrt(2.0)
    dof = mesh.interior_dof_index
    r = np.arange(nt)
    rows = np.concatenate([2 * r, 2 * r, 2 * r + 1, 2 * r + 1])
    verts = np.concatenate([tri[r, bx], tri[r, ax], tri[r, by], tri[r, ay]])
    vals = np.concatenate([np.full(nt, c), np.full(nt, -c), np.full(nt, c), np.full(nt, -c)])
    cols = dof[verts]
    keep = cols >= 0
    return sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(2 * nt, mesh.n_dofs))


@dataclass(eq=False)
class FemSystem:
    """Mesh, partition and the assembled affine family on interior DOFs.

    Attributes
    ----------
    A : list of csr_matrix
        Per-subdomain stiffness, ``<A_j v, w> = int_{Omega_j} grad v . grad w``.
    F : ndarray
        Load vector of the source.
    S : csr_matrix
        H^1_0 Gram matrix, equal to ``sum_j A_j``.
    grad : csr_matrix
        Factor ``D`` of ``S`` (``S = D^T D``), two rows per triangle.
    tri_labels : ndarray
        Subdomain index of every triangle.
    """

    mesh: StructuredMesh
    partition: SubdomainPartition
    A: list
    F: np.ndarray
    S: sp.csr_matrix
    grad: sp.csr_matrix
    tri_labels: np.ndarray
    source: object = 1.0
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def d(self):
        return self.partition.d

    @property
    def n_dofs(self):
        return self.mesh.n_dofs

    @property
    def names(self):
        return self.partition.names

    @property
    def ell2_gram(self):
        """Discrete l2 product on nodal coefficients (identity)."""
        return sp.identity(self.n_dofs, format="csr")

    def operator(self, coeffs, subset=None):
        """``sum_j coeffs[j] A_j`` over ``subset`` (all subdomains by default)."""
        idx = range(self.d) if subset is None else subset
        M = sp.csr_matrix((self.n_dofs, self.n_dofs))
        for j in idx:
            M = M + coeffs[j] * self.A[j]
        return M

    def gram_factor(self):
        if "S" not in self._cache:
            self._cache["S"] = Factorization(self.S)
        return self._cache["S"]

    def subdomain_energies(self, V):
        """``v^T A_j v`` for every subdomain, computed triangle by triangle.

        Accepts one field (returns shape ``(d,)``) or columns (returns ``(d, k)``).
        Fields constant on a subdomain give an exact zero there.
        """
        V = np.asarray(V, dtype=float)
        DV = self.grad @ V
        per_tri = DV[0::2] ** 2 + DV[1::2] ** 2
        out = np.zeros((self.d,) + per_tri.shape[1:])
        np.add.at(out, self.tri_labels, per_tri)
        return out

    def energy_inner(self, U, V):
        """H^1_0 inner products ``U^T S V``."""
        return np.asarray(U).T @ (self.S @ V)


def _source_per_triangle(mesh, source):
    cells = mesh.triangle_cells()
    if np.isscalar(source):
        return np.full(mesh.n_triangles, float(source))
    table = np.asarray(source, dtype=float)
    if table.shape != (GRID, GRID):
        raise ValueError(f"per-cell source table must have shape {(GRID, GRID)} indexed [col, row]")
    return table[cells[:, 0], cells[:, 1]]


def assemble(mesh, partition, source=1.0):
    """Assemble ``A_j``, the load ``F`` and the Gram ``S`` for a piecewise-constant source.

    ``source`` is a scalar or a (4, 4) table of per-square values indexed ``[col, row]``.
    Element stiffness matrices and load integrals are exact (no quadrature).
    """
    cells = mesh.triangle_cells()
    tri_labels = partition.cell_labels[cells[:, 0], cells[:, 1]]
    local = _element_stiffness(mesh)
    A = []
    for j in range(partition.d):
        A.append(_assemble_interior(mesh, local, weights=(tri_labels == j).astype(float)))
    S = A[0].copy()
    for Aj in A[1:]:
        S = S + Aj
    S = sp.csr_matrix(S)

    f_tri = _source_per_triangle(mesh, source)
    contrib = np.repeat((f_tri * mesh.triangle_areas() / 3.0)[:, None], 3, axis=1)
    dof = mesh.interior_dof_index[mesh.triangles]
    keep = dof >= 0
    F = np.bincount(dof[keep], weights=contrib[keep], minlength=mesh.n_dofs)
    return FemSystem(mesh, partition, A, F, S, _gradient_operator(mesh), tri_labels, source)


def assemble_with_coefficient(mesh, coeff_per_triangle):
    """Stiffness matrix for an arbitrary per-triangle constant diffusion coefficient."""
    return _assemble_interior(mesh, _element_stiffness(mesh),
                              weights=np.asarray(coeff_per_triangle, dtype=float))


def build_system(geometry_name="lipschitz4", cells_per_side=80, source=1.0):
    """Convenience wrapper: mesh + partition + assembly."""
    return assemble(build_mesh(cells_per_side), make_partition(geometry_name), source)


def h_minus1_norm(sys, load):
    """Discrete dual norm ``sqrt(load^T S^{-1} load)``."""
    load = np.asarray(load, dtype=float)
    if load.shape != (sys.n_dofs,):
        raise ValueError(f"load must have length {sys.n_dofs}")
    if not np.any(load):
        return 0.0
    x = sys.gram_factor().solve(load)
    return float(np.sqrt(max(load @ x, 0.0)))


def subdomain_interior_dofs(sys, j):
    """Interior DOFs whose every incident triangle is labeled ``j``."""
    mesh = sys.mesh
    nv = len(mesh.vertices)
    foreign = np.zeros(nv, dtype=bool)
    foreign[mesh.triangles[sys.tri_labels != j].ravel()] = True
    inside = np.zeros(nv, dtype=bool)
    inside[mesh.triangles[sys.tri_labels == j].ravel()] = True
    verts = np.flatnonzero(inside & ~foreign & (mesh.interior_dof_index >= 0))
    return np.sort(mesh.interior_dof_index[verts])


def subdomain_h_minus1(sys, j, load=None):
    """``||f||_{H^{-1}(Omega_j)}`` against hats vanishing on the boundary of ``Omega_j``."""
    if not 0 <= j < sys.d:
        raise ValueError(f"subdomain index {j} out of range 0..{sys.d - 1}")
    load = sys.F if load is None else np.asarray(load, dtype=float)
    dofs = subdomain_interior_dofs(sys, j)
    if dofs.size == 0:
        warnings.warn(f"subdomain {sys.names[j]} has no interior DOFs at "
                      f"cells_per_side={sys.mesh.cells_per_side}", ResolutionWarning)
        return 0.0
    b = load[dofs]
    if not np.any(b):
        return 0.0
    x = Factorization(sys.S[dofs][:, dofs]).solve(b)
    return float(np.sqrt(max(b @ x, 0.0)))


def framing_constants(sys):
    """``(c_f, C_f)``: the min over subdomains of the local dual norm, and the global one."""
    key = "framing"
    if key not in sys._cache:
        c_f = min(subdomain_h_minus1(sys, j) for j in range(sys.d))
        sys._cache[key] = (c_f, h_minus1_norm(sys, sys.F))
    return sys._cache[key]


def export_system(sys, directory):
    """Write ``A_j``, ``S`` in Matrix Market format and ``F`` as a text vector."""
    os.makedirs(directory, exist_ok=True)
    for j, Aj in enumerate(sys.A):
        scipy.io.mmwrite(os.path.join(directory, f"A_{sys.names[j]}.mtx"), Aj, symmetry="symmetric")
    scipy.io.mmwrite(os.path.join(directory, "S.mtx"), sys.S, symmetry="symmetric")
    header = (f"cells_per_side={sys.mesh.cells_per_side} geometry={sys.partition.geometry_name} "
              f"ndof={sys.n_dofs}")
    np.savetxt(os.path.join(directory, "F.txt"), sys.F, fmt="%.17g", header=header)


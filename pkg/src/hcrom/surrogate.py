"""Neumann-series polynomial surrogates on parameter rectangles and the spaces they span.

On a rectangle with center ``ybar`` the solution expands as
``u(ybar + z) = sum_nu v_nu z^nu`` with ``v_0 = A_ybar^{-1} F`` and the
first-factor recursion ``v_nu = -A_ybar^{-1} sum_{j: nu_j >= 1} A_j v_{nu - e_j}``.
Rectangles reaching ``inf`` run the same recursion in the merged space of the
stiff subdomains, which expands the limit map instead.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import NumericalError
from .linalg import Factorization, energy_orthonormalize
from .param import INF, Box, DyadicRectangle, ParamVector, enumerate_cover, level_for_degree, \
    locate_rectangle, normalize
from .reduced_basis import ReducedSpace, _relative, galerkin_coefficients
from .solver import build_merged, solve_many

log = logging.getLogger(__name__)

RANK_TOL = 1e-10
GROWTH_SLACK = 10.0
MAX_FIELDS = 1_000_000


def multi_indices(m, k):
    """Multi-indices of ``m`` variables with total degree ``<= k`` in graded-lex order."""
    out = []
    for t in range(k + 1):
        level = [nu for nu in itertools.product(range(t + 1), repeat=m) if sum(nu) == t]
        out.extend(sorted(level, reverse=True))
    return out


def _multinomial(nu):
    out = math.factorial(sum(nu))
    for v in nu:
        out //= math.factorial(v)
    return out


@dataclass(eq=False)
class RectangleSurrogate:
    """Degree-``k`` Taylor coefficients of ``u`` (or of the limit map) around the box center.

    ``coeff_fields[:, i]`` is ``v_nu`` for ``nu = indices[i]``, the exponents
    running over ``axes`` (the varying finite axes).
    """

    sys: object
    box: Box
    k: int
    center: tuple
    axes: tuple
    indices: list
    coeff_fields: np.ndarray
    merged: object = None
    rect: DyadicRectangle = None

    @property
    def stiff_set(self):
        return frozenset(self.box.infinite_axes())

    def field(self, nu):
        return self.coeff_fields[:, self.indices.index(tuple(nu))]


def _as_box(sys, rect, axes=None):
    if isinstance(rect, Box):
        return rect, None
    if isinstance(rect, DyadicRectangle):
        return rect.box(sys.d, axes), rect
    lo, hi = rect
    return Box(tuple(lo), tuple(hi)), None


def build_rectangle_surrogate(sys, rect, k, axes=None):
    """Coefficient fields of the degree-``k`` Neumann surrogate on ``rect``.

    Parameters
    ----------
    sys : FemSystem
    rect : Box, DyadicRectangle or (lower, upper)
        Every lower bound must be ``>= 1``; varying finite axes need
        ``upper <= 2 * lower`` so the series contracts by ``1/3`` per degree.
    k : int
        Total degree.
    axes : sequence of int, optional
        Subdomains carried by a :class:`DyadicRectangle` of fewer than ``d`` axes;
        the others are frozen at 1.

    Raises
    ------
    NumericalError
        If a coefficient field exceeds the contraction bound by more than a
        factor 10 (a symptom of a bad factorization).
    """
    if k < 0:
        raise ValueError("degree must be non-negative")
    box, dyadic = _as_box(sys, rect, axes)
    if box.d != sys.d:
        raise ValueError(f"rectangle has {box.d} axes, system has d={sys.d}")
    for j, (a, b) in enumerate(zip(box.lower, box.upper)):
        if a < 1.0:
            raise ValueError(f"axis {j}: lower bound {a} < 1 (normalize the parameter domain first)")
        if b != INF and b > 2.0 * a * (1 + 1e-14):
            raise ValueError(f"axis {j}: [{a}, {b}] is wider than [a, 2a]; the series would not contract")

    S = frozenset(box.infinite_axes())
    center = box.center()
    var = box.varying_axes()
    indices = multi_indices(len(var), k)
    free = [j for j in range(sys.d) if j not in S]

    if S:
        merged = build_merged(sys, S)
        R = merged.R
        ops = {j: sp.csr_matrix(R.T @ sys.A[j] @ R) for j in free}
        F = R.T @ sys.F
        lift = lambda v: R @ v  # noqa: E731
    else:
        merged = None
        ops = {j: sys.A[j] for j in free}
        F = sys.F
        lift = lambda v: v  # noqa: E731

    dim = F.shape[0]
    if dim == 0:
        coeff = np.zeros((sys.n_dofs, len(indices)))
        return RectangleSurrogate(sys, box, k, center, var, indices, coeff, merged, dyadic)

    A_bar = sum(center[j] * ops[j] for j in free)
    lu = Factorization(A_bar)
    energy = lambda v: math.sqrt(max(float(v @ (A_bar @ v)), 0.0))  # noqa: E731

    v = {(0,) * len(var): lu.solve(F)}
    g_norm = energy(v[(0,) * len(var)])
    for nu in indices[1:]:
        rhs = np.zeros(dim)
        for p, j in enumerate(var):
            if nu[p] >= 1:
                prev = nu[:p] + (nu[p] - 1,) + nu[p + 1:]
                rhs += ops[j] @ v[prev]
        v[nu] = -lu.solve(rhs)
        scale = np.prod([center[j] ** nu[p] for p, j in enumerate(var)])
        bound = GROWTH_SLACK * _multinomial(nu) * g_norm
        if energy(v[nu]) * scale > bound:
            raise NumericalError(
                f"surrogate coefficient {nu} violates the contraction bound "
                f"({energy(v[nu]) * scale:.3e} > {bound:.3e})")
    coeff = np.column_stack([lift(v[nu]) for nu in indices])
    return RectangleSurrogate(sys, box, k, center, var, indices, coeff, merged, dyadic)


def _monomials(surr, y):
    z = [y[j] - surr.center[j] for j in surr.axes]
    mono = {}
    out = np.empty(len(surr.indices))
    for i, nu in enumerate(surr.indices):
        if not any(nu):
            mono[nu] = 1.0
        else:
            p = next(q for q, e in enumerate(nu) if e)  # peel one factor off the first variable
            prev = nu[:p] + (nu[p] - 1,) + nu[p + 1:]
            mono[nu] = mono[prev] * z[p]
        out[i] = mono[nu]
    return out


def evaluate_surrogate(surr, y):
    """Surrogate field at ``y``; raises ``ValueError`` when ``y`` is outside the rectangle.

    Stiff axes of an infinite rectangle accept any value in ``[lower, inf]``; the
    output is then the surrogate of the limit map (an element of the merged space).
    """
    y = ParamVector.coerce(y)
    if not surr.box.contains(y, rtol=1e-12):
        raise ValueError(f"{y} lies outside the surrogate rectangle "
                         f"{list(zip(surr.box.lower, surr.box.upper))}")
    return surr.coeff_fields @ _monomials(surr, y)


@dataclass(eq=False)
class LocalSpace:
    """Energy-orthonormal basis of ``span{v_nu}`` for one rectangle."""

    ell: tuple
    basis: np.ndarray
    S_set: frozenset = frozenset()
    box: Box = None

    @property
    def dim(self):
        return self.basis.shape[1]

    def project(self, sys, u):
        """H^1_0-orthogonal projection (the basis is energy-orthonormal)."""
        return self.basis @ (self.basis.T @ (sys.S @ u))


def build_local_space(surr, tol=RANK_TOL):
    ell = surr.rect.ell if surr.rect is not None else ()
    basis = energy_orthonormalize(surr.coeff_fields, surr.sys.grad, tol=tol, relative=True)
    return LocalSpace(tuple(ell), basis, surr.stiff_set, surr.box)


@dataclass(eq=False)
class GlobalSpace:
    """Library of local spaces over the cover plus their orthonormalized sum."""

    sys: object
    k: int
    C0: float
    cover: object
    active: tuple
    locals: dict
    basis: np.ndarray
    _reduced: object = field(default=None, repr=False)

    @property
    def L(self):
        return self.cover.L

    @property
    def n(self):
        return self.basis.shape[1]

    def reduced(self):
        if self._reduced is None:
            self._reduced = ReducedSpace.from_basis(self.sys, self.basis)
        return self._reduced

    def locate(self, y):
        """Rectangle index of the normalized ``y`` over the active axes."""
        _, yn = normalize(ParamVector.coerce(y))
        return locate_rectangle([yn[j] for j in self.active], self.L).ell

    def project(self, u):
        return self.basis @ (self.basis.T @ (self.sys.S @ u))

    def library_project(self, y, u):
        """Locate-then-project: H^1_0 projection onto the local space of ``y``'s rectangle."""
        return self.locals[self.locate(y)].project(self.sys, u)


def cover_size(k, C0, m, full):
    L = level_for_degree(k, C0)
    return (L + 1) ** m if full else (L + 1) ** m - L ** m


def build_global_space(sys, k, C0=1.0, active=None, tol=RANK_TOL, max_fields=MAX_FIELDS, threads=1):
    """Local spaces over every rectangle of the cover and the global space they span.

    ``active`` lists the varying subdomains (default all); the others are frozen at 1,
    in which case the full grid ``{0..L}^m`` is needed to cover the normalized slice.

    Raises
    ------
    ValueError
        When the number of coefficient fields (rectangles times multi-indices)
        exceeds ``max_fields``; the count is computed before anything is built.
    """
    active = tuple(range(sys.d)) if active is None else tuple(int(j) for j in active)
    m = len(active)
    full = m < sys.d
    n_rect = cover_size(k, C0, m, full)
    n_fields = n_rect * math.comb(k + m, m)
    if n_fields > max_fields:
        raise ValueError(
            f"cover too large: {n_rect} rectangles x {math.comb(k + m, m)} multi-indices = "
            f"{n_fields} fields at d={m}, k={k} (limit {max_fields}); lower k or the number of active axes")
    cover = enumerate_cover(k, C0, d=m, full=full)

    def one(ell):
        rect = DyadicRectangle(ell, cover.L)
        return build_local_space(build_rectangle_surrogate(sys, rect, k, axes=active), tol=tol)

    ells = list(cover.ells)
    if threads and threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            spaces = list(pool.map(one, ells))
    else:
        spaces = [one(e) for e in ells]
    library = dict(zip(ells, spaces))

    Q = np.zeros((sys.n_dofs, 0))
    for ell in ells:
        new = energy_orthonormalize(library[ell].basis, sys.grad, against=Q, tol=tol, relative=False)
        Q = np.hstack([Q, new])
    log.info("k=%d L=%d: %d rectangles, global dimension %d", k, cover.L, len(ells), Q.shape[1])
    return GlobalSpace(sys, k, float(C0), cover, active, library, Q)


def _rel(sys, E, U):
    num = np.sqrt(np.maximum(np.einsum("ij,ij->j", E, sys.S @ E), 0.0))
    den = np.sqrt(np.einsum("ij,ij->j", U, sys.S @ U))
    return _relative(num, den)


def surrogate_study(sys, ks, test, C0=1.0, active=None, threads=1, truth=None):
    """Error rows for the rectangle-cover spaces at each degree in ``ks``.

    Each degree yields one row per rectangle (local space errors over the test
    points located there) and one ``global`` row. Columns: ``k, L, n,
    rectangle, max_rel_err_h10, max_rel_err_galerkin, ratio_h10``; the ratio is
    the global H^1_0 error over the previous degree's and is ``nan`` otherwise.
    """
    params = list(test)
    if truth is None:
        truth = solve_many(sys, params, threads=threads)
    rows = []
    prev = None
    for k in ks:
        space = build_global_space(sys, k, C0, active, threads=threads)
        where = {}
        for i, y in enumerate(params):
            where.setdefault(space.locate(y), []).append(i)
        for ell in space.cover.ells:
            idx = where.get(ell, [])
            if not idx:
                continue
            loc = space.locals[ell]
            U = truth[:, idx]
            red = ReducedSpace.from_basis(sys, loc.basis)
            eh = _rel(sys, U - loc.project(sys, U), U)
            G = np.column_stack([red.Q @ galerkin_coefficients(red, params[i], warn=False) for i in idx])
            eg = _rel(sys, U - G, U)
            rows.append(dict(k=k, L=space.L, n=loc.dim, rectangle=DyadicRectangle(ell, space.L).label(),
                             max_rel_err_h10=float(eh.max()), max_rel_err_galerkin=float(eg.max()),
                             ratio_h10=float("nan")))
        red = space.reduced()
        eh = _rel(sys, truth - space.project(truth), truth)
        G = np.column_stack([red.Q @ galerkin_coefficients(red, y, warn=False) for y in params])
        eg = _rel(sys, truth - G, truth)
        err = float(eh.max())
        rows.append(dict(k=k, L=space.L, n=space.n, rectangle="global", max_rel_err_h10=err,
                         max_rel_err_galerkin=float(eg.max()),
                         ratio_h10=err / prev if prev else float("nan")))
        prev = err
    return rows

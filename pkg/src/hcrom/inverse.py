"""PBDW state estimation from local-average sensors and inverse-diffusivity recovery."""

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from shapely.geometry import Polygon, box as shapely_box

from .errors import NumericalError, StabilityError
from .linalg import energy_orthonormalize
from .param import INF, ParamVector

log = logging.getLogger(__name__)

MAX_GRAM_COND = 1e12
SIGMA_FLOOR = 1e-13
INVERSE_ZERO = 1e-12
MAX_R_COND = 1e14


# ----------------------------------------------------------------------------
# sensors


def sensor_centers(grid):
    """Centers of a ``grid x grid`` uniform layout over ``[-1, 1]^2`` (row-major from bottom-left)."""
    c = -1.0 + (np.arange(grid) + 0.5) * 2.0 / grid
    return [(x, y) for y in c for x in c]


def average_functional(mesh, center, side):
    """Load vector of ``v -> mean of v over the square`` (clipped to the domain), integrated exactly.

    Each triangle is clipped against the square; on the clipped polygon ``P`` a
    linear hat ``phi`` integrates to ``|P| * phi(centroid(P))``.
    """
    cx, cy = center
    half = 0.5 * side
    x0, y0 = max(cx - half, -1.0), max(cy - half, -1.0)
    x1, y1 = min(cx + half, 1.0), min(cy + half, 1.0)
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"sensor at {center} with side {side} does not meet the domain")
    square = shapely_box(x0, y0, x1, y1)
    P = mesh.vertices[mesh.triangles]  # (T, 3, 2)
    lo, hi = P.min(axis=1), P.max(axis=1)
    hit = np.flatnonzero((hi[:, 0] > x0) & (lo[:, 0] < x1) & (hi[:, 1] > y0) & (lo[:, 1] < y1))
    load = np.zeros(mesh.n_dofs)
    for t in hit:
        tri = P[t]
        piece = Polygon(tri).intersection(square)
        if piece.area <= 0.0:
            continue
        gx, gy = piece.centroid.x, piece.centroid.y
        # barycentric coordinates of the centroid
        T = np.array([[tri[1, 0] - tri[0, 0], tri[2, 0] - tri[0, 0]],
                      [tri[1, 1] - tri[0, 1], tri[2, 1] - tri[0, 1]]])
        l1, l2 = np.linalg.solve(T, [gx - tri[0, 0], gy - tri[0, 1]])
        lam = (1.0 - l1 - l2, l1, l2)
        for a, la in zip(mesh.triangles[t], lam):
            i = mesh.interior_dof_index[a]
            if i >= 0:
                load[i] += piece.area * la
    return load / square.area


@dataclass(eq=False)
class MeasurementSuite:
    """Sensor functionals ``L[:, i]`` (dual vectors) and their Riesz representers ``omegas = S^{-1} L``."""

    functionals: np.ndarray
    omegas: np.ndarray
    centers: list
    side: float
    gram_cond: float

    @property
    def m(self):
        return self.functionals.shape[1]

    def measure(self, u):
        """``w_i = l_i(u)`` for a field (or columns of fields)."""
        return self.functionals.T @ u


def build_suite(sys, spec):
    """Local-average sensors.

    ``spec`` holds ``side`` and either ``grid`` (``g x g`` uniform centers) or
    an explicit ``centers`` list.

    Raises
    ------
    NumericalError
        When the representers are numerically dependent (Gram condition number
        above ``1e12``), e.g. for duplicated sensors.
    """
    side = float(spec.get("side", 0.25))
    if not side > 0:
        raise ValueError("sensor side must be positive")
    if "centers" in spec:
        centers = [tuple(map(float, c)) for c in spec["centers"]]
    else:
        centers = sensor_centers(int(spec.get("grid", 4)))
    if not centers:
        raise ValueError("no sensors requested")
    Lm = np.column_stack([average_functional(sys.mesh, c, side) for c in centers])
    Om = sys.gram_factor().solve(Lm)
    G = Lm.T @ Om
    G = 0.5 * (G + G.T)
    cond = float(np.linalg.cond(G))
    if not np.isfinite(cond) or cond > MAX_GRAM_COND:
        raise NumericalError(f"sensor representers are dependent: Gram condition number {cond:.3e}")
    return MeasurementSuite(Lm, Om, centers, side, cond)


# ----------------------------------------------------------------------------
# PBDW


@dataclass(eq=False)
class PbdwSystem:
    space: object  # ReducedSpace or ReducedBasis
    suite: MeasurementSuite
    G: np.ndarray
    C: np.ndarray
    mu_n: float
    deficient: np.ndarray = None  # Q-coordinates of the least observed direction

    @property
    def n(self):
        return self.space.n

    @property
    def m(self):
        return self.suite.m


def _mu(sys, Q, omegas):
    Vo = energy_orthonormalize(Q, sys.grad)
    Wo = energy_orthonormalize(omegas, sys.grad)
    n = Q.shape[1]
    if Vo.shape[1] < n:
        raise NumericalError("reduced basis is rank deficient in H^1_0")
    cross = (sys.grad @ Vo).T @ (sys.grad @ Wo)  # (n, m')
    U, sig, _ = sla.svd(cross, full_matrices=True)
    smin = sig[-1] if Wo.shape[1] >= n else 0.0
    direction = U[:, -1]
    # back to Q coordinates: Vo = Q T for some T, solve in least squares
    coeff = np.linalg.lstsq(Q, Vo @ direction, rcond=None)[0]
    mu = INF if smin <= SIGMA_FLOOR else 1.0 / smin
    return mu, coeff


def build_pbdw(sys, space, suite):
    C = suite.functionals.T @ space.Q
    G = suite.functionals.T @ suite.omegas
    G = 0.5 * (G + G.T)
    mu, direction = _mu(sys, space.Q, suite.omegas)
    return PbdwSystem(space, suite, G, C, mu, direction)


def mu(p):
    """Stability constant ``1 / sigma_min`` between ``V_n`` and ``W`` (``inf`` when singular)."""
    return p.mu_n


def pbdw_solve(p, w):
    """Coefficients ``(eta, c)`` of ``u* = omegas @ eta + Q @ c`` and ``v* = Q @ c``."""
    w = np.asarray(w, dtype=float)
    if w.shape != (p.m,):
        raise ValueError(f"expected {p.m} measurements, got shape {w.shape}")
    if p.mu_n == INF:
        j = int(np.argmax(np.abs(p.deficient)))
        raise StabilityError(
            f"V_n meets the orthogonal complement of the sensor space (mu_n = inf, n={p.n}, m={p.m}); "
            f"least observed direction is dominated by basis vector {j}; add sensors or reduce n")
    n, m = p.n, p.m
    K = np.block([[p.G, p.C], [p.C.T, np.zeros((n, n))]])
    sol = np.linalg.solve(K, np.concatenate([w, np.zeros(n)]))
    return sol[:m], sol[m:]


def pbdw_reconstruct(p, w):
    """PBDW state ``u*`` and its background part ``v*`` from measurements ``w``."""
    eta, c = pbdw_solve(p, w)
    v_star = p.space.Q @ c
    return p.suite.omegas @ eta + v_star, v_star


# ----------------------------------------------------------------------------
# parameter estimation


@dataclass(frozen=True)
class ParamEstimate:
    """``values[j] = 1 / inverse[j]``; ``flags[j]`` is ``ok``, ``infinite`` or
    ``negative inverse diffusivity`` (then ``values[j]`` is nan)."""

    values: tuple
    inverse: np.ndarray
    flags: tuple
    coefficients: np.ndarray

    @property
    def ok(self):
        return all(f != "negative inverse diffusivity" for f in self.flags)

    def as_param(self):
        if not self.ok:
            raise NumericalError("estimate has negative inverse diffusivities: " + ", ".join(
                str(j) for j, f in enumerate(self.flags) if f == "negative inverse diffusivity"))
        return ParamVector(self.values)


def snapshot_coefficients(rb, c_q):
    """Coefficients on the snapshots ``u^i`` (selection order) of the field ``Q @ c_q``."""
    R = rb.R
    if R.size:
        cond = np.linalg.cond(R)
        if not np.isfinite(cond) or cond > MAX_R_COND:
            raise NumericalError(
                f"snapshot change of basis is singular (cond(R) = {cond:.2e}); truncate the basis")
    c_sorted = sla.solve_triangular(R, c_q, lower=False)
    c = np.empty_like(c_sorted)
    c[rb.order] = c_sorted
    return c


def inverse_from_coefficients(params, c):
    """Estimate from ``v = sum_i c_i u(y^i)``: ``s_j = sum_i c_i / y^i_j``, ``y*_j = 1 / s_j``."""
    inv = np.array([ParamVector.coerce(y).inverse() for y in params])  # (n, d)
    s = c @ inv
    values, flags = [], []
    for sj in s:
        if sj > INVERSE_ZERO:
            values.append(1.0 / sj)
            flags.append("ok")
        elif sj >= -INVERSE_ZERO:
            values.append(INF)
            flags.append("infinite")
        else:
            values.append(math.nan)
            flags.append("negative inverse diffusivity")
    return ParamEstimate(tuple(values), s, tuple(flags), np.asarray(c))


def estimate_params(p, w):
    """Parameter candidate from the PBDW background state expanded in snapshot coordinates."""
    rb = p.space
    if getattr(rb, "R", None) is None:
        raise ValueError("parameter estimation needs a snapshot basis (ReducedBasis)")
    _, c_q = pbdw_solve(p, w)
    return inverse_from_coefficients(rb.params, snapshot_coefficients(rb, c_q))


def inverse_error(est, y_true):
    """``||s - 1/y||_inf / ||1/y||_inf`` with ``s`` the raw inverse estimate (negative entries included)."""
    ref = ParamVector.coerce(y_true).inverse()
    diff = np.abs(est.inverse - ref)
    return float(np.max(diff) / np.max(np.abs(ref)))


# ----------------------------------------------------------------------------
# CSV exchange


def write_measurements(path, w, noise=None):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["sensor", "value"] if noise is None else ["sensor", "value", "noise"])
        for i, v in enumerate(w):
            row = [i, repr(float(v))]
            if noise is not None:
                row.append(repr(float(noise)))
            out.writerow(row)


def read_measurements(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "value" not in rows[0]:
        raise ValueError(f"{path}: expected columns sensor,value")
    rows.sort(key=lambda r: int(r["sensor"]))
    if [int(r["sensor"]) for r in rows] != list(range(len(rows))):
        raise ValueError(f"{path}: sensor ids must be 0..m-1 without gaps")
    return np.array([float(r["value"]) for r in rows])


def write_estimate(path, est, names, y_true=None):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        header = ["subdomain", "y_star", "inverse", "flag"]
        if y_true is not None:
            header += ["y_true", "rel_inverse_err"]
        out.writerow(header)
        ref = None if y_true is None else ParamVector.coerce(y_true).inverse()
        for j, name in enumerate(names):
            v = est.values[j]
            row = [name, "inf" if v == INF else repr(float(v)), repr(float(est.inverse[j])), est.flags[j]]
            if ref is not None:
                yt = ParamVector.coerce(y_true)[j]
                err = abs(est.inverse[j] - ref[j]) / np.max(np.abs(ref))
                row += ["inf" if yt == INF else repr(float(yt)), repr(float(err))]
            out.writerow(row)

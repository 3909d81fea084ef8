"""Snapshot selection, contrast-sorted orthonormalization and the two reduced projections."""

import csv
import json
import logging
import os
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import LimitSpaceWarning, NumericalError
from .param import INF, ParamVector, format_param, normalize, parse_param
from .solver import solve_many

log = logging.getLogger(__name__)

STRATEGIES = ("random", "random-inf", "greedy-h10", "greedy-galerkin")
KERNEL_TOL = 1e-10
GREEDY_FLOOR = 1e-14


# ----------------------------------------------------------------------------
# training sets


@dataclass(frozen=True)
class TrainingSet:
    """Normalized, de-duplicated parameters (``min`` finite entry equal to 1)."""

    params: tuple
    sampling_spec: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.params:
            raise ValueError("training set is empty")

    def __len__(self):
        return len(self.params)

    def __iter__(self):
        return iter(self.params)

    def __getitem__(self, i):
        return self.params[i]

    def union(self, other):
        return _finalize(list(self.params) + list(other.params),
                         {"kind": "union", "parts": [self.sampling_spec, other.sampling_spec]})


def _key(y):
    return tuple(INF if v == INF else float(f"{v:.12g}") for v in y)


def _finalize(raw, spec):
    seen, out = set(), []
    for y in raw:
        y = ParamVector.coerce(y)
        if not y.finite_set():
            continue  # all-infinite: u = 0, no relative error defined
        y = normalize(y)[1]
        k = _key(y)
        if k not in seen:
            seen.add(k)
            out.append(y)
    return TrainingSet(tuple(out), spec)


def _inverse_to_param(z, d, active, frozen=1.0):
    y = [frozen] * d
    for j, zj in zip(active, z):
        y[j] = INF if zj == 0 else 1.0 / zj
    return ParamVector(tuple(y))


def make_training_set(spec):
    """Build a parameter set from a sampling description.

    Keys: ``kind`` in {``grid``, ``random``, ``loguniform``, ``loggrid``, ``list``, ``union``};
    ``d`` (number of subdomains); ``active`` (varying axes, others frozen at 1).

    ``grid``
        Tensor grid of inverse parameters ``z = 1/y`` in ``{0, 1/T, ..., 1}``
        (``z = 0`` is ``inf``; drop it with ``include_inf=False``).
    ``random``
        ``n`` draws of ``z`` uniform on ``(0, 1]`` (``seed``).
    ``loguniform``
        ``n`` draws of ``z = 10**(-decades * U)`` (``seed``).
    ``loggrid``
        ``n`` values of ``y`` log-spaced on ``[1, 10**decades]`` per active axis, plus
        ``inf`` when ``include_inf``.
    ``list``
        Explicit ``params`` (strings such as ``"inf,1,1,1"`` or lists).
    ``union``
        ``parts``: list of specs.
    """
    kind = spec.get("kind", "grid")
    if kind == "union":
        parts = [make_training_set(s) for s in spec["parts"]]
        raw = [y for p in parts for y in p.params]
        return _finalize(raw, dict(spec))
    if kind == "list":
        return _finalize([ParamVector.coerce(p) for p in spec["params"]], dict(spec))

    d = int(spec["d"])
    active = list(spec.get("active", range(d)))
    if not active:
        raise ValueError("sampling spec needs at least one active axis")
    if any(not 0 <= j < d for j in active):
        raise ValueError(f"active axes {active} out of range 0..{d - 1}")
    m = len(active)
    raw = []
    if kind == "grid":
        T = int(spec.get("T", 10))
        start = 0 if spec.get("include_inf", True) else 1
        axis = [i / T for i in range(start, T + 1)]
        grids = np.meshgrid(*([axis] * m), indexing="ij")
        for z in zip(*(g.ravel() for g in grids)):
            raw.append(_inverse_to_param(z, d, active))
    elif kind in ("random", "loguniform"):
        rng = np.random.default_rng(spec.get("seed", 0))
        n = int(spec.get("n", 100))
        U = rng.random((n, m))
        if kind == "random":
            Z = 1.0 - U
        else:
            Z = 10.0 ** (-float(spec.get("decades", 6)) * U)
        raw = [_inverse_to_param(z, d, active) for z in Z]
    elif kind == "loggrid":
        n = int(spec.get("n", 20))
        axis = list(np.logspace(0.0, float(spec.get("decades", 6)), n))
        if spec.get("include_inf", True):
            axis.append(INF)
        grids = np.meshgrid(*([np.array(axis)] * m), indexing="ij")
        for yy in zip(*(g.ravel() for g in grids)):
            y = [1.0] * d
            for j, v in zip(active, yy):
                y[j] = v
            raw.append(ParamVector(tuple(y)))
    else:
        raise ValueError(f"unknown sampling kind {kind!r}")
    return _finalize(raw, dict(spec))


# ----------------------------------------------------------------------------
# reduced spaces and projections


@dataclass(eq=False)
class ReducedSpace:
    """Basis ``Q`` (columns, nodal coefficients) with pre-projected operators."""

    Q: np.ndarray
    A_hat: np.ndarray  # (d, n, n)
    F_hat: np.ndarray
    S_hat: np.ndarray
    SQ: np.ndarray  # S @ Q, for H^1_0 projections

    @classmethod
    def from_basis(cls, sys, Q):
        Q = np.asarray(Q, dtype=float)
        if Q.ndim == 1:
            Q = Q[:, None]
        A_hat = np.stack([Q.T @ (Aj @ Q) for Aj in sys.A]) if Q.shape[1] else np.zeros((sys.d, 0, 0))
        A_hat = 0.5 * (A_hat + A_hat.transpose(0, 2, 1))
        S_hat = A_hat.sum(axis=0)
        return cls(Q, A_hat, Q.T @ sys.F, S_hat, sys.S @ Q)

    @property
    def n(self):
        return self.Q.shape[1]

    @property
    def d(self):
        return self.A_hat.shape[0]


@dataclass(eq=False)
class ReducedBasis(ReducedSpace):
    """Snapshot basis; ``Q R = U[:, order]`` with ``order`` sorting by decreasing contrast."""

    params: tuple = ()
    U: np.ndarray = None
    order: np.ndarray = None
    R: np.ndarray = None
    strategy: str = ""
    stop_reason: str = ""
    max_errors: tuple = ()

    @classmethod
    def from_snapshots(cls, sys, params, U, **meta):
        params = tuple(ParamVector.coerce(y) for y in params)
        U = np.asarray(U, dtype=float).reshape(sys.n_dofs, -1)
        if U.shape[1] != len(params):
            raise ValueError("one snapshot per parameter required")
        order = contrast_order(params)
        Q, R = np.linalg.qr(U[:, order]) if len(params) else (np.zeros((sys.n_dofs, 0)), np.zeros((0, 0)))
        base = ReducedSpace.from_basis(sys, Q)
        return cls(base.Q, base.A_hat, base.F_hat, base.S_hat, base.SQ, params=params, U=U,
                   order=np.asarray(order, dtype=int), R=R, **meta)

    @classmethod
    def from_params(cls, sys, params, **meta):
        params = [ParamVector.coerce(y) for y in params]
        return cls.from_snapshots(sys, params, solve_many(sys, params), **meta)

    def truncated(self, sys, n):
        """Basis spanned by the first ``n`` selected snapshots."""
        return ReducedBasis.from_snapshots(sys, self.params[:n], self.U[:, :n],
                                           strategy=self.strategy)

    def sorted_params(self):
        return tuple(self.params[i] for i in self.order)


def contrast_order(params):
    """Indices sorting by decreasing contrast (infinite first), stable in the input order."""
    return sorted(range(len(params)), key=lambda i: (-ParamVector.coerce(params[i]).contrast(), i))


def _solve_reduced(K, b):
    try:
        return sla.solve(K, b, assume_a="pos")
    except (sla.LinAlgError, ValueError):
        return np.linalg.lstsq(K, b, rcond=None)[0]


def limit_kernel(space, S_set, tol=KERNEL_TOL):
    """Orthonormal (coefficient) basis of the numerical kernel of ``sum_{j in S} A_hat_j``."""
    M = space.A_hat[sorted(S_set)].sum(axis=0)
    lam, vec = np.linalg.eigh(M)
    top = max(lam[-1], 0.0) if lam.size else 0.0
    return vec[:, lam <= tol * top] if top > 0 else vec


def galerkin_coefficients(space, y, warn=True):
    """Coefficients ``c`` of the Galerkin projection ``Q c`` of ``u(y)``."""
    y = ParamVector.coerce(y)
    if not y.finite_set():
        return np.zeros(space.n)
    t, yn = normalize(y)
    S = yn.infinite_set()
    free = [j for j in range(space.d) if j not in S]
    K = np.tensordot([yn[j] for j in free], space.A_hat[free], axes=1)
    if not S:
        return _solve_reduced(K, space.F_hat) / t
    Z = limit_kernel(space, S)
    if Z.shape[1] == 0:
        if warn:
            warnings.warn("reduced space meets V_S only in {0}; Galerkin limit solution is 0",
                          LimitSpaceWarning, stacklevel=2)
        return np.zeros(space.n)
    ct = _solve_reduced(Z.T @ K @ Z, Z.T @ space.F_hat)
    return Z @ ct / t


def galerkin_project(space, y, warn=True):
    """Reduced Galerkin solution ``P^y_{V_n} u(y)`` as a full field.

    Infinite entries use the exact reduced limit problem on the part of ``V_n``
    that is constant on the stiff subdomains.
    """
    return space.Q @ galerkin_coefficients(space, y, warn=warn)


def h10_project(space, u):
    """H^1_0-orthogonal projection of one field (or of columns) onto ``span(Q)``."""
    u = np.asarray(u, dtype=float)
    if space.n == 0:
        return np.zeros_like(u)
    return space.Q @ _solve_reduced(space.S_hat, space.SQ.T @ u)


# ----------------------------------------------------------------------------
# error evaluation


def _h10_norms(sys, E):
    return np.sqrt(np.maximum(np.einsum("ij,ij->j", E, sys.S @ E), 0.0))


def relative_errors(space, sys, params, truth, which="galerkin", chunk=256):
    """Relative H^1_0 errors ``||u - P u|| / ||u||`` for each parameter.

    ``which`` selects the Galerkin projection (``"galerkin"``) or the
    H^1_0-orthogonal one (``"h10"``). ``truth`` holds the columns ``u(y)``.
    """
    if which not in ("galerkin", "h10"):
        raise ValueError(f"unknown projection {which!r}")
    truth = np.asarray(truth, dtype=float)
    out = np.empty(len(params))
    for start in range(0, len(params), chunk):
        stop = min(start + chunk, len(params))
        U = truth[:, start:stop]
        if space.n == 0:
            P = np.zeros_like(U)
        elif which == "h10":
            P = h10_project(space, U)
        else:
            C = np.column_stack([galerkin_coefficients(space, y, warn=False)
                                 for y in params[start:stop]])
            P = space.Q @ C
        out[start:stop] = _relative(_h10_norms(sys, U - P), _h10_norms(sys, U))
    return out


def _relative(num, den):
    # u = 0 happens when every free vertex is pinned; its projection is 0 too
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    out[(den == 0) & (num > 0)] = INF
    return out


# ----------------------------------------------------------------------------
# selection


def _limit_point(training):
    """Training point with the most infinite entries (lexicographic tie-break)."""
    best = max(len(y.infinite_set()) for y in training)
    if best == 0:
        raise ValueError("random-inf needs an infinite-valued point in the training set")
    return min((y for y in training if len(y.infinite_set()) == best), key=_key)


def _first_greedy_pick(training):
    top = max(y.contrast() for y in training)
    return min(range(len(training)), key=lambda i: (training[i].contrast() != top, _key(training[i])))


def select(strategy, sys, training, n_max, seed=0, truth=None, threads=1):
    """Pick up to ``n_max`` snapshots from ``training``.

    Strategies
    ----------
    ``random``
        Uniform draws without replacement among the finite training points.
    ``random-inf``
        The limit point (most infinite entries) first, then ``random``.
    ``greedy-h10`` / ``greedy-galerkin``
        Repeatedly add the training point maximizing the relative H^1_0 error of
        the orthogonal / Galerkin projection. The first pick is the highest-contrast
        point. Stops early once the maximal error falls below ``1e-14``.

    ``truth`` may hold precomputed solutions (columns aligned with ``training``).
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    params = list(training)
    if n_max < 1 or n_max > len(params):
        raise ValueError(f"n_max={n_max} must lie in 1..{len(params)}")
    rng = np.random.default_rng(seed)

    if strategy.startswith("random"):
        chosen = []
        if strategy == "random-inf":
            chosen.append(_limit_point(params))
        pool = [y for y in params if not y.infinite_set()]
        need = n_max - len(chosen)
        if need > len(pool):
            raise ValueError(f"only {len(pool)} finite training points for {need} random picks")
        picks = rng.choice(len(pool), size=need, replace=False)
        chosen += [pool[i] for i in picks]
        return ReducedBasis.from_params(sys, chosen, strategy=strategy, stop_reason="n_max")

    which = "h10" if strategy == "greedy-h10" else "galerkin"
    if truth is None:
        truth = solve_many(sys, params, threads=threads)
    picked = [_first_greedy_pick(params)]
    history = []
    stop_reason = "n_max"
    while True:
        rb = ReducedBasis.from_snapshots(sys, [params[i] for i in picked], truth[:, picked])
        err = relative_errors(rb, sys, params, truth, which)
        history.append(float(np.max(err)))
        log.debug("%s n=%d max error %.3e", strategy, len(picked), history[-1])
        if len(picked) >= n_max:
            break
        if history[-1] < GREEDY_FLOOR:
            stop_reason = "tolerance"
            break
        nxt = int(np.argmax(err))
        if nxt in picked:
            stop_reason = "stagnation"
            break
        picked.append(nxt)
    rb.strategy, rb.stop_reason, rb.max_errors = strategy, stop_reason, tuple(history)
    return rb


def error_study(rb, sys, test, which="galerkin", truth=None, order="selection", threads=1):
    """Max relative error over ``test`` using the first ``n`` snapshots, ``n = 1..len(rb)``.

    ``order="contrast"`` nests the snapshots by decreasing contrast instead of
    selection order.
    """
    params = list(test)
    if truth is None:
        truth = solve_many(sys, params, threads=threads)
    if order == "contrast":
        perm = contrast_order(rb.params)
        rb = ReducedBasis.from_snapshots(sys, [rb.params[i] for i in perm], rb.U[:, perm],
                                         strategy=rb.strategy)
    elif order != "selection":
        raise ValueError(f"unknown order {order!r}")
    out = []
    for n in range(1, len(rb.params) + 1):
        sub = rb.truncated(sys, n)
        out.append(float(np.max(relative_errors(sub, sys, params, truth, which))))
    return np.array(out)


def check_independent(rb, max_cond=1e14):
    """Raise when the snapshot-coordinate change of basis is numerically singular."""
    d = np.abs(np.diag(rb.R))
    if d.size and (d.min() == 0 or np.linalg.cond(rb.R) > max_cond):
        raise NumericalError(
            f"snapshot fields are numerically dependent (cond(R) = {np.linalg.cond(rb.R):.2e}); "
            "truncate the basis to fewer snapshots")


# ----------------------------------------------------------------------------
# archive


def _mat_header(sys, what):
    return f"{what} cells_per_side={sys.mesh.cells_per_side} ndof={sys.n_dofs} d={sys.d}"


def save_basis(rb, sys, directory):
    """Write the basis archive: ``params.csv``, ``Q.txt``, ``U.txt``, ``A_hat_<name>.txt``,
    ``F_hat.txt``, ``S_hat.txt`` and ``meta.json``."""
    os.makedirs(directory, exist_ok=True)
    path = lambda name: os.path.join(directory, name)  # noqa: E731
    with open(path("params.csv"), "w", newline="") as fh:
        fh.write("index,params\n")
        for i, y in enumerate(rb.params):
            fh.write(f'{i},"{format_param(y)}"\n')
    np.savetxt(path("Q.txt"), rb.Q, fmt="%.17g", header=_mat_header(sys, "Q"))
    np.savetxt(path("U.txt"), rb.U, fmt="%.17g", header=_mat_header(sys, "U"))
    for name, Aj in zip(sys.names, rb.A_hat):
        np.savetxt(path(f"A_hat_{name}.txt"), Aj, fmt="%.17g", header=_mat_header(sys, f"A_hat {name}"))
    np.savetxt(path("F_hat.txt"), rb.F_hat, fmt="%.17g", header=_mat_header(sys, "F_hat"))
    np.savetxt(path("S_hat.txt"), rb.S_hat, fmt="%.17g", header=_mat_header(sys, "S_hat"))
    meta = {
        "geometry": sys.partition.geometry_name,
        "cells_per_side": sys.mesh.cells_per_side,
        "d": sys.d,
        "n": len(rb.params),
        "strategy": rb.strategy,
        "stop_reason": rb.stop_reason,
        "max_errors": [repr(e) for e in rb.max_errors],
    }
    with open(path("meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_basis(sys, directory):
    """Reload an archive written by :func:`save_basis` against a matching system.

    The reduced operators are recomputed from the stored snapshots so that the
    archive cannot drift from ``sys``; a mismatching mesh is rejected.
    """
    meta_path = os.path.join(directory, "meta.json")
    if not os.path.isfile(meta_path):
        raise FileNotFoundError(
            f"no basis archive in {directory!r} (missing meta.json); run the 'basis' subcommand first")
    with open(meta_path) as fh:
        meta = json.load(fh)
    if (meta["geometry"] != sys.partition.geometry_name
            or int(meta["cells_per_side"]) != sys.mesh.cells_per_side):
        raise ValueError(
            f"archive built for {meta['geometry']} at cells_per_side={meta['cells_per_side']}, "
            f"system is {sys.partition.geometry_name} at {sys.mesh.cells_per_side}")
    with open(os.path.join(directory, "params.csv"), newline="") as fh:
        params = [parse_param(row["params"]) for row in csv.DictReader(fh)]
    U = np.loadtxt(os.path.join(directory, "U.txt"), ndmin=2).reshape(sys.n_dofs, len(params))
    return ReducedBasis.from_snapshots(
        sys, params, U, strategy=meta.get("strategy", ""), stop_reason=meta.get("stop_reason", ""),
        max_errors=tuple(float(e) for e in meta.get("max_errors", [])))

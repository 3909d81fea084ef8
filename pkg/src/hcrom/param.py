"""Diffusivity vectors with exact infinities, homogeneity scaling, dyadic covers."""

import itertools
import math
from dataclasses import dataclass

import numpy as np

INF = math.inf


@dataclass(frozen=True)
class ParamVector:
    """Per-subdomain diffusivities in ``(0, inf]``; ``inf`` marks a stiff inclusion."""

    values: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ValueError("parameter vector must be non-empty")
        for v in vals:
            if not (v > 0.0):  # also rejects nan
                raise ValueError(f"diffusivities must be positive, got {vals}")
        object.__setattr__(self, "values", vals)

    @classmethod
    def coerce(cls, y):
        if isinstance(y, cls):
            return y
        if isinstance(y, str):
            return parse_param(y)
        return cls(tuple(np.asarray(y, dtype=float).ravel()))

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def __getitem__(self, j):
        return self.values[j]

    def __str__(self):
        return format_param(self)

    @property
    def d(self):
        return len(self.values)

    def as_array(self):
        return np.array(self.values)

    def infinite_set(self):
        return frozenset(j for j, v in enumerate(self.values) if v == INF)

    def finite_set(self):
        return frozenset(j for j, v in enumerate(self.values) if v != INF)

    def inverse(self):
        """Inverse diffusivities ``1/y`` with ``1/inf = 0``."""
        return np.array([0.0 if v == INF else 1.0 / v for v in self.values])

    def contrast(self):
        """``max y / min y``; infinite as soon as one entry is infinite."""
        if self.infinite_set():
            return INF
        return max(self.values) / min(self.values)

    def scaled(self, t):
        if not t > 0:
            raise ValueError("scale factor must be positive")
        return ParamVector(tuple(v * t for v in self.values))


def format_param(y):
    return ",".join("inf" if v == INF else repr(float(v)) for v in ParamVector.coerce(y))


def parse_param(text):
    """Parse ``"1,2.5,inf"``; ``inf``/``∞`` denote an infinite diffusivity."""
    parts = [p.strip() for p in str(text).split(",") if p.strip()]
    vals = []
    for p in parts:
        if p.lower() in ("inf", "+inf", "infinity", "∞"):
            vals.append(INF)
        else:
            vals.append(float(p))
    return ParamVector(tuple(vals))


def normalize(y):
    """Split ``y = t * y_n`` with ``t`` the smallest finite entry, so ``u(y) = u(y_n) / t``."""
    y = ParamVector.coerce(y)
    finite = [v for v in y if v != INF]
    if not finite:
        raise ValueError("all-infinite parameter has no normalization (u = 0 there)")
    t = min(finite)
    return t, ParamVector(tuple(INF if v == INF else v / t for v in y))


def level_for_degree(k, C0=1.0):
    """Smallest ``L >= 1`` with ``C0 * 2**-L <= 3**-k / sqrt(3)``."""
    if k < 0:
        raise ValueError("degree must be non-negative")
    if not C0 > 0:
        raise ValueError("C0 must be positive")
    target = math.sqrt(3.0) * C0 * 3.0 ** k
    L = 1
    while 2.0 ** L < target:
        L += 1
    return L


@dataclass(frozen=True)
class Box:
    """Axis-aligned parameter box; ``lower == upper`` freezes an axis, ``upper = inf`` is a stiff axis."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi):
            raise ValueError("lower/upper length mismatch")
        for a, b in zip(lo, hi):
            if not (0 < a <= b) or a == INF:
                raise ValueError(f"invalid interval [{a}, {b}]")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def d(self):
        return len(self.lower)

    def infinite_axes(self):
        return tuple(j for j in range(self.d) if self.upper[j] == INF)

    def varying_axes(self):
        """Finite axes of positive width."""
        return tuple(j for j in range(self.d) if self.upper[j] != INF and self.upper[j] > self.lower[j])

    def center(self):
        """Midpoint on finite axes; infinite axes report ``inf``."""
        return tuple(INF if b == INF else 0.5 * (a + b) for a, b in zip(self.lower, self.upper))

    def contains(self, y, rtol=0.0):
        y = ParamVector.coerce(y)
        for v, a, b in zip(y, self.lower, self.upper):
            if v == INF:
                if b != INF:
                    return False
            elif v < a * (1 - rtol) or v > b * (1 + rtol):
                return False
        return True

    def corners(self):
        """Vertices over the varying axes (stiff axes set to ``inf``, frozen ones to their value)."""
        axes = self.varying_axes()
        base = list(self.center())
        for choice in itertools.product((0, 1), repeat=len(axes)):
            y = list(base)
            for j, c in zip(axes, choice):
                y[j] = self.upper[j] if c else self.lower[j]
            yield ParamVector(tuple(y))

    def sample(self, count, rng):
        """Uniform samples on varying axes; stiff axes are drawn as ``inf``."""
        base = np.array(self.center())
        out = []
        axes = self.varying_axes()
        for _ in range(count):
            y = base.copy()
            for j in axes:
                y[j] = rng.uniform(self.lower[j], self.upper[j])
            out.append(ParamVector(tuple(y)))
        return out


@dataclass(frozen=True)
class DyadicRectangle:
    """``R_ell``: per axis ``[2^l, 2^(l+1)]``, or ``[2^L, inf]`` when ``l = L``."""

    ell: tuple
    L: int

    def __post_init__(self):
        ell = tuple(int(v) for v in self.ell)
        if any(not 0 <= v <= self.L for v in ell):
            raise ValueError(f"ell {ell} outside {{0..{self.L}}}")
        object.__setattr__(self, "ell", ell)

    def stiff_set(self):
        """``S(ell) = {j : ell_j = L}``."""
        return frozenset(j for j, v in enumerate(self.ell) if v == self.L)

    def bounds(self):
        return [(2.0 ** v, INF) if v == self.L else (2.0 ** v, 2.0 ** (v + 1)) for v in self.ell]

    def contains(self, y):
        y = ParamVector.coerce(y)
        for v, (a, b) in zip(y, self.bounds()):
            if v < a or v > b:
                return False
        return True

    def box(self, d=None, axes=None, frozen=1.0):
        """Embed into ``d`` axes: ``axes`` carry this rectangle, the rest are frozen."""
        if axes is None:
            axes = tuple(range(len(self.ell)))
        d = len(axes) if d is None else d
        lo, hi = [frozen] * d, [frozen] * d
        for j, (a, b) in zip(axes, self.bounds()):
            lo[j], hi[j] = a, b
        return Box(tuple(lo), tuple(hi))

    def label(self):
        return "(" + ",".join(str(v) for v in self.ell) + ")"


def _floor_log2(v):
    m, e = math.frexp(v)  # v = m 2^e, m in [0.5, 1)
    return e - 1


def locate_rectangle(y, L):
    """Dyadic rectangle containing ``y`` (entries >= 1): ``ell_j = min(floor(log2 y_j), L)``."""
    y = ParamVector.coerce(y)
    if any(v < 1.0 for v in y):
        raise ValueError(f"locate_rectangle needs entries >= 1 (normalize first), got {y}")
    ell = tuple(L if v == INF else min(_floor_log2(v), L) for v in y)
    return DyadicRectangle(ell, L)


@dataclass(frozen=True)
class RectangleCover:
    """Dyadic rectangles covering the normalized parameter slice at level ``L``."""

    L: int
    k: int
    C0: float
    ells: tuple
    full: bool = False

    def __len__(self):
        return len(self.ells)

    def rectangles(self):
        return [DyadicRectangle(e, self.L) for e in self.ells]

    def __contains__(self, ell):
        return tuple(ell) in set(self.ells)


def enumerate_cover(k, C0=1.0, d=2, full=False):
    """Rectangles ``E_k = {0..L}^d minus {1..L}^d`` with ``L = level_for_degree(k, C0)``.

    With ``full=True`` the whole grid ``{0..L}^d`` is returned; this is the cover
    needed when the slice ``min y = 1`` is enforced by frozen axes outside ``d``.
    """
    L = level_for_degree(k, C0)
    ells = tuple(e for e in itertools.product(range(L + 1), repeat=d) if full or min(e) == 0)
    return RectangleCover(L, k, float(C0), ells, full)

import math

import numpy as np
import pytest

from hcrom.mesh import build_system, framing_constants
from hcrom.param import INF, Box, DyadicRectangle
from hcrom.solver import build_merged, h10_norm, solve_full
from hcrom.surrogate import (build_global_space, build_local_space, build_rectangle_surrogate,
                             cover_size, evaluate_surrogate, multi_indices, surrogate_study)
from hcrom.reduced_basis import make_training_set

import oracles


def test_multi_indices_graded_lex():
    assert multi_indices(2, 2) == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    for m in (1, 2, 3):
        for k in range(4):
            assert len(multi_indices(m, k)) == math.comb(k + m, m)


@pytest.mark.parametrize("n", [4, 8])
def test_recursion_matches_word_oracle(n):
    sys = build_system("lipschitz4", n)
    A = [a.toarray() for a in sys.A]
    box = Box((2.0, 1.0, 1.0, 4.0), (4.0, 2.0, 1.0, 8.0))
    surr = build_rectangle_surrogate(sys, box, 3)
    center = box.center()
    ref = oracles.word_surrogate_coefficients(A, sys.F, center, surr.axes, 3)
    for nu in surr.indices:
        v = surr.field(nu)
        assert np.max(np.abs(v - ref[nu])) <= 1e-10 * np.max(np.abs(ref[(0, 0, 0)]))


def test_infinite_rectangle_matches_merged_oracle(lip8):
    box = Box((1.0, 2.0, 1.0, 1.0), (2.0, 4.0, 1.0, INF))
    surr = build_rectangle_surrogate(lip8, box, 2)
    assert surr.stiff_set == {3}
    R = build_merged(lip8, {3}).R.toarray()
    free = [0, 1, 2]
    A = [R.T @ lip8.A[j].toarray() @ R for j in free]
    center = [box.center()[j] for j in free]
    ref = oracles.word_surrogate_coefficients(A, R.T @ lip8.F, center, [0, 1], 2)
    for nu in surr.indices:
        assert np.max(np.abs(surr.field(nu) - R @ ref[nu])) <= 1e-10 * np.max(np.abs(R @ ref[(0, 0)]))
    # the limit map at the center is the degree-0 term
    c = list(box.center())
    assert np.allclose(surr.field((0, 0)), solve_full(lip8, c), atol=1e-12)


def test_recursion_residual(lip16):
    box = Box((1.0, 1.0, 1.0, 1.0), (2.0, 2.0, 1.0, 1.0))
    surr = build_rectangle_surrogate(lip16, box, 3)
    Abar = lip16.operator(box.center())
    for nu in surr.indices[1:]:
        rhs = sum(lip16.A[j] @ surr.field(nu[:p] + (nu[p] - 1,) + nu[p + 1:])
                  for p, j in enumerate(surr.axes) if nu[p] >= 1)
        r = Abar @ surr.field(nu) + rhs
        assert np.linalg.norm(r) <= 1e-10 * np.linalg.norm(lip16.F)


def test_degree_zero_is_center_solution(lip16):
    box = Box((4.0, 1.0, 1.0, 1.0), (8.0, 1.0, 1.0, 1.0))
    surr = build_rectangle_surrogate(lip16, box, 0)
    u = evaluate_surrogate(surr, (5.0, 1.0, 1.0, 1.0))
    assert np.allclose(u, solve_full(lip16, box.center()), atol=1e-14)


def test_surrogate_error_bound(lip16):
    """Contraction 1/3 per degree: ||u - u_k|| <= C_f 3^-k / 2 on any [a, 2a]-box."""
    _, C_f = framing_constants(lip16)
    rng = np.random.default_rng(0)
    for box in (Box((1.0, 1, 1, 1), (2.0, 1, 1, 1)),
                Box((1.0, 2.0, 1, 1), (2.0, 4.0, 1, 1)),
                Box((1.0, 2.0, 1, 4.0), (2.0, INF, 1, 8.0))):
        prev = INF
        for k in range(5):
            surr = build_rectangle_surrogate(lip16, box, k)
            ys = box.sample(20, rng) + list(box.corners())
            err = max(h10_norm(lip16, solve_full(lip16, y) - evaluate_surrogate(surr, y)) for y in ys)
            assert err <= C_f * 3.0 ** -k / 2
            assert err <= prev * 1.01 or err < 1e-13
            prev = err


def test_surrogate_rejects(lip16):
    with pytest.raises(ValueError):
        build_rectangle_surrogate(lip16, Box((1.0, 1, 1, 1), (3.0, 1, 1, 1)), 2)
    with pytest.raises(ValueError):
        build_rectangle_surrogate(lip16, Box((0.5, 1, 1, 1), (1.0, 1, 1, 1)), 2)
    with pytest.raises(ValueError):
        build_rectangle_surrogate(lip16, Box((1.0, 1, 1), (2.0, 1, 1)), 1)
    with pytest.raises(ValueError):
        build_rectangle_surrogate(lip16, Box((1.0, 1, 1, 1), (2.0, 1, 1, 1)), -1)
    surr = build_rectangle_surrogate(lip16, Box((1.0, 1, 1, 1), (2.0, 1, 1, 1)), 1)
    with pytest.raises(ValueError):
        evaluate_surrogate(surr, (3.0, 1, 1, 1))
    with pytest.raises(ValueError):
        evaluate_surrogate(surr, (INF, 1, 1, 1))


def test_local_space_dimension_and_rank(lip16):
    rect = DyadicRectangle((0, 1), 3)
    for k in range(4):
        surr = build_rectangle_surrogate(lip16, rect, k, axes=(0, 1))
        loc = build_local_space(surr)
        assert 1 <= loc.dim <= math.comb(k + 2, 2)
        D = lip16.grad @ surr.coeff_fields
        D = D / np.linalg.norm(D, axis=0)
        s = np.linalg.svd(D, compute_uv=False)
        assert loc.dim == int(np.sum(s > 1e-10 * s[0]))
        assert np.allclose(loc.basis.T @ lip16.S @ loc.basis, np.eye(loc.dim), atol=1e-10)


def test_infinite_local_space_constant_on_stiff(lip16):
    rect = DyadicRectangle((3, 1), 3)  # axis 0 reaches inf
    loc = build_local_space(build_rectangle_surrogate(lip16, rect, 2, axes=(0, 1)))
    assert loc.S_set == {0}
    for c in range(loc.dim):
        assert lip16.subdomain_energies(loc.basis[:, c])[0] <= 1e-18


def test_cover_guard(lip16):
    assert cover_size(1, 1.0, 4, False) == 4 ** 4 - 3 ** 4
    with pytest.raises(ValueError, match="cover too large"):
        build_global_space(build_system("grid16", 8), 2)
    with pytest.raises(ValueError, match="cover too large"):
        build_global_space(lip16, 3, max_fields=100)


@pytest.fixture(scope="module")
def global2(lip16):
    return build_global_space(lip16, 1, active=[0, 1])


def test_global_space_orthonormal(global2, lip16):
    Q = global2.basis
    assert np.allclose(Q.T @ lip16.S @ Q, np.eye(Q.shape[1]), atol=1e-9)
    assert global2.L == 3 and len(global2.cover) == 16  # frozen axes: full grid


def test_global_beats_library(global2, lip16):
    rng = np.random.default_rng(4)
    for _ in range(20):
        y = (10 ** rng.uniform(0, 6), 10 ** rng.uniform(0, 6), 1.0, 1.0)
        u = solve_full(lip16, y)
        eg = h10_norm(lip16, u - global2.project(u))
        el = h10_norm(lip16, u - global2.library_project(y, u))
        assert eg <= el * (1 + 1e-9) + 1e-14 * h10_norm(lip16, u)


def test_locate_uses_normalized_active(global2):
    assert global2.locate((3.0, 1.0, 1.0, 1.0)) == (1, 0)
    assert global2.locate((INF, 2.0, 2.0, 2.0)) == (3, 0)
    assert global2.locate((1e9, 1.0, 1.0, 1.0)) == (3, 0)


def test_surrogate_study_rows(lip16):
    test = make_training_set({"kind": "loguniform", "n": 60, "decades": 8, "d": 4, "active": [0, 1],
                              "seed": 2})
    rows = surrogate_study(lip16, [0, 1, 2], test, active=[0, 1])
    glob = [r for r in rows if r["rectangle"] == "global"]
    assert [r["k"] for r in glob] == [0, 1, 2]
    assert np.isnan(glob[0]["ratio_h10"])
    for r in rows:
        assert r["max_rel_err_h10"] <= r["max_rel_err_galerkin"] * (1 + 1e-6) + 1e-12
    for a, b in zip(glob, glob[1:]):
        assert b["n"] >= a["n"]
        assert b["max_rel_err_h10"] <= 0.5 * a["max_rel_err_h10"] or b["max_rel_err_h10"] < 1e-12

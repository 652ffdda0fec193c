import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.errors import MemoryResetRequired, NumericalBreakdown
from src.quasi_newton import (QNMemory, bfgs_compact, broyden_compact, damp_bfgs_pair, gamma_scaling,
                              lbfgs_compact_apply, lbfgs_hessian_apply, lbfgs_two_loop, lbroyden_compact_apply)

from tests.oracles import dense_bfgs, dense_inverse_bfgs, dense_inverse_broyden, spd_matrix


def curvature_pairs(rng, n=6, count=3):
    """Steps with y = A s for a fixed SPD A, so every s^T y > 0"""
    A = spd_matrix(rng, n, 1.0, 10.0)
    pairs = []
    for _ in range(count):
        s = rng.standard_normal(n)
        pairs.append((s, A @ s))
    return pairs


def filled_memory(pairs, m=None):
    memory = QNMemory(m or len(pairs))
    for s, y in pairs:
        memory.append(s, y)
    return memory


def test_memory_caches_match_recomputation(rng):
    pairs = curvature_pairs(rng, count=5)
    memory = QNMemory(3)
    for i, (s, y) in enumerate(pairs):
        memory.append(s, y, ybar=2.0 * y, g=rng.standard_normal(s.size))
        assert len(memory) == min(i + 1, 3)
        recomputed = memory.recomputed_grams()
        for pair, gram in recomputed.items():
            assert_allclose(memory.gram(*pair), gram, atol=1e-12)
    S, Y = memory.S, memory.Y
    assert_allclose(memory.S, np.column_stack([s for s, _ in pairs[-3:]]))
    sy = S.T @ Y
    assert_allclose(memory.D, np.diag(np.diag(sy)), atol=1e-12)
    assert_allclose(memory.L, np.tril(sy, -1), atol=1e-12)
    assert_allclose(memory.R, np.triu(sy), atol=1e-12)
    assert_allclose(memory.M, -np.tril(S.T @ S, -1), atol=1e-12)
    assert_allclose(memory.Mbar, np.tril(memory.G.T @ S, -1), atol=1e-12)
    assert_allclose(memory.Rbar, np.triu(S.T @ memory.Ybar), atol=1e-12)


def test_memory_transform_and_clear(rng):
    memory = filled_memory(curvature_pairs(rng))
    memory.transform(lambda v: 2.0 * v)
    assert_allclose(memory.gram("s", "y"), 4.0 * (memory.S / 2.0).T @ (memory.Y / 2.0), atol=1e-10)
    memory.clear()
    assert len(memory) == 0
    with pytest.raises(ValueError):
        memory.matrix("s")
    with pytest.raises(ValueError):
        QNMemory(0)


def test_gamma_scaling():
    assert gamma_scaling(np.array([1.0, 0.0]), np.array([2.0, 0.0])) == pytest.approx(0.5)
    v = np.array([0.3, -1.2])
    assert gamma_scaling(v, v) == pytest.approx(1.0)
    with pytest.raises(NumericalBreakdown):
        gamma_scaling(v, np.zeros(2))


def test_gamma_scaling_rayleigh_bounds(rng):
    A = np.diag([1.0, 4.0])
    for _ in range(20):
        s = rng.standard_normal(2)
        gamma = gamma_scaling(s, A @ s)
        assert 0.25 - 1e-12 <= gamma <= 1.0 + 1e-12


def test_two_loop_empty_memory(rng):
    g = rng.standard_normal(4)
    assert_allclose(lbfgs_two_loop(lambda v: 3.0 * v, g, QNMemory(2)), 3.0 * g)
    assert_allclose(lbfgs_compact_apply(3.0, QNMemory(2), g), 3.0 * g)
    assert_allclose(lbroyden_compact_apply(3.0, QNMemory(2), g), 3.0 * g)


def test_two_loop_single_pair_matches_dense_update(rng):
    pairs = curvature_pairs(rng, count=1)
    g = rng.standard_normal(6)
    gamma = 0.7
    H = dense_inverse_bfgs(gamma, pairs, 6)
    assert_allclose(lbfgs_two_loop(lambda v: gamma * v, g, filled_memory(pairs)), H @ g, atol=1e-12)


def test_two_loop_compact_and_dense_agree(rng):
    pairs = curvature_pairs(rng, count=3)
    memory = filled_memory(pairs)
    g = rng.standard_normal(6)
    s, y = pairs[-1]
    gamma = gamma_scaling(s, y)
    two_loop = lbfgs_two_loop(lambda v: gamma * v, g, memory)
    compact = lbfgs_compact_apply(gamma, memory, g)
    dense = dense_inverse_bfgs(gamma, pairs, 6) @ g
    assert_allclose(two_loop, compact, rtol=1e-10, atol=1e-12)
    assert_allclose(compact, dense, rtol=1e-10, atol=1e-12)


def test_compact_uses_only_the_window(rng):
    pairs = curvature_pairs(rng, count=4)
    memory = filled_memory(pairs, m=2)
    g = rng.standard_normal(6)
    dense = dense_inverse_bfgs(0.5, pairs[-2:], 6) @ g
    assert_allclose(lbfgs_compact_apply(0.5, memory, g), dense, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("count", [1, 3])
def test_tiny_pairs_keep_compact_and_two_loop_in_agreement(rng, count):
    pairs = [(1e-9 * s, 1e-9 * y) for s, y in curvature_pairs(rng, count=count)]
    assert max(s @ y for s, y in pairs) < 1e-15
    memory = filled_memory(pairs)
    g = rng.standard_normal(6)
    s, y = pairs[-1]
    gamma = gamma_scaling(s, y)
    compact = lbfgs_compact_apply(gamma, memory, g)
    assert_allclose(compact, lbfgs_two_loop(lambda v: gamma * v, g, memory), rtol=1e-9, atol=1e-12)
    assert_allclose(compact, dense_inverse_bfgs(gamma, pairs, 6) @ g, rtol=1e-8, atol=1e-12)


def test_tiny_pairs_keep_broyden_compact_exact(rng):
    n = 6
    pairs = [(1e-9 * rng.standard_normal(n), 1e-9 * rng.standard_normal(n)) for _ in range(2)]
    memory = filled_memory(pairs)
    g = rng.standard_normal(n)
    dense = dense_inverse_broyden(0.6, pairs, n) @ g
    assert_allclose(lbroyden_compact_apply(0.6, memory, g), dense, rtol=1e-8, atol=1e-12)


def test_hessian_apply_matches_dense_and_inverts_compact(rng):
    pairs = curvature_pairs(rng, count=3)
    memory = filled_memory(pairs)
    v = rng.standard_normal(6)
    gamma = 0.4
    B = dense_bfgs(1.0 / gamma, pairs, 6)
    assert_allclose(lbfgs_hessian_apply(1.0 / gamma, memory, v), B @ v, rtol=1e-9, atol=1e-10)
    hv = lbfgs_compact_apply(gamma, memory, v)
    assert_allclose(lbfgs_hessian_apply(1.0 / gamma, memory, hv), v, rtol=1e-9, atol=1e-10)


def test_broyden_compact_matches_dense_recursion(rng):
    n = 6
    pairs = [(rng.standard_normal(n), rng.standard_normal(n)) for _ in range(2)]
    memory = filled_memory(pairs)
    g = rng.standard_normal(n)
    for eta in (1.0, 0.6):
        dense = dense_inverse_broyden(eta, pairs, n) @ g
        assert_allclose(lbroyden_compact_apply(eta, memory, g), dense, rtol=1e-10, atol=1e-12)


def test_broyden_secant_condition(rng):
    n = 6
    pairs = [(rng.standard_normal(n), rng.standard_normal(n)) for _ in range(3)]
    memory = filled_memory(pairs)
    s, y = pairs[-1]
    assert_allclose(lbroyden_compact_apply(0.8, memory, y), s, rtol=1e-10, atol=1e-12)


def test_broyden_singular_inner_requests_reset():
    s = np.array([1.0, 0.0])
    with pytest.raises(MemoryResetRequired):
        broyden_compact(s, 1.0, s[:, None], s[:, None], np.zeros((1, 1)), s)
    with pytest.raises(MemoryResetRequired):
        broyden_compact(s, 1.0, s[:, None], s[:, None], np.full((1, 1), np.nan), s)


def test_bfgs_singular_triangle_requests_reset():
    S = np.array([[1.0], [0.0]])
    Y = np.array([[0.0], [1.0]])
    with pytest.raises(MemoryResetRequired):
        bfgs_compact(S[:, 0], 1.0, S, Y, np.zeros((1, 1)), np.zeros((1, 1)), Y.T @ Y, S[:, 0])


def test_bfgs_singular_triangle_is_judged_relative_to_its_scale():
    S = np.eye(2)
    lead = np.array([1.0, 1.0])
    nearly_singular = np.diag([1.0, 1e-17])
    with pytest.raises(MemoryResetRequired):
        bfgs_compact(lead, 1.0, S, nearly_singular, nearly_singular, nearly_singular,
                     nearly_singular @ nearly_singular, lead)
    tiny = np.diag([1e-18, 2e-18])
    out = bfgs_compact(lead, 1.0, S, tiny, tiny, tiny, tiny @ tiny, lead)
    assert np.all(np.isfinite(out))


def test_damping_keeps_sufficient_curvature():
    s = np.array([1.0, 2.0])
    y, theta = damp_bfgs_pair(s, s.copy(), lambda v: v)
    assert theta == 1.0
    assert_allclose(y, s)

    s = np.array([1.0, 0.0])
    y0 = np.array([0.0, 1.0])
    y, theta = damp_bfgs_pair(s, y0, lambda v: v)
    assert theta == pytest.approx(0.9)
    assert_allclose(y, 0.9 * y0 + 0.1 * s)


def test_damping_guarantee_on_random_inputs(rng):
    for _ in range(50):
        n = 5
        B = spd_matrix(rng, n, 0.1, 10.0)
        s = rng.standard_normal(n)
        y = rng.standard_normal(n)
        damped, theta = damp_bfgs_pair(s, y, lambda v: B @ v)
        sbs = s @ B @ s
        assert 0.0 < theta <= 1.0
        assert s @ damped >= 0.1 * sbs - 1e-12

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.decompositions import (KTensor, TuckerTensor, check_orthonormal, cp_als_sweep, cp_full, cp_gradient,
                                cp_objective, factors_to_vector, fix_signs, gram_pinv, hooi_sweep, hosvd_truncate,
                                sweep_modes, tucker_gradient, tucker_objective, vector_to_factors)
from src.errors import TensorShapeError
from src.manifold import grassmann_exp, project_horizontal
from src.tensor_core import frob_norm, matricize, multi_mode_product, random_orthonormal


def random_ktensor(rng, shape, rank):
    return KTensor([rng.standard_normal((extent, rank)) for extent in shape])


def test_sweep_orders():
    assert sweep_modes(3, "f") == [0, 1, 2]
    assert sweep_modes(3, "fb") == [0, 1, 2, 1, 0]
    assert sweep_modes(1, "fb") == [0]
    with pytest.raises(ValueError):
        sweep_modes(3, "b")


def test_factor_vector_layout(rng):
    factors = [rng.standard_normal((3, 2)), rng.standard_normal((4, 2))]
    v = factors_to_vector(factors)
    assert_allclose(v[:6], factors[0].ravel(order="F"))
    back = vector_to_factors(v, [(3, 2), (4, 2)])
    for a, b in zip(factors, back):
        assert_allclose(a, b)
    with pytest.raises(TensorShapeError):
        vector_to_factors(v[:-1], [(3, 2), (4, 2)])


def test_ktensor_validation(rng):
    with pytest.raises(TensorShapeError):
        KTensor([rng.standard_normal((3, 2)), rng.standard_normal((3, 3))])
    with pytest.raises(TensorShapeError):
        KTensor([])
    kt = random_ktensor(rng, (3, 4, 5), 2)
    assert kt.shape == (3, 4, 5)
    assert kt.numel == 24
    assert_allclose(KTensor.from_vector(kt.to_vector(), kt.shape, 2).factors[2], kt.factors[2])
    with pytest.raises(TensorShapeError):
        cp_objective(np.zeros((3, 4, 4)), kt)


def test_cp_full_rank_one_is_outer_product():
    a, b, c = np.array([1.0, 2.0]), np.array([3.0, -1.0, 0.5]), np.array([2.0, 4.0])
    X = cp_full(KTensor([a[:, None], b[:, None], c[:, None]]))
    assert_allclose(X, np.einsum("i,j,k->ijk", a, b, c))


def test_cp_gradient_matches_finite_differences(rng):
    kt = random_ktensor(rng, (4, 3, 5), 2)
    X = rng.standard_normal((4, 3, 5))
    x = kt.to_vector()

    def f(v):
        return cp_objective(X, KTensor.from_vector(v, kt.shape, kt.rank))

    g = factors_to_vector(cp_gradient(X, kt))
    for _ in range(5):
        d = rng.standard_normal(x.size)
        eps = 1e-6
        fd = (f(x + eps * d) - f(x - eps * d)) / (2 * eps)
        assert g @ d == pytest.approx(fd, rel=1e-6, abs=1e-8)


def test_gram_pinv_drops_null_space():
    assert_allclose(gram_pinv(np.ones((2, 2))), np.ones((2, 2)) / 4.0, atol=1e-14)
    gamma = np.diag([2.0, 4.0])
    assert_allclose(gram_pinv(gamma), np.diag([0.5, 0.25]))


def test_als_keeps_an_exact_fit(rng):
    truth = random_ktensor(rng, (5, 4, 6), 2)
    X = cp_full(truth)
    updated = cp_als_sweep(X, truth)
    assert cp_objective(X, updated) < 1e-20 * frob_norm(X) ** 2 + 1e-24
    for a, b in zip(truth.factors, updated.factors):
        assert_allclose(a, b, atol=1e-8)


@pytest.mark.parametrize("sweep", ["f", "fb"])
def test_als_is_monotone(rng, sweep):
    X = rng.standard_normal((5, 4, 6))
    kt = random_ktensor(rng, X.shape, 3)
    previous = cp_objective(X, kt)
    for _ in range(100):
        kt = cp_als_sweep(X, kt, sweep)
        current = cp_objective(X, kt)
        assert current <= previous * (1.0 + 1e-12) + 1e-14
        previous = current


def test_als_step_is_a_descent_direction(rng):
    X = rng.standard_normal((4, 4, 4))
    kt = random_ktensor(rng, X.shape, 2)
    step = cp_als_sweep(X, kt).to_vector() - kt.to_vector()
    g = factors_to_vector(cp_gradient(X, kt))
    assert g @ step < 0.0


def orthonormal_factors(rng, shape, ranks):
    return [random_orthonormal(rng, extent, rank) for extent, rank in zip(shape, ranks)]


def test_tucker_objective_requires_orthonormal_factors(rng):
    X = rng.standard_normal((4, 5, 3))
    factors = orthonormal_factors(rng, X.shape, (2, 2, 2))
    f = tucker_objective(X, factors)
    assert f == pytest.approx(-0.5 * frob_norm(multi_mode_product(X, factors, transpose=True)) ** 2)
    factors[1] = 2.0 * factors[1]
    with pytest.raises(TensorShapeError):
        tucker_objective(X, factors)
    with pytest.raises(TensorShapeError):
        tucker_objective(X, factors[:2])


def test_euclidean_tucker_gradient_matches_finite_differences(rng):
    X = rng.standard_normal((4, 5, 3))
    factors = orthonormal_factors(rng, X.shape, (2, 3, 2))

    def f(fs):
        return -0.5 * frob_norm(multi_mode_product(X, fs, transpose=True)) ** 2

    grads = tucker_gradient(X, factors, riemannian=False)
    eps = 1e-6
    for n, a in enumerate(factors):
        d = rng.standard_normal(a.shape)
        plus = list(factors)
        minus = list(factors)
        plus[n] = a + eps * d
        minus[n] = a - eps * d
        fd = (f(plus) - f(minus)) / (2 * eps)
        assert np.sum(grads[n] * d) == pytest.approx(fd, rel=1e-6, abs=1e-8)


def test_riemannian_tucker_gradient_along_geodesics(rng):
    X = rng.standard_normal((4, 5, 3))
    factors = orthonormal_factors(rng, X.shape, (2, 3, 2))
    grads = tucker_gradient(X, factors)
    t = 1e-5
    for n, a in enumerate(factors):
        assert np.linalg.norm(a.T @ grads[n]) < 1e-12
        xi = project_horizontal(a, rng.standard_normal(a.shape))
        plus = list(factors)
        minus = list(factors)
        plus[n] = grassmann_exp(a, xi, t)
        minus[n] = grassmann_exp(a, xi, -t)
        fd = (tucker_objective(X, plus) - tucker_objective(X, minus)) / (2 * t)
        assert np.sum(grads[n] * xi) == pytest.approx(fd, rel=1e-5, abs=1e-8)


@pytest.mark.parametrize("sweep", ["f", "fb"])
def test_hooi_is_monotone(rng, sweep):
    X = rng.standard_normal((6, 5, 4))
    factors = orthonormal_factors(rng, X.shape, (2, 2, 2))
    previous = tucker_objective(X, factors)
    for _ in range(100):
        factors = hooi_sweep(X, factors, sweep)
        current = tucker_objective(X, factors)
        assert current <= previous + 1e-12 * abs(previous)
        previous = current
    for a in factors:
        check_orthonormal(a)


def test_hosvd_full_rank_is_exact_and_all_orthogonal(rng):
    X = rng.standard_normal((4, 3, 5))
    tucker = hosvd_truncate(X, X.shape)
    assert_allclose(tucker.full(), X, atol=1e-12)
    for n in range(3):
        unfolding = matricize(tucker.core, n)
        gram = unfolding @ unfolding.T
        assert_allclose(gram, np.diag(np.diag(gram)), atol=1e-10)
        assert np.all(np.diff(np.diag(gram)) <= 1e-10)


def test_hosvd_rank_validation(rng):
    X = rng.standard_normal((4, 3, 5))
    with pytest.raises(TensorShapeError):
        hosvd_truncate(X, (2, 4, 2))
    with pytest.raises(TensorShapeError):
        hosvd_truncate(X, (2, 2))
    with pytest.raises(TensorShapeError):
        hosvd_truncate(X, (0, 2, 2))


def test_tucker_tensor_validation(rng):
    core = rng.standard_normal((2, 2))
    with pytest.raises(TensorShapeError):
        TuckerTensor(core, [np.ones((3, 2)), random_orthonormal(rng, 3, 2)])
    with pytest.raises(TensorShapeError):
        TuckerTensor(core, [random_orthonormal(rng, 3, 2)])


def test_fix_signs_makes_dominant_entries_positive():
    u = np.array([[0.1, -0.9], [-0.8, 0.2]])
    fixed = fix_signs(u)
    assert_allclose(fixed, [[-0.1, 0.9], [0.8, -0.2]])

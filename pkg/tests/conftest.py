import numpy as np
import pytest
from src.decompositions import KTensor
from src.linear_solvers import QuadraticProblem
from src.models.problem_specs import CPTestSpec, PoissonSpec
from src.problems import cp_instance, generate_collinear_cp, poisson2d_assemble
from tests.oracles import spd_matrix


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def spd_problem(rng):
    n = 50
    return QuadraticProblem(spd_matrix(rng, n), rng.standard_normal(n))


@pytest.fixture
def small_poisson():
    return poisson2d_assemble(PoissonSpec(h=0.1))


@pytest.fixture
def small_cp_spec():
    return CPTestSpec(extent=6, rank=2, order=3, collinearity=0.5, noise_l1=1.0, noise_l2=1.0, seed=7)


@pytest.fixture
def small_cp_problem(small_cp_spec, rng):
    _, X = generate_collinear_cp(small_cp_spec)
    start = KTensor([rng.standard_normal((small_cp_spec.extent, small_cp_spec.rank)) for _ in range(3)])
    return cp_instance(X, small_cp_spec.rank, start, "f", "small cp")

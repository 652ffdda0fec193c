"""Benchmark problem generators and per-trial problem instances.

Random streams are counter-based (Philox) and keyed by (seed, trial, purpose),
so a trial's data never depends on which other trials run.
"""
import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse

from .decompositions import (KTensor, cp_als_sweep, cp_full, cp_gradient, cp_objective, factors_to_vector,
                             hooi_sweep, hosvd_truncate, tucker_gradient, tucker_objective)
from .errors import ConfigurationError
from .linear_solvers import QuadraticProblem, SORPreconditioner, SSORPreconditioner
from .manifold import GrassmannPreconditioner, ProductGrassmann
from .models.experiment import ExperimentConfig
from .models.problem_specs import CPTestSpec, PoissonSpec, TuckerTestSpec
from .nonlinear_precond import IdentityPreconditioner, PreconditionerHandle, linear_preconditioner
from .objectives import EuclideanSpace, Objective
from .tensor_core import as_tensor, frob_norm, multi_mode_product, random_orthonormal
from .tensor_io import load_tensor

logger = logging.getLogger(__name__)

PURPOSES = {"factors": 0, "noise": 1, "init": 2, "core": 3}


def make_rng(seed: int, trial: int, purpose: str) -> np.random.Generator:
    """Independent Philox stream for one (trial, purpose) pair"""
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=(trial, PURPOSES[purpose]))
    return np.random.Generator(np.random.Philox(sequence))


def poisson2d_assemble(spec: PoissonSpec) -> QuadraticProblem:
    """5-point -Laplacian on the unit square, Dirichlet boundary, nodes numbered x fastest"""
    m, h = spec.grid, spec.h
    T = scipy.sparse.diags([-np.ones(m - 1), 2.0 * np.ones(m), -np.ones(m - 1)], [-1, 0, 1], format="csr")
    eye = scipy.sparse.identity(m, format="csr")
    A = ((scipy.sparse.kron(eye, T) + scipy.sparse.kron(T, eye)) / h ** 2).tocsr()
    x, y = poisson_nodes(spec)
    rhs = 2.0 * ((1.0 - 6.0 * x ** 2) * y ** 2 * (1.0 - y ** 2) + (1.0 - 6.0 * y ** 2) * x ** 2 * (1.0 - x ** 2))
    # the forcing is the Laplacian of the exact solution, so -Laplacian(u) = -rhs
    return QuadraticProblem(A, -rhs)


def poisson_nodes(spec: PoissonSpec) -> Tuple[np.ndarray, np.ndarray]:
    coords = spec.h * np.arange(1, spec.grid + 1)
    x, y = np.meshgrid(coords, coords, indexing="xy")
    return x.ravel(), y.ravel()


def poisson_exact_solution(spec: PoissonSpec) -> np.ndarray:
    x, y = poisson_nodes(spec)
    return x ** 2 * (1.0 - x ** 2) * y ** 2 * (1.0 - y ** 2)


def collinearity_factor(rank: int, collinearity: float) -> np.ndarray:
    """Cholesky factor L with L L^T = (1 - C) I + C 1 1^T"""
    gram = (1.0 - collinearity) * np.eye(rank) + collinearity * np.ones((rank, rank))
    try:
        return scipy.linalg.cholesky(gram, lower=True)
    except scipy.linalg.LinAlgError:
        raise ConfigurationError(f"Collinearity {collinearity} gives an indefinite column Gram matrix")


def add_noise(X: np.ndarray, l1: float, l2: float, rng: np.random.Generator) -> np.ndarray:
    """Homoskedastic noise at level l1, then heteroskedastic noise at level l2 (percent scale, < 100)"""
    X = as_tensor(X)
    n1 = rng.standard_normal(X.shape)
    noisy = X + np.sqrt(l1 / (100.0 - l1)) * frob_norm(X) / frob_norm(n1) * n1
    n2 = rng.standard_normal(X.shape) * noisy
    n2_norm = frob_norm(n2)
    if n2_norm == 0.0:
        return noisy
    return noisy + np.sqrt(l2 / (100.0 - l2)) * frob_norm(noisy) / n2_norm * n2


def add_uniform_noise(X: np.ndarray, rng: np.random.Generator, scale: float = 2.5) -> np.ndarray:
    """X + scale ||X|| / ||N|| N with N uniform on [0, 1], not de-meaned"""
    X = as_tensor(X)
    n = rng.uniform(0.0, 1.0, X.shape)
    return X + scale * frob_norm(X) / frob_norm(n) * n


def generate_collinear_cp(spec: CPTestSpec, trial: int = 0) -> Tuple[KTensor, np.ndarray]:
    factors_rng = make_rng(spec.seed, trial, "factors")
    chol = collinearity_factor(spec.rank, spec.collinearity)
    factors = [np.sqrt(spec.extent) * random_orthonormal(factors_rng, spec.extent, spec.rank) @ chol.T
               for _ in range(spec.order)]
    truth = KTensor(factors)
    noisy = add_noise(cp_full(truth), spec.noise_l1, spec.noise_l2, make_rng(spec.seed, trial, "noise"))
    return truth, noisy


def generate_synthetic_tucker(spec: TuckerTestSpec, trial: int = 0) -> np.ndarray:
    core = make_rng(spec.seed, trial, "core").standard_normal(tuple(spec.true_ranks))
    factors_rng = make_rng(spec.seed, trial, "factors")
    factors = [random_orthonormal(factors_rng, extent, rank) for extent, rank in zip(spec.extents, spec.true_ranks)]
    X = multi_mode_product(core, factors)
    return add_noise(X, spec.noise_l1, spec.noise_l2, make_rng(spec.seed, trial, "noise"))


@dataclass
class ProblemInstance:
    """Everything a solver loop needs for one trial"""
    name: str
    objective: Objective
    x0: np.ndarray
    measure: Callable[[float, float], float]
    make_preconditioner: Callable[[], PreconditionerHandle]
    space: object
    quadratic: Optional[QuadraticProblem] = None

    def identity_preconditioner(self) -> PreconditionerHandle:
        return IdentityPreconditioner(self.objective)


def _poisson_instance(config: ExperimentConfig) -> ProblemInstance:
    q = poisson2d_assemble(config.poisson_spec())
    b_norm = float(np.linalg.norm(q.b))
    # forward sweep: SOR (Gauss-Seidel at omega 1); forward-backward: SSOR
    smoother = SORPreconditioner(q.A, config.omega) if config.sweep == "f" else SSORPreconditioner(q.A, config.omega)
    return ProblemInstance(
        name=f"poisson n={q.dimension}",
        objective=Objective(q.objective, q.gradient),
        x0=np.zeros(q.dimension),
        measure=lambda f, gnorm: gnorm / b_norm,
        make_preconditioner=lambda: linear_preconditioner(q, smoother),
        space=EuclideanSpace(),
        quadratic=q,
    )


def cp_instance(X: np.ndarray, rank: int, x0: KTensor, sweep: str, name: str) -> ProblemInstance:
    """||g|| / numel(x) termination, CP-ALS sweep as the preconditioner"""
    shape = X.shape

    def unpack(v: np.ndarray) -> KTensor:
        return KTensor.from_vector(v, shape, rank)

    numel = x0.numel
    return ProblemInstance(
        name=name,
        objective=Objective(lambda v: cp_objective(X, unpack(v)),
                            lambda v: factors_to_vector(cp_gradient(X, unpack(v)))),
        x0=x0.to_vector(),
        measure=lambda f, gnorm: gnorm / numel,
        make_preconditioner=lambda: PreconditionerHandle(
            lambda v: cp_als_sweep(X, unpack(v), sweep).to_vector(), f"cp-als-{sweep}"),
        space=EuclideanSpace(),
    )


def tucker_instance(X: np.ndarray, ranks: Sequence[int], sweep: str, transport: str, name: str) -> ProblemInstance:
    """HOSVD start, ||g|| / |f| termination, HOOI sweep as the preconditioner"""
    start = hosvd_truncate(X, ranks)
    space = ProductGrassmann([a.shape for a in start.factors], transport)
    return ProblemInstance(
        name=name,
        objective=Objective(lambda v: tucker_objective(X, space.split(v)),
                            lambda v: space.join(tucker_gradient(X, space.split(v)))),
        x0=space.join(start.factors),
        measure=lambda f, gnorm: gnorm / abs(f) if f != 0.0 else np.inf,
        make_preconditioner=lambda: GrassmannPreconditioner(
            space, lambda v: space.join(hooi_sweep(X, space.split(v), sweep)), f"hooi-{sweep}"),
        space=space,
    )


def _random_cp_start(rng: np.random.Generator, shape: Sequence[int], rank: int) -> KTensor:
    return KTensor([rng.standard_normal((extent, rank)) for extent in shape])


def build_problem(config: ExperimentConfig, trial: int) -> ProblemInstance:
    """Instantiate the configured problem for one trial; config must be resolved"""
    if config.problem == "poisson":
        return _poisson_instance(config)
    if config.problem == "cp-synthetic":
        spec = config.cp_spec()
        _, X = generate_collinear_cp(spec, trial)
        start = _random_cp_start(make_rng(spec.seed, trial, "init"), X.shape, spec.rank)
        return cp_instance(X, spec.rank, start, config.sweep, f"cp {spec.shape} R={spec.rank} C={spec.collinearity}")
    if config.problem == "tucker-synthetic":
        spec = config.tucker_spec()
        X = generate_synthetic_tucker(spec, trial)
        return tucker_instance(X, spec.ranks, config.sweep, config.transport,
                               f"tucker {spec.extents} -> {spec.ranks}")
    X = load_tensor(config.tensor_path, config.tensor_format)
    if config.uniform_noise:
        X = add_uniform_noise(X, make_rng(config.seed, trial, "noise"))
    if config.decomposition == "cp":
        start = _random_cp_start(make_rng(config.seed, trial, "init"), X.shape, config.rank)
        return cp_instance(X, config.rank, start, config.sweep, f"cp file {X.shape} R={config.rank}")
    ranks: List[int] = list(config.tucker_ranks)
    if len(ranks) != X.ndim:
        raise ConfigurationError(f"tucker_ranks {ranks} do not match the order-{X.ndim} tensor in {config.tensor_path}")
    return tucker_instance(X, ranks, config.sweep, config.transport, f"tucker file {X.shape} -> {ranks}")

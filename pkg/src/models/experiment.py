from pydantic import BaseModel, Field, computed_field, model_validator
from typing import List, Literal, Optional
from datetime import datetime

from .problem_specs import CPTestSpec, PoissonSpec, TuckerTestSpec

SCHEMA_VERSION = "1.0"

Problem = Literal["poisson", "cp-synthetic", "tucker-synthetic", "tensor-file"]
Method = Literal["als", "hooi", "cg", "pcg", "richardson", "ncg", "lbfgs", "lbroyden"]

OUTER_METHODS = ("ncg", "lbfgs", "lbroyden")
QN_METHODS = ("lbfgs", "lbroyden")
NOISE_L2_DEFAULTS = {"cp": 1.0, "tucker": 10.0}
PROBLEM_METHODS = {
    "poisson": ("cg", "pcg", "richardson") + OUTER_METHODS,
    "cp": ("als",) + OUTER_METHODS,
    "tucker": ("hooi",) + OUTER_METHODS,
}
METHOD_LABELS = {
    "als": "ALS", "hooi": "HOOI", "cg": "CG", "pcg": "PCG", "richardson": "Richardson",
    "ncg": "NCG", "lbfgs": "L-BFGS", "lbroyden": "L-Broyden",
}


class ExperimentConfig(BaseModel):
    problem: Problem = "cp-synthetic"
    method: Method = "lbfgs"
    precond: Literal["none", "lp", "tp"] = "none"
    sweep: Optional[Literal["f", "fb"]] = None
    m: int = Field(1, ge=1)
    linesearch: Optional[Literal["wolfe", "modbt", "exact-quadratic"]] = None
    beta: Literal["pr", "hs", "hz"] = "hs"
    beta_form: Optional[Literal["plain", "tilde", "hat"]] = None
    eta_policy: Optional[Literal["unit", "gamma"]] = None
    damping: Optional[bool] = None
    two_loop: bool = False
    reuse_tp_lead: bool = False
    window_transport: bool = False
    transport: Literal["parallel", "projection"] = "parallel"
    restart_every: Optional[int] = Field(None, ge=0)
    max_iters: int = Field(1000, ge=0)
    max_fevals: int = Field(10000, ge=0)
    tol: float = Field(1e-7, gt=0.0)
    trials: int = Field(1, ge=1)
    seed: int = 42
    out_dir: str = "results"
    label: Optional[str] = None
    # poisson
    h: float = 0.02
    omega: float = Field(1.0, gt=0.0, lt=2.0)
    # cp-synthetic
    size: int = Field(50, ge=1)
    rank: int = Field(5, ge=1)
    order: int = Field(3, ge=2)
    collinearity: float = 0.9
    noise_l1: float = 10.0
    noise_l2: Optional[float] = None  # 1 for cp-synthetic, 10 for tucker-synthetic
    # tucker-synthetic
    tucker_shape: List[int] = [60, 60, 60]
    tucker_true_ranks: List[int] = [20, 20, 20]
    tucker_ranks: List[int] = [10, 10, 10]
    # tensor-file
    tensor_path: Optional[str] = None
    tensor_format: Optional[Literal["dtns", "csv", "idx"]] = None
    decomposition: Literal["cp", "tucker"] = "tucker"
    uniform_noise: bool = False

    @property
    def kind(self) -> str:
        """Problem family: poisson, cp or tucker"""
        if self.problem == "poisson":
            return "poisson"
        if self.problem == "cp-synthetic":
            return "cp"
        if self.problem == "tucker-synthetic":
            return "tucker"
        return self.decomposition

    @model_validator(mode="after")
    def check_combination(self):
        allowed = PROBLEM_METHODS[self.kind]
        if self.method not in allowed:
            raise ValueError(f"method {self.method} is not available for {self.problem} (choose from {allowed})")
        if self.precond != "none" and self.method not in OUTER_METHODS:
            raise ValueError(f"precond {self.precond} needs an outer method {OUTER_METHODS}, got {self.method}")
        if self.linesearch == "exact-quadratic" and self.kind != "poisson":
            raise ValueError("the exact-quadratic line search needs the quadratic poisson problem")
        if self.method == "pcg" and self.sweep == "f":
            raise ValueError("pcg needs the symmetric SSOR preconditioner (sweep fb)")
        if self.problem == "tensor-file" and not self.tensor_path:
            raise ValueError("problem tensor-file needs tensor_path")
        if self.problem == "poisson":
            self.poisson_spec()
        elif self.problem == "cp-synthetic":
            self.cp_spec()
        elif self.problem == "tucker-synthetic":
            self.tucker_spec()
        return self

    def poisson_spec(self) -> PoissonSpec:
        return PoissonSpec(h=self.h)

    def cp_spec(self) -> CPTestSpec:
        return CPTestSpec(extent=self.size, rank=self.rank, order=self.order, collinearity=self.collinearity,
                          noise_l1=self.noise_l1, noise_l2=self.heteroskedastic_noise(), seed=self.seed)

    def tucker_spec(self) -> TuckerTestSpec:
        return TuckerTestSpec(extents=self.tucker_shape, true_ranks=self.tucker_true_ranks, ranks=self.tucker_ranks,
                              noise_l1=self.noise_l1, noise_l2=self.heteroskedastic_noise(), seed=self.seed)

    def heteroskedastic_noise(self) -> float:
        if self.noise_l2 is not None:
            return self.noise_l2
        return NOISE_L2_DEFAULTS.get(self.kind, 1.0)

    def resolved(self) -> "ExperimentConfig":
        """Fill problem-specific defaults for every field left unset"""
        kind = self.kind
        update = {}
        if self.linesearch is None and self.method in OUTER_METHODS:
            if kind == "poisson":
                update["linesearch"] = "exact-quadratic"
            else:
                update["linesearch"] = "wolfe" if self.method == "ncg" else "modbt"
        if self.sweep is None:
            symmetric = kind == "poisson" or (self.problem == "tensor-file" and kind == "tucker")
            update["sweep"] = "fb" if symmetric else "f"
        if self.beta_form is None:
            update["beta_form"] = {"none": "plain", "lp": "tilde", "tp": "hat"}[self.precond]
        if self.eta_policy is None:
            update["eta_policy"] = "unit" if kind == "cp" and self.precond != "none" else "gamma"
        if self.damping is None:
            update["damping"] = kind != "poisson"
        if self.restart_every is None:
            update["restart_every"] = {"poisson": 0, "cp": 20, "tucker": 50}[kind]
        if self.noise_l2 is None and kind != "poisson":
            update["noise_l2"] = self.heteroskedastic_noise()
        return self.model_copy(update=update)

    def display_label(self) -> str:
        if self.label:
            return self.label
        name = METHOD_LABELS[self.method]
        if self.method == "pcg":
            return f"PCG-{'SGS' if self.omega == 1.0 else f'SSOR({self.omega:g})'}"
        if self.method in ("als", "hooi") and self.sweep == "fb":
            name += "-FB"
        if self.kind == "poisson" and self.sweep == "f" and (self.method == "richardson" or self.precond != "none"):
            name += "-GS" if self.omega == 1.0 else f"-SOR({self.omega:g})"
        if self.precond != "none":
            name += f"-{self.precond.upper()}"
            if self.kind != "poisson":
                name += f"-{(self.sweep or 'f').upper()}"
        if self.method in QN_METHODS:
            name += f" m={self.m}"
        if self.method in OUTER_METHODS and self.linesearch:
            name += f" ({self.linesearch})"
        return name


class TraceRecord(BaseModel):
    k: int = Field(ge=1)
    f: float
    gnorm_scaled: float
    alpha: float
    flags: str = ""
    q_applies: int = Field(0, ge=0)
    f_evals: int = Field(0, ge=0)
    g_evals: int = Field(0, ge=0)


class TrialSummary(BaseModel):
    trial: int
    converged: bool
    iterations: int
    stop_reason: str
    final_f: Optional[float] = None
    initial_measure: Optional[float] = None
    final_measure: Optional[float] = None
    q_applies: int = 0
    f_evals: int = 0
    g_evals: int = 0
    fevals_overshoot: int = 0
    elapsed_seconds: float = 0.0
    error: Optional[str] = None


class VariantSummary(BaseModel):
    label: str
    config: ExperimentConfig
    trials: List[TrialSummary] = []

    @computed_field
    @property
    def converged_trials(self) -> int:
        return sum(1 for t in self.trials if t.converged)

    @computed_field
    @property
    def all_converged(self) -> bool:
        return bool(self.trials) and self.converged_trials == len(self.trials)

    @computed_field
    @property
    def mean_iterations(self) -> Optional[float]:
        if not self.trials:
            return None
        return sum(t.iterations for t in self.trials) / len(self.trials)

    def table_cell(self) -> str:
        """Mean iterations, starred when any trial failed to converge"""
        if self.mean_iterations is None:
            return "-"
        return f"{'*' if not self.all_converged else ''}{self.mean_iterations:.1f}"


class CampaignSummary(BaseModel):
    schema_version: str = SCHEMA_VERSION
    created_at: datetime = Field(default_factory=datetime.now)
    variants: List[VariantSummary] = []

    @property
    def all_converged(self) -> bool:
        return all(v.all_converged for v in self.variants)

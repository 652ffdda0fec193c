import argparse
import itertools
import json
import logging
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from pydantic import ValidationError

from .errors import ConfigurationError
from .experiment_runner import run_campaign
from .models.experiment import QN_METHODS, ExperimentConfig
from .results_store import emit_outputs

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_NOT_CONVERGED = 2

LIST_FIELDS = ("tucker_shape", "tucker_true_ranks", "tucker_ranks")


def configure_logging() -> None:
    level = os.getenv("LOG_LEVEL", "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _split_list(value) -> list:
    if isinstance(value, str):
        return [v.strip() for v in value.split(",") if v.strip()]
    if isinstance(value, (list, tuple)):
        return list(value)
    return [value]


def load_config_file(path: str) -> Dict[str, object]:
    """JSON object, or flat key=value lines with # comments"""
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"Config file {path} not found")
    if p.suffix.lower() == ".json":
        try:
            data = json.loads(p.read_text())
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"Config file {path} is not valid JSON: {e}")
        if not isinstance(data, dict):
            raise ConfigurationError(f"Config file {path} must hold a JSON object")
        return data
    data: Dict[str, object] = {}
    for line_no, line in enumerate(p.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{line_no}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        data[key] = _split_list(value) if key in LIST_FIELDS else value
    return data


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bench", description="Nonlinearly preconditioned optimizer benchmarks")
    parser.add_argument("--config", help="JSON or key=value config file; flags override it")
    parser.add_argument("--problem", choices=["poisson", "cp-synthetic", "tucker-synthetic", "tensor-file"])
    parser.add_argument("--method", help="comma list of als, hooi, cg, pcg, richardson, ncg, lbfgs, lbroyden")
    parser.add_argument("--precond", help="comma list of none, lp, tp")
    parser.add_argument("--sweep", choices=["f", "fb"])
    parser.add_argument("--m", help="comma list of window sizes")
    parser.add_argument("--linesearch", choices=["wolfe", "modbt", "exact-quadratic"])
    parser.add_argument("--beta", choices=["pr", "hs", "hz"])
    parser.add_argument("--beta-form", choices=["plain", "tilde", "hat"])
    parser.add_argument("--eta-policy", choices=["unit", "gamma"])
    parser.add_argument("--damping", action=argparse.BooleanOptionalAction, default=None)
    parser.add_argument("--two-loop", action="store_true", default=None)
    parser.add_argument("--reuse-tp-lead", action="store_true", default=None)
    parser.add_argument("--window-transport", action="store_true", default=None)
    parser.add_argument("--transport", choices=["parallel", "projection"])
    parser.add_argument("--restart-every", type=int)
    parser.add_argument("--trials", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--max-iters", type=int)
    parser.add_argument("--max-fevals", type=int)
    parser.add_argument("--tol", type=float)
    parser.add_argument("--out-dir")
    parser.add_argument("--label")
    parser.add_argument("--h", type=float)
    parser.add_argument("--omega", type=float)
    parser.add_argument("--size", type=int)
    parser.add_argument("--rank", type=int)
    parser.add_argument("--collinearity", type=float)
    parser.add_argument("--noise-l1", type=float)
    parser.add_argument("--noise-l2", type=float)
    parser.add_argument("--tucker-shape")
    parser.add_argument("--tucker-true-ranks")
    parser.add_argument("--tucker-ranks")
    parser.add_argument("--tensor-path")
    parser.add_argument("--tensor-format", choices=["dtns", "csv", "idx"])
    parser.add_argument("--decomposition", choices=["cp", "tucker"])
    parser.add_argument("--uniform-noise", action="store_true", default=None)
    return parser


def collect_settings(args: argparse.Namespace) -> Dict[str, object]:
    """Config file values overridden by every flag given on the command line"""
    settings: Dict[str, object] = {}
    if args.config:
        settings.update(load_config_file(args.config))
    for key, value in vars(args).items():
        if key == "config" or value is None:
            continue
        settings[key] = _split_list(value) if key in LIST_FIELDS else value
    return settings


def expand_variants(settings: Dict[str, object]) -> List[ExperimentConfig]:
    """One config per valid (method, precond, m) combination; m only varies for quasi-Newton methods"""
    base = dict(settings)
    methods = _split_list(base.pop("method", "lbfgs"))
    preconds = _split_list(base.pop("precond", "none"))
    windows = _split_list(base.pop("m", 1))
    combos = [(method, precond, m) for method, precond, m in itertools.product(methods, preconds, windows)
              if method in QN_METHODS or m == windows[0]]
    configs = []
    for method, precond, m in combos:
        try:
            configs.append(ExperimentConfig(**base, method=method, precond=precond, m=m))
        except ValidationError as e:
            if len(combos) == 1:
                raise
            logger.warning(f"Skipping {method}/{precond}/m={m}: {e.errors()[0]['msg']}")
    if not configs:
        raise ConfigurationError("No valid method/preconditioner combination")
    return configs


def run_bench(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        configs = expand_variants(collect_settings(args))
    except (ValidationError, ConfigurationError) as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_CONFIG_ERROR
    result = run_campaign(configs)
    out_dir = configs[0].out_dir
    try:
        emit_outputs(result.traces, result.summary, out_dir)
    except OSError:
        return EXIT_CONFIG_ERROR
    for variant in result.summary.variants:
        print(f"{variant.label}: {variant.converged_trials}/{len(variant.trials)} converged, "
              f"mean iterations {variant.table_cell()}")
    return EXIT_OK if result.summary.all_converged else EXIT_NOT_CONVERGED


def run_web_server():
    """Run the results dashboard"""
    from .web_interface import create_web_app
    import uvicorn

    results_dir = os.getenv("RESULTS_DIR", "results")
    web_port = int(os.getenv("WEB_PORT", "8000"))
    logger.info(f"Starting results dashboard for {results_dir} on port {web_port}")
    uvicorn.run(create_web_app(results_dir), host="0.0.0.0", port=web_port, log_level="info")


if __name__ == "__main__":
    configure_logging()
    mode = os.getenv("RUN_MODE", "bench")

    if mode == "web":
        run_web_server()
    elif mode == "mcp":
        from .mcp_server import run_mcp_server
        run_mcp_server()
    elif mode == "mcp-http":
        from .mcp_server import run_mcp_http_server
        run_mcp_http_server()
    else:
        sys.exit(run_bench())

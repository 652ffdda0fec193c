import json
import logging
import os
from pathlib import Path
from typing import Optional

from fastmcp import FastMCP
from pydantic import ValidationError

from .errors import ConfigurationError
from .experiment_runner import ExperimentRunner
from .main import expand_variants, load_config_file
from .models.experiment import METHOD_LABELS, PROBLEM_METHODS
from .results_store import campaign_path, emit_outputs, list_campaigns, load_summary, read_trace_csv, trace_path

logger = logging.getLogger(__name__)


class BenchMCPServer:
    def __init__(self, results_dir: Optional[str] = None, config_path: Optional[str] = None):
        self.results_dir = Path(results_dir or os.getenv("RESULTS_DIR", "results"))
        self.config_path = config_path or os.getenv("BENCH_CONFIG_PATH")
        self.logger = logging.getLogger(__name__)
        self.runner = ExperimentRunner()
        self.mcp = FastMCP("npqn-bench")
        self._register_tools()

    def _register_tools(self):
        """Register all MCP tools"""

        @self.mcp.tool()
        def run_benchmark(problem: str, method: str, precond: str = "none", m: str = "1", trials: int = 1,
                          seed: int = 42, max_iters: int = 1000, campaign: str = "mcp",
                          options: str = "{}") -> str:
            """Run a benchmark campaign; method, precond and m accept comma lists, options is a JSON object of extra settings"""
            return self.run_benchmark(problem, method, precond, m, trials, seed, max_iters, campaign, options)

        @self.mcp.tool()
        def list_results() -> str:
            """List stored campaigns"""
            return self.list_results()

        @self.mcp.tool()
        def get_campaign_summary(campaign: str, as_json: bool = False) -> str:
            """Comparison table (or the full JSON summary) of a stored campaign"""
            return self.get_campaign_summary(campaign, as_json)

        @self.mcp.tool()
        def get_trace(campaign: str, label: str, trial: int = 0, tail: int = 20) -> str:
            """Last iterations of one trial trace"""
            return self.get_trace(campaign, label, trial, tail)

        @self.mcp.tool()
        def describe_methods() -> str:
            """Methods available for each problem family"""
            return self.describe_methods()

    def run_benchmark(self, problem: str, method: str, precond: str = "none", m: str = "1", trials: int = 1,
                      seed: int = 42, max_iters: int = 1000, campaign: str = "mcp", options: str = "{}") -> str:
        try:
            settings = load_config_file(self.config_path) if self.config_path else {}
            extra = json.loads(options or "{}")
            if not isinstance(extra, dict):
                return "options must be a JSON object"
            settings.update(extra)
            settings.update(problem=problem, method=method, precond=precond, m=m, trials=trials, seed=seed,
                            max_iters=max_iters, out_dir=str(campaign_path(self.results_dir, campaign)))
            configs = expand_variants(settings)
        except (ValidationError, ConfigurationError, json.JSONDecodeError) as e:
            self.logger.error(f"Rejected benchmark request: {e}")
            return f"Invalid configuration: {e}"
        result = self.runner.run_campaign(configs)
        try:
            emit_outputs(result.traces, result.summary, configs[0].out_dir)
        except OSError as e:
            return f"Campaign finished but results could not be written: {e}"
        lines = [f"**Campaign {campaign}**"]
        for variant in result.summary.variants:
            lines.append(f"- {variant.label}: {variant.converged_trials}/{len(variant.trials)} converged, "
                         f"mean iterations {variant.table_cell()}")
        return "\n".join(lines)

    def list_results(self) -> str:
        campaigns = list_campaigns(self.results_dir)
        if not campaigns:
            return f"No campaigns under {self.results_dir}"
        return "Stored campaigns:\n" + "\n".join(f"- {c}" for c in campaigns)

    def get_campaign_summary(self, campaign: str, as_json: bool = False) -> str:
        try:
            directory = campaign_path(self.results_dir, campaign)
        except ConfigurationError as e:
            return str(e)
        if as_json:
            path = directory / "summary.json"
            if not path.is_file():
                return f"Campaign {campaign} not found"
            return load_summary(path).model_dump_json(indent=2)
        path = directory / "table.md"
        if not path.is_file():
            return f"Campaign {campaign} not found"
        return path.read_text()

    def get_trace(self, campaign: str, label: str, trial: int = 0, tail: int = 20) -> str:
        try:
            path = trace_path(campaign_path(self.results_dir, campaign), label, trial)
        except ConfigurationError as e:
            return str(e)
        if not path.is_file():
            return f"No trace for {label} trial {trial} in campaign {campaign}"
        records = read_trace_csv(path)[-tail:]
        lines = ["iter  f  gnorm_scaled  alpha  flags"]
        lines.extend(f"{r.k}  {r.f:.10e}  {r.gnorm_scaled:.3e}  {r.alpha:.3g}  {r.flags or '-'}" for r in records)
        return "\n".join(lines)

    def describe_methods(self) -> str:
        lines = []
        for family, methods in PROBLEM_METHODS.items():
            lines.append(f"{family}: " + ", ".join(f"{m} ({METHOD_LABELS[m]})" for m in methods))
        lines.append("precond: none, lp (left preconditioning), tp (transformation preconditioning)")
        return "\n".join(lines)


def run_mcp_server():
    """Run MCP server in stdio mode"""
    server = BenchMCPServer()
    logger.info("Starting MCP server on stdio")
    server.mcp.run(transport="stdio")


def run_mcp_http_server():
    """Run MCP server with streamable-http transport"""
    server = BenchMCPServer()
    mcp_port = int(os.getenv("MCP_PORT", "8001"))
    logger.info(f"Starting MCP server with streamable-http transport on port {mcp_port}")
    server.mcp.run(transport="streamable-http", port=mcp_port, host="0.0.0.0", path="/mcp")

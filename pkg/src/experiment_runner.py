import os
import time
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .drivers import solve
from .models.experiment import CampaignSummary, ExperimentConfig, TraceRecord, TrialSummary, VariantSummary
from .problems import build_problem


@dataclass
class CampaignResult:
    summary: CampaignSummary
    traces: Dict[str, List[List[TraceRecord]]] = field(default_factory=dict)


class ExperimentRunner:
    def __init__(self, max_workers: Optional[int] = None):
        self.logger = logging.getLogger(__name__)
        self.max_workers = max_workers or max(1, int(os.getenv("BENCH_THREADS", "1")))

    def run_trial(self, config: ExperimentConfig, trial: int) -> Tuple[TrialSummary, List[TraceRecord]]:
        """Run one seeded trial; any abort is recorded as a failed trial"""
        records: List[TraceRecord] = []
        label = config.display_label()
        start = time.perf_counter()
        try:
            problem = build_problem(config, trial)
            run = solve(problem, config, records)
            summary = TrialSummary(
                trial=trial,
                converged=run.converged,
                iterations=run.iterations,
                stop_reason=run.stop_reason,
                final_f=run.final_f,
                initial_measure=run.initial_measure,
                final_measure=run.final_measure,
                q_applies=records[-1].q_applies if records else 0,
                f_evals=problem.objective.f_evals,
                g_evals=problem.objective.g_evals,
                fevals_overshoot=run.fevals_overshoot,
                elapsed_seconds=time.perf_counter() - start,
            )
            status = "converged" if run.converged else f"stopped ({run.stop_reason})"
            self.logger.info(f"{label} trial {trial}: {status} after {run.iterations} iterations")
        except Exception as e:
            self.logger.error(f"{label} trial {trial} aborted: {e}")
            summary = TrialSummary(
                trial=trial,
                converged=False,
                iterations=len(records),
                stop_reason="error",
                final_f=records[-1].f if records else None,
                final_measure=records[-1].gnorm_scaled if records else None,
                elapsed_seconds=time.perf_counter() - start,
                error=f"{type(e).__name__}: {e}",
            )
        return summary, records

    def run_variant(self, config: ExperimentConfig) -> Tuple[VariantSummary, List[List[TraceRecord]]]:
        config = config.resolved()
        label = config.display_label()
        self.logger.info(f"Running {label} on {config.problem}: {config.trials} trial(s), seed {config.seed}")
        trials = range(config.trials)
        workers = min(self.max_workers, config.trials)
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                outcomes = list(pool.map(lambda t: self.run_trial(config, t), trials))
        else:
            outcomes = [self.run_trial(config, t) for t in trials]
        summary = VariantSummary(label=label, config=config, trials=[s for s, _ in outcomes])
        self.logger.info(f"{label}: {summary.converged_trials}/{config.trials} converged, "
                         f"mean iterations {summary.mean_iterations}")
        return summary, [records for _, records in outcomes]

    def run_campaign(self, configs: Sequence[ExperimentConfig]) -> CampaignResult:
        result = CampaignResult(CampaignSummary())
        for config in configs:
            variant, traces = self.run_variant(config)
            label = variant.label
            suffix = 2
            while label in result.traces:
                label = f"{variant.label} #{suffix}"
                suffix += 1
            variant.label = label
            result.summary.variants.append(variant)
            result.traces[label] = traces
        return result


def run_experiment(config: ExperimentConfig, max_workers: Optional[int] = None) -> CampaignResult:
    return ExperimentRunner(max_workers).run_campaign([config])


def run_campaign(configs: Sequence[ExperimentConfig], max_workers: Optional[int] = None) -> CampaignResult:
    return ExperimentRunner(max_workers).run_campaign(configs)

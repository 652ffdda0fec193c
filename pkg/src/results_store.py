"""Campaign output files.

Layout under the output directory::

    summary.json               CampaignSummary, schema versioned
    table.md                   comparison table, * marks a variant with a failed trial
    <variant>.dat              gnuplot blocks "iter gnorm_scaled", one block per trial
    <variant>/trial_<i>.csv    iter,f,gnorm_scaled,alpha,q_applies,f_evals,g_evals,flags
"""
import csv
import logging
import re
from pathlib import Path
from typing import Dict, List, Sequence, Union

from .errors import ConfigurationError
from .models.experiment import CampaignSummary, TraceRecord, VariantSummary

logger = logging.getLogger(__name__)

CSV_HEADER = ["iter", "f", "gnorm_scaled", "alpha", "q_applies", "f_evals", "g_evals", "flags"]
FORMATS = ("csv", "json", "dat", "md")

PathLike = Union[str, Path]


def slugify(label: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", label.lower()).strip("-") or "variant"


def write_trace_csv(path: PathLike, records: Sequence[TraceRecord]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_HEADER)
        for r in records:
            writer.writerow([r.k, repr(r.f), repr(r.gnorm_scaled), repr(r.alpha), r.q_applies, r.f_evals, r.g_evals,
                             r.flags])


def read_trace_csv(path: PathLike) -> List[TraceRecord]:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return [TraceRecord(k=int(row["iter"]), f=float(row["f"]), gnorm_scaled=float(row["gnorm_scaled"]),
                        alpha=float(row["alpha"]), q_applies=int(row["q_applies"]), f_evals=int(row["f_evals"]),
                        g_evals=int(row["g_evals"]), flags=row.get("flags") or "")
            for row in rows]


def write_residual_dat(path: PathLike, variant: VariantSummary, traces: Sequence[Sequence[TraceRecord]]) -> None:
    lines = []
    for trial, records in zip(variant.trials, traces):
        lines.append(f"# {variant.label} trial {trial.trial}")
        if trial.initial_measure is not None:
            lines.append(f"0 {trial.initial_measure!r}")
        lines.extend(f"{r.k} {r.gnorm_scaled!r}" for r in records)
        lines.extend(["", ""])
    Path(path).write_text("\n".join(lines))


def comparison_table(summary: CampaignSummary) -> str:
    lines = [
        "| Method | Converged | Mean iterations | Mean f-evals | Mean time (s) |",
        "|---|---|---|---|---|",
    ]
    for v in summary.variants:
        n = len(v.trials) or 1
        fevals = sum(t.f_evals for t in v.trials) / n
        seconds = sum(t.elapsed_seconds for t in v.trials) / n
        lines.append(f"| {v.label} | {v.converged_trials}/{len(v.trials)} | {v.table_cell()} | {fevals:.1f} | {seconds:.2f} |")
    lines.append("")
    lines.append("\\* at least one trial failed to converge")
    return "\n".join(lines) + "\n"


def emit_outputs(traces: Dict[str, List[List[TraceRecord]]], summary: CampaignSummary, out_dir: PathLike,
                 formats: Sequence[str] = FORMATS) -> List[Path]:
    """Write the requested output formats and return the paths written"""
    out = Path(out_dir)
    written: List[Path] = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        if "json" in formats:
            path = out / "summary.json"
            path.write_text(summary.model_dump_json(indent=2))
            written.append(path)
        if "md" in formats:
            path = out / "table.md"
            path.write_text(comparison_table(summary))
            written.append(path)
        for variant in summary.variants:
            slug = slugify(variant.label)
            variant_traces = traces.get(variant.label, [])
            if "csv" in formats:
                (out / slug).mkdir(exist_ok=True)
                for trial, records in zip(variant.trials, variant_traces):
                    path = out / slug / f"trial_{trial.trial}.csv"
                    write_trace_csv(path, records)
                    written.append(path)
            if "dat" in formats:
                path = out / f"{slug}.dat"
                write_residual_dat(path, variant, variant_traces)
                written.append(path)
    except OSError as e:
        logger.error(f"Cannot write results to {out}: {e}")
        raise
    logger.info(f"Wrote {len(written)} result files to {out}")
    return written


def load_summary(path: PathLike) -> CampaignSummary:
    return CampaignSummary.model_validate_json(Path(path).read_text())


def list_campaigns(root: PathLike) -> List[str]:
    """Campaign directories (relative to root) holding a summary.json"""
    root = Path(root)
    if not root.is_dir():
        return []
    return sorted(str(p.parent.relative_to(root)) for p in root.rglob("summary.json"))


def trace_path(campaign_dir: PathLike, label: str, trial: int) -> Path:
    return Path(campaign_dir) / slugify(label) / f"trial_{trial}.csv"


def campaign_path(root: PathLike, name: str) -> Path:
    """Directory of campaign ``name`` under root; names that resolve outside root are refused"""
    base = Path(root).resolve()
    path = (base / name).resolve()
    if base not in path.parents:
        raise ConfigurationError(f"Campaign name {name!r} does not stay inside {root}")
    return path

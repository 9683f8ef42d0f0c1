"""
Experiment runner: single runs, parameter sweeps and theory-only reports.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Union

from ..analysis import theory
from ..data.datasets import build_problem
from ..data.models import Algorithm, ExperimentConfig, RunConfig, TheoryReport, Trace
from ..data.results import (
    write_config_copy, write_manifest, write_summary_csv, write_theory_json, write_trace_csv,
)
from ..optim.algorithms import run_algorithm
from ..optim.problem import FederatedProblem
from ..utils.errors import ConfigurationError
from .experiment import expand_grid, resolve_run_config

logger = logging.getLogger(__name__)


@dataclass
class RunOutcome:
    """Artifacts and traces of one grid point."""
    prefix: str
    run_config: RunConfig
    traces: List[Trace] = field(default_factory=list)
    report: Optional[TheoryReport] = None

    @property
    def diverged(self) -> bool:
        return any(trace.terminated_early for trace in self.traces)

    @property
    def divergence_reasons(self) -> List[str]:
        return [
            f"seed {trace.config.seed}, {trace.termination_reason}"
            for trace in self.traces if trace.terminated_early
        ]


def _run_metadata(run_config: RunConfig) -> Dict[str, object]:
    return {
        'algorithm': run_config.algorithm.value,
        'gamma': run_config.gamma,
        'alpha': run_config.alpha,
        'eta': run_config.eta,
        'compressor': run_config.compressor.label(),
    }


class ExperimentRunner:
    """Executes an ExperimentConfig and writes its artifacts next to the output prefix."""

    def __init__(self, config: ExperimentConfig, parallel: Optional[bool] = None):
        self.config = config
        self.parallel = parallel
        self._problem: Optional[FederatedProblem] = None

    @property
    def problem(self) -> FederatedProblem:
        if self._problem is None:
            self._problem = build_problem(self.config.problem)
        return self._problem

    def _warn_conditions(self, report: TheoryReport, algorithm: Algorithm):
        for check in theory.relevant_checks(report.validity, algorithm):
            if not check.satisfied:
                logger.warning(
                    f"{check.theorem} condition violated: {check.description} "
                    f"(lhs={check.lhs:.6g}, rhs={check.rhs:.6g}); running anyway"
                )

    def run_point(self, algorithm: Algorithm, gamma_spec: Union[float, str], k: Optional[int],
                  prefix: str) -> RunOutcome:
        """
        Run every repeat of one grid point and write its trace, theory report and config copy.

        Repeats use seeds seed, seed+1, ...; the theory report uses the first.
        """
        base = resolve_run_config(self.config, self.problem, algorithm, gamma_spec, k, self.config.seed)
        report = theory.build_theory_report(self.problem, base)
        self._warn_conditions(report, algorithm)

        outcome = RunOutcome(prefix=prefix, run_config=base, report=report)
        for repeat in range(self.config.repeats):
            seed = self.config.seed + repeat
            run_config = resolve_run_config(self.config, self.problem, algorithm, gamma_spec, k, seed)
            outcome.traces.append(run_algorithm(self.problem, run_config, parallel=self.parallel))

        write_trace_csv(f"{prefix}.trace.csv", outcome.traces)
        write_summary_csv(f"{prefix}.summary.csv", outcome.traces)
        write_theory_json(f"{prefix}.theory.json", report, extra=_run_metadata(base))
        write_config_copy(f"{prefix}.config.json", self.config.raw)
        if outcome.diverged:
            for reason in outcome.divergence_reasons:
                logger.error(f"Divergence: {reason}")
        return outcome

    def run(self) -> RunOutcome:
        """Single run; list-valued sweep fields must go through sweep()."""
        if self.config.grid_size != 1:
            raise ConfigurationError(
                f"{self.config.grid_size} grid points; use the sweep command for list-valued fields",
                'algorithm' if len(self.config.algorithms) > 1 else
                'gamma' if len(self.config.gammas) > 1 else 'compressor.k',
            )
        algorithm, gamma_spec, k = self.config.algorithms[0], self.config.gammas[0], self.config.ks[0]
        logger.info(f"Running experiment '{self.config.name}'")
        return self.run_point(algorithm, gamma_spec, k, self.config.output)

    def sweep(self) -> List[RunOutcome]:
        """Run the full grid and write <output>.manifest.csv once at the end."""
        grid = expand_grid(self.config)
        logger.info(f"Sweeping {len(grid)} grid points for '{self.config.name}'")
        outcomes = []
        rows: List[Dict] = []
        for index, (algorithm, gamma_spec, k) in enumerate(grid):
            prefix = f"{self.config.output}-{index:03d}"
            outcome = self.run_point(algorithm, gamma_spec, k, prefix)
            outcomes.append(outcome)
            rows.append({
                'index': index,
                'prefix': prefix,
                'algorithm': algorithm.value,
                'gamma': outcome.run_config.gamma,
                'gamma_rule': str(gamma_spec),
                'k': '' if k is None else k,
                'repeats': self.config.repeats,
                'terminated_early': outcome.diverged,
            })
        write_manifest(f"{self.config.output}.manifest.csv", rows)
        return outcomes

    def theory(self) -> TheoryReport:
        """Theory report for the first grid point; no training."""
        algorithm, gamma_spec, k = self.config.algorithms[0], self.config.gammas[0], self.config.ks[0]
        base = resolve_run_config(self.config, self.problem, algorithm, gamma_spec, k, self.config.seed)
        report = theory.build_theory_report(self.problem, base)
        self._warn_conditions(report, algorithm)
        write_theory_json(f"{self.config.output}.theory.json", report, extra=_run_metadata(base))
        return report

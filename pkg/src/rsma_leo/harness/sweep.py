"""Monte Carlo sweeps over total power, interference threshold or slot dimensions."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..model import ModelError, SystemConfig
from ..solver import SCHEMES, SolverOptions
from .scenario import ScenarioParams, generate_scenario

log = logging.getLogger(__name__)

VARIABLES = ("P_tot", "I_th", "dims")
_CONFIG_FIELD = {"P_tot": "total_power", "I_th": "interference_threshold"}

# errors that abort a single trial; anything else is a bug and propagates
TRIAL_ERRORS = (ValueError, ArithmeticError, np.linalg.LinAlgError)


def significant(value, digits=9):
    """Round a float to ``digits`` significant digits (the export precision)."""
    if not math.isfinite(value):
        return float(value)
    return float(f"{value:.{digits}g}")


def format_value(variable, value):
    """Text form of a sweep value: ``KxM`` for dimensions, 9 significant digits otherwise."""
    if variable == "dims":
        return f"{value[0]}x{value[1]}"
    return f"{value:.9g}"


@dataclass
class SweepSpec:
    """What to sweep.

    ``dims`` values are ``(K, M)`` pairs; the user count follows as ``2 K``.
    """

    variable: str
    values: list
    trials: int = 100
    schemes: tuple = ("opt", "fix_p", "rand_x")
    seed_base: int = 0
    config: SystemConfig = field(default_factory=SystemConfig)
    scenario: ScenarioParams = field(default_factory=ScenarioParams)
    options: SolverOptions = field(default_factory=lambda: SolverOptions(record_trace=False))

    def __post_init__(self):
        if self.variable not in VARIABLES:
            raise ModelError(f"sweep variable must be one of {VARIABLES}, got {self.variable!r}")
        if self.variable == "dims":
            self.values = [tuple(int(v) for v in pair) for pair in self.values]
            if any(len(pair) != 2 for pair in self.values):
                raise ModelError("dims values must be (K, M) pairs")
        else:
            self.values = [float(v) for v in self.values]
        if not self.values:
            raise ModelError("sweep values must be nonempty")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ModelError("sweep values must be strictly increasing")
        if int(self.trials) != self.trials or self.trials < 1:
            raise ModelError("trials must be a positive integer")
        self.schemes = tuple(self.schemes)
        unknown = set(self.schemes) - set(SCHEMES)
        if unknown or not self.schemes:
            raise ModelError(f"schemes must be a nonempty subset of {sorted(SCHEMES)}")

    def config_for(self, value):
        if self.variable == "dims":
            K, M = value
            return self.config.replace(num_subcarriers=K, num_beams=M, num_users=2 * K)
        return self.config.replace(**{_CONFIG_FIELD[self.variable]: value})

    def to_dict(self):
        return {
            "variable": self.variable,
            "values": [list(v) for v in self.values] if self.variable == "dims" else list(self.values),
            "trials": self.trials,
            "schemes": list(self.schemes),
            "seed_base": self.seed_base,
            "system": self.config.to_dict(),
            "scenario": self.scenario.to_dict(),
            "solver": self.options.to_dict(),
        }

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        known = {"variable", "values", "trials", "schemes", "seed_base", "system", "scenario", "solver"}
        unknown = set(data) - known
        if unknown:
            raise ModelError(f"unknown sweep fields: {sorted(unknown)}")
        if "variable" not in data or "values" not in data:
            raise ModelError("sweep spec needs 'variable' and 'values'")
        solver = {"record_trace": False, **data.pop("solver", {})}
        return cls(
            config=SystemConfig.from_dict(data.pop("system", {})),
            scenario=ScenarioParams.from_dict(data.pop("scenario", {})),
            options=SolverOptions.from_dict(solver),
            **data,
        )


@dataclass(frozen=True)
class TrialRecord:
    scheme: str
    sweep_value: object
    trial: int
    seed: int
    sum_rate_mbps: float    # 9 significant digits; nan for a failed trial
    feasible: bool
    iterations: int
    error: str = ""


@dataclass(frozen=True)
class SummaryRow:
    scheme: str
    sweep_value: object
    mean_mbps: float        # over feasible trials; nan if none
    stderr_mbps: float      # nan with fewer than two feasible trials
    trials: int
    feasible: int
    failed: int

    @property
    def feasibility_rate(self):
        return self.feasible / self.trials


@dataclass
class SweepResult:
    spec: SweepSpec
    records: list
    summary: list

    def rows(self, scheme):
        return [row for row in self.summary if row.scheme == scheme]

    def means(self, scheme):
        return np.array([row.mean_mbps for row in self.rows(scheme)])

    def to_dict(self):
        var = self.spec.variable
        return {
            "kind": "sweep",
            "spec": self.spec.to_dict(),
            "records": [
                {"scheme": r.scheme, "sweep_var": var, "sweep_value": _json_value(r.sweep_value),
                 "trial": r.trial, "seed": r.seed, "sum_rate_mbps": _json_float(r.sum_rate_mbps),
                 "feasible": r.feasible, "iterations": r.iterations, "error": r.error}
                for r in self.records],
            "summary": [
                {"scheme": s.scheme, "sweep_value": _json_value(s.sweep_value),
                 "mean_mbps": _json_float(significant(s.mean_mbps)),
                 "stderr_mbps": _json_float(significant(s.stderr_mbps)),
                 "trials": s.trials, "feasible": s.feasible, "failed": s.failed}
                for s in self.summary],
        }

    @classmethod
    def from_dict(cls, data):
        spec = SweepSpec.from_dict(data["spec"])
        records = []
        for r in data["records"]:
            value = tuple(r["sweep_value"]) if spec.variable == "dims" else float(r["sweep_value"])
            rate = r["sum_rate_mbps"]
            records.append(TrialRecord(r["scheme"], value, int(r["trial"]), int(r["seed"]),
                                       math.nan if rate is None else float(rate),
                                       bool(r["feasible"]), int(r["iterations"]), r.get("error", "")))
        return cls(spec, records, summarize(spec, records))


def _json_value(value):
    return list(value) if isinstance(value, tuple) else value


def _json_float(value):
    return None if not math.isfinite(value) else value


def summarize(spec, records):
    """Per (scheme, value) statistics over feasible trials, in spec order."""
    groups = {}
    for r in records:
        groups.setdefault((r.scheme, r.sweep_value), []).append(r)
    summary = []
    for scheme in spec.schemes:
        for value in spec.values:
            group = sorted(groups.get((scheme, value), []), key=lambda r: r.trial)
            rates = np.array([r.sum_rate_mbps for r in group if r.feasible], dtype=float)
            n = rates.size
            # np.sum uses pairwise summation; the fixed trial order makes it reproducible
            mean = float(np.sum(rates) / n) if n else math.nan
            stderr = float(np.sqrt(np.sum((rates - mean) ** 2) / (n - 1) / n)) if n > 1 else math.nan
            summary.append(SummaryRow(scheme, value, mean, stderr, len(group), n,
                                      sum(1 for r in group if r.error)))
    return summary


def run_trial(spec, value, trial):
    """All schemes of one trial on one shared channel draw."""
    seed = spec.seed_base + trial
    config = spec.config_for(value)
    channels = generate_scenario(config, seed, spec.scenario)
    fingerprint = channels.fingerprint()
    out = []
    for scheme in spec.schemes:
        try:
            if scheme == "rand_x":
                report = SCHEMES[scheme](config, channels, spec.options, seed=seed)
            else:
                report = SCHEMES[scheme](config, channels, spec.options)
        except TRIAL_ERRORS as exc:
            log.warning("trial %d (%s=%s, %s) failed: %s", trial, spec.variable, value, scheme, exc)
            out.append(TrialRecord(scheme, value, trial, seed, math.nan, False, 0,
                                   f"{type(exc).__name__}: {exc}"))
            continue
        if channels.fingerprint() != fingerprint:
            raise RuntimeError("channel set changed during a trial")
        out.append(TrialRecord(scheme, value, trial, seed, significant(report.sum_rate / 1e6),
                               report.feasible, report.iterations))
    return out


def run_sweep(spec, threads=1):
    """Run every (value, trial) pair; output is independent of ``threads``."""
    if threads < 1:
        raise ModelError("threads must be at least 1")
    jobs = [(value, trial) for value in spec.values for trial in range(spec.trials)]
    if threads == 1:
        results = [run_trial(spec, value, trial) for value, trial in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda job: run_trial(spec, *job), jobs))
    records = [r for trial in results for r in trial]
    order = {scheme: i for i, scheme in enumerate(spec.schemes)}
    index = {value: i for i, value in enumerate(spec.values)}
    records.sort(key=lambda r: (order[r.scheme], index[r.sweep_value], r.trial))
    return SweepResult(spec, records, summarize(spec, records))

"""Replication harness: bias, RMSE, se accuracy, and CI coverage.

Replicates are independent given the master seed and may run in
parallel; aggregation always folds results in replicate-index order so
reports are bit-identical regardless of thread count. Nuisances are
refitted inside every replicate, on the original covariates when the
corresponding *_correct flag is true and on the distorted covariates
otherwise, so a misspecification grid changes nothing but the nuisance
inputs.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .dgp import PANEL, DgpConfig, generate_panel, generate_rc, true_att_info
from .errors import InvalidScenario, ScenarioDegenerate, TripleDDError
from .nuisance import NuisanceConfig, fit_outcome, fit_propensity
from .panel import estimate_dr_panel, estimate_ipw_panel, estimate_or_panel
from .rc import estimate_dr_rc, estimate_dr_rc_ncc, estimate_ipw_rc, estimate_or_rc
from .weights import cell4_index

PANEL_ESTIMATORS = ("or", "ipw", "dr")
RC_ESTIMATORS = ("or", "ipw", "dr", "dr_ncc")


@dataclass
class Scenario:
    """One simulation arm: a generator plus nuisance-correctness flags."""

    dgp: DgpConfig
    estimators: tuple = PANEL_ESTIMATORS
    propensity_correct: bool = True
    outcome_correct: bool = True
    reps: int = 200
    n: int | None = None  # overrides dgp.n when set
    master_seed: int = 0
    nuisance: NuisanceConfig = field(default_factory=NuisanceConfig)

    def validate(self) -> "Scenario":
        if self.reps < 2:
            raise InvalidScenario(f"reps must be at least 2, got {self.reps}")
        allowed = PANEL_ESTIMATORS if self.dgp.design == PANEL else RC_ESTIMATORS
        for name in self.estimators:
            if name not in allowed:
                raise InvalidScenario(
                    f"estimator {name!r} not available for design {self.dgp.design!r}"
                )
        if not self.estimators:
            raise InvalidScenario("at least one estimator is required")
        self.nuisance.validate()
        return self

    @property
    def sample_size(self) -> int:
        return self.n if self.n is not None else self.dgp.n

    def dgp_at_n(self) -> DgpConfig:
        if self.sample_size == self.dgp.n:
            return self.dgp
        return replace(self.dgp, n=self.sample_size, _probe=self.dgp._probe)


@dataclass
class EstimatorSummary:
    estimator: str
    reps_used: int
    failures: int
    mean_estimate: float
    bias: float
    sd: float
    rmse: float
    mean_se: float | None
    coverage: float | None
    estimates: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "estimator": self.estimator,
            "reps_used": self.reps_used,
            "failures": self.failures,
            "mean_estimate": self.mean_estimate,
            "bias": self.bias,
            "sd": self.sd,
            "rmse": self.rmse,
            "mean_se": self.mean_se,
            "coverage": self.coverage,
            "estimates": self.estimates,
        }


@dataclass
class McReport:
    true_att: float
    n: int
    reps: int
    propensity_correct: bool
    outcome_correct: bool
    master_seed: int
    rows: dict = field(default_factory=dict)  # estimator -> EstimatorSummary

    def to_dict(self) -> dict:
        return {
            "true_att": self.true_att,
            "n": self.n,
            "reps": self.reps,
            "propensity_correct": self.propensity_correct,
            "outcome_correct": self.outcome_correct,
            "master_seed": self.master_seed,
            "rows": {name: row.to_dict() for name, row in self.rows.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def replicate_seed(master_seed: int, rep: int) -> int:
    """Deterministic per-replicate seed derived from the master seed."""
    return int(np.random.SeedSequence((int(master_seed), int(rep))).generate_state(1)[0])


def _run_replicate(scenario: Scenario, rep: int) -> dict:
    """One dataset, one nuisance fit per arm, all requested estimators."""
    config = scenario.dgp_at_n()
    cfg = scenario.nuisance
    seed = replicate_seed(scenario.master_seed, rep)
    out: dict = {}
    mis_p = not scenario.propensity_correct
    mis_o = not scenario.outcome_correct
    try:
        if config.design == PANEL:
            data, _ = generate_panel(config, seed)
            cells = data.cells
            pm = om = None
            if any(e in scenario.estimators for e in ("ipw", "dr")):
                pm = fit_propensity(data.x, cells, 4, cfg, misspecified=mis_p)
            if any(e in scenario.estimators for e in ("or", "dr")):
                om = fit_outcome(
                    data.x, data.delta, cells, 4, "delta", cfg, misspecified=mis_o
                )
            for name in scenario.estimators:
                try:
                    if name == "or":
                        res = estimate_or_panel(data, om, cfg)
                    elif name == "ipw":
                        res = estimate_ipw_panel(data, pm, cfg)
                    else:
                        res = estimate_dr_panel(data, pm, om, cfg)
                    out[name] = (res.estimate, res.se, res.ci_lower, res.ci_upper)
                except (TripleDDError, np.linalg.LinAlgError):
                    out[name] = None
        else:
            data, _ = generate_rc(config, seed)
            cells = data.cells
            pm8 = pm4 = om8 = None
            if any(e in scenario.estimators for e in ("ipw", "dr")):
                pm8 = fit_propensity(data.x, cells, 8, cfg, misspecified=mis_p)
            if "dr_ncc" in scenario.estimators:
                pm4 = fit_propensity(
                    data.x, cell4_index(data.g, data.d), 4, cfg, misspecified=mis_p
                )
            if any(e in scenario.estimators for e in ("or", "dr", "dr_ncc")):
                om8 = fit_outcome(
                    data.x, data.y, cells, 8, "level", cfg, misspecified=mis_o
                )
            for name in scenario.estimators:
                try:
                    if name == "or":
                        res = estimate_or_rc(data, om8, cfg)
                    elif name == "ipw":
                        res = estimate_ipw_rc(data, pm8, cfg)
                    elif name == "dr":
                        res = estimate_dr_rc(data, pm8, om8, cfg)
                    else:
                        res = estimate_dr_rc_ncc(data, pm4, om8, cfg)
                    out[name] = (res.estimate, res.se, res.ci_lower, res.ci_upper)
                except (TripleDDError, np.linalg.LinAlgError):
                    out[name] = None
    except (TripleDDError, np.linalg.LinAlgError):
        # dataset or shared nuisance failed: the whole replicate is lost
        out = {name: None for name in scenario.estimators}
    return out


def run_scenario(scenario: Scenario, threads: int = 1) -> McReport:
    """Run all replicates and aggregate per-estimator accuracy measures.

    Failed replicates are excluded from the aggregates and counted;
    more than 10% failures for any estimator aborts with
    ScenarioDegenerate.
    """
    scenario.validate()
    true_att, _ = true_att_info(scenario.dgp)
    reps = scenario.reps
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda r: _run_replicate(scenario, r), range(reps)))
    else:
        results = [_run_replicate(scenario, rep) for rep in range(reps)]

    report = McReport(
        true_att=true_att,
        n=scenario.sample_size,
        reps=reps,
        propensity_correct=scenario.propensity_correct,
        outcome_correct=scenario.outcome_correct,
        master_seed=scenario.master_seed,
    )
    for name in scenario.estimators:
        estimates, ses, covered = [], [], []
        failures = 0
        for rep in range(reps):
            row = results[rep][name]
            if row is None:
                failures += 1
                continue
            est, se, lo, hi = row
            estimates.append(est)
            if se is not None:
                ses.append(se)
                covered.append(1.0 if lo <= true_att <= hi else 0.0)
        if failures > 0.1 * reps:
            raise ScenarioDegenerate(
                f"{failures}/{reps} replicates failed for estimator {name!r}"
            )
        arr = np.asarray(estimates)
        bias = float(arr.mean() - true_att)
        sd = float(arr.std(ddof=0))
        rmse = float(np.sqrt(np.mean((arr - true_att) ** 2)))
        report.rows[name] = EstimatorSummary(
            estimator=name,
            reps_used=len(estimates),
            failures=failures,
            mean_estimate=float(arr.mean()),
            bias=bias,
            sd=sd,
            rmse=rmse,
            mean_se=float(np.mean(ses)) if ses else None,
            coverage=float(np.mean(covered)) if covered else None,
            estimates=[float(v) for v in estimates],
        )
    return report


GRID_CELLS = (
    (True, True),
    (True, False),
    (False, True),
    (False, False),
)


def grid_cell_name(propensity_correct: bool, outcome_correct: bool) -> str:
    p = "ok" if propensity_correct else "mis"
    o = "ok" if outcome_correct else "mis"
    return f"prop_{p}_out_{o}"


def robustness_grid(base: Scenario, threads: int = 1) -> dict:
    """Run the four correctness cells with common replicate seeds."""
    base.validate()
    out = {}
    for pc, oc in GRID_CELLS:
        cell = replace(base, propensity_correct=pc, outcome_correct=oc)
        out[grid_cell_name(pc, oc)] = run_scenario(cell, threads=threads)
    return out


def grid_to_csv(grid: dict, path) -> None:
    """Flat CSV: one row per estimator and grid cell."""
    fields = [
        "cell",
        "estimator",
        "reps_used",
        "failures",
        "true_att",
        "bias",
        "sd",
        "rmse",
        "mean_se",
        "coverage",
    ]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for cell_name, report in grid.items():
            for name, row in report.rows.items():
                writer.writerow(
                    [
                        cell_name,
                        name,
                        row.reps_used,
                        row.failures,
                        report.true_att,
                        row.bias,
                        row.sd,
                        row.rmse,
                        "" if row.mean_se is None else row.mean_se,
                        "" if row.coverage is None else row.coverage,
                    ]
                )


# --- scenario files -----------------------------------------------------------

_SCENARIO_KEYS = {"estimators", "reps", "n", "master_seed", "propensity_correct", "outcome_correct"}


def scenario_from_mapping(kv: dict) -> Scenario:
    """Scenario plus embedded generator settings from one flat mapping."""
    from .dgp import dgp_config_from_mapping

    dgp_kv = {k: v for k, v in kv.items() if k not in _SCENARIO_KEYS}
    dgp = dgp_config_from_mapping(dgp_kv)
    kwargs: dict = {"dgp": dgp}
    if "estimators" in kv:
        kwargs["estimators"] = tuple(
            name.strip() for name in kv["estimators"].split(",") if name.strip()
        )
    else:
        kwargs["estimators"] = PANEL_ESTIMATORS if dgp.design == PANEL else RC_ESTIMATORS
    if "reps" in kv:
        try:
            kwargs["reps"] = int(kv["reps"])
        except ValueError:
            raise InvalidScenario(f"bad reps value {kv['reps']!r}") from None
    if "n" in kv:
        kwargs["n"] = int(kv["n"])
    if "master_seed" in kv:
        kwargs["master_seed"] = int(kv["master_seed"])
    from .dgp import _parse_bool

    for key in ("propensity_correct", "outcome_correct"):
        if key in kv:
            kwargs[key] = _parse_bool(kv[key])
    return Scenario(**kwargs)


def load_scenario(path) -> Scenario:
    from .dgp import parse_kv_file

    return scenario_from_mapping(parse_kv_file(path))

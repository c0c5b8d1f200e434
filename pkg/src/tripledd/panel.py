"""Outcome-regression, weighting, and doubly robust ATT estimators for panels.

All estimators are pure functions of (data, fitted nuisances, config).
The doubly robust estimator solves its influence-function estimating
equation exactly, so the sample mean of the estimated influence
function at the returned point estimate is zero by construction.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Callable

import numpy as np

from .data import PanelDataset
from .errors import (
    BootstrapDegenerate,
    InvalidB,
    NoTreatedUnits,
    PositivityViolation,
    TripleDDError,
    ValidationError,
)
from .nuisance import (
    HARD_FLOOR,
    NuisanceConfig,
    OutcomeModel,
    PropensityModel,
    clip_probabilities,
    crossfit_assign,
)
from .results import EstimateResult, normal_ci


def _config_for(config, *models) -> NuisanceConfig:
    if config is not None:
        return config.validate()
    for m in models:
        if m is not None:
            return m.config.validate()
    return NuisanceConfig()


def _crossfit_propensity(x, cells, model, config):
    fold_id = crossfit_assign(x.shape[0], config.folds, config.seed)
    probs = np.empty((x.shape[0], model.arity))
    for f in range(config.folds):
        held = fold_id == f
        refit = model.refit(x[~held], cells[~held])
        probs[held] = refit.predict(x[held])
    return probs


def _crossfit_outcome(x, response, cells, model, config):
    fold_id = crossfit_assign(x.shape[0], config.folds, config.seed)
    mu = np.empty((x.shape[0], model.arity))
    for f in range(config.folds):
        held = fold_id == f
        refit = model.refit(x[~held], response[~held], cells[~held])
        mu[held] = refit.predict(x[held])
    return mu


def propensity_values(
    x: np.ndarray,
    cells: np.ndarray,
    model: PropensityModel,
    config: NuisanceConfig,
) -> tuple[np.ndarray, dict]:
    """Per-unit cell probabilities plus positivity diagnostics.

    Probabilities below the hard 1e-12 floor raise PositivityViolation
    unless config.clip is set; values between the floor and
    config.trim_floor are counted in the diagnostics but left alone.
    """
    if config.folds > 1:
        probs = _crossfit_propensity(x, cells, model, config)
    else:
        probs = model.predict(x)
    min_prob = float(probs.min())
    below_trim = int((probs < config.trim_floor).sum())
    diag = {
        "min_propensity": min_prob,
        "n_below_trim_floor": below_trim,
        "clipped": bool(config.clip),
        "propensity_fit": dict(model.fit_info),
    }
    if config.clip:
        probs = clip_probabilities(probs, config.trim_floor)
    elif min_prob < HARD_FLOOR:
        raise PositivityViolation(min_prob, int((probs < HARD_FLOOR).sum()))
    return probs, diag


def outcome_values(
    x: np.ndarray,
    response: np.ndarray,
    cells: np.ndarray,
    model: OutcomeModel,
    config: NuisanceConfig,
) -> tuple[np.ndarray, dict]:
    """Per-unit per-cell conditional means (cross-fitted when folds > 1)."""
    if config.folds > 1:
        mu = _crossfit_outcome(x, response, cells, model, config)
    else:
        mu = model.predict(x)
    return mu, {"outcome_fit": dict(model.fit_info)}


def _hajek_scale(ratio: np.ndarray, cells: np.ndarray, treated_share: float, arity: int):
    """Rescale inverse-probability ratios so each cell arm's weights
    average exactly the treated share."""
    out = ratio.copy()
    for c in range(arity):
        mask = cells == c
        arm_mean = ratio[mask].sum() / ratio.shape[0]
        if arm_mean > 0:
            out[mask] *= treated_share / arm_mean
    return out


def estimate_or_panel(
    data: PanelDataset,
    outcome: OutcomeModel,
    config: NuisanceConfig | None = None,
) -> EstimateResult:
    """Outcome-regression ATT: treated mean change minus the
    three-term counterfactual contrast, averaged over treated units.

    No analytic se; use bootstrap_se for uncertainty.
    """
    config = _config_for(config, outcome)
    if outcome.response_kind != "delta" or outcome.arity != 4:
        raise ValidationError("panel OR needs a 4-cell delta outcome model")
    treated = (data.g == 1) & (data.d == 1)
    if not treated.any():
        raise NoTreatedUnits("no unit with g=1 and d=1")
    mu, diag = outcome_values(data.x, data.delta, data.cells, outcome, config)
    counterfactual = mu[:, 1] + mu[:, 2] - mu[:, 0]
    tau = float(data.delta[treated].mean() - counterfactual[treated].mean())
    diag["estimator"] = "or_panel"
    return EstimateResult(
        estimator="or_panel",
        estimate=tau,
        n=data.n,
        n_treated=int(treated.sum()),
        diagnostics=diag,
    )


def estimate_ipw_panel(
    data: PanelDataset,
    propensity: PropensityModel,
    config: NuisanceConfig | None = None,
) -> EstimateResult:
    """Weighting ATT: mean of p11(X) * rho0 * (y1 - y0), normalized by
    the treated share."""
    config = _config_for(config, propensity)
    if propensity.arity != 4:
        raise ValidationError("panel IPW needs a 4-cell propensity model")
    gd = (data.g * data.d).astype(float)
    if gd.sum() == 0:
        raise NoTreatedUnits("no unit with g=1 and d=1")
    probs, diag = propensity_values(data.x, data.cells, propensity, config)
    cells = data.cells
    own = probs[np.arange(data.n), cells]
    sign = np.where((data.g + data.d) % 2 == 0, 1.0, -1.0)
    ratio = probs[:, 3] / own
    if config.hajek:
        ratio = _hajek_scale(ratio, cells, float(gd.mean()), 4)
    tau = float((sign * ratio * data.delta).mean() / gd.mean())
    diag["estimator"] = "ipw_panel"
    return EstimateResult(
        estimator="ipw_panel",
        estimate=tau,
        n=data.n,
        n_treated=int(gd.sum()),
        diagnostics=diag,
    )


def _finalize_dr(name, sigma, treated, n, diag):
    """Solve the estimating equation and attach the IF-based se."""
    treated_share = treated.mean()
    tau = float(sigma.mean() / treated_share)
    psi = (sigma - treated * tau) / treated_share
    var = float(np.mean(psi**2) - np.mean(psi) ** 2)
    if var < 0.0:  # impossible analytically, reachable in floating point
        diag["variance_clamped"] = True
        var = 0.0
    se = float(np.sqrt(var / n))
    lo, hi = normal_ci(tau, se)
    diag["estimator"] = name
    return (
        EstimateResult(
            estimator=name,
            estimate=tau,
            se=se,
            ci_lower=lo,
            ci_upper=hi,
            n=n,
            n_treated=int(treated.sum()),
            diagnostics=diag,
        ),
        psi,
    )


def dr_panel_components(
    data: PanelDataset,
    propensity: PropensityModel,
    outcome: OutcomeModel,
    config: NuisanceConfig | None = None,
):
    """Doubly robust point estimate plus the per-unit influence values."""
    config = _config_for(config, propensity, outcome)
    if propensity.arity != 4 or outcome.arity != 4:
        raise ValidationError("panel DR needs 4-cell nuisance models")
    if outcome.response_kind != "delta":
        raise ValidationError("panel DR needs a delta outcome model")
    gd = (data.g * data.d).astype(float)
    if gd.sum() == 0:
        raise NoTreatedUnits("no unit with g=1 and d=1")
    cells = data.cells
    probs, diag = propensity_values(data.x, cells, propensity, config)
    mu, odiag = outcome_values(data.x, data.delta, cells, outcome, config)
    diag.update(odiag)

    own_prob = probs[np.arange(data.n), cells]
    ratio = probs[:, 3] / own_prob
    if config.hajek:
        ratio = _hajek_scale(ratio, cells, float(gd.mean()), 4)
    sign = np.where((data.g + data.d) % 2 == 0, 1.0, -1.0)
    contrast = mu[:, 3] - mu[:, 1] - mu[:, 2] + mu[:, 0]
    own_resid = data.delta - mu[np.arange(data.n), cells]
    sigma = gd * contrast + sign * ratio * own_resid
    return _finalize_dr("dr_panel", sigma, gd, data.n, diag)


def estimate_dr_panel(
    data: PanelDataset,
    propensity: PropensityModel,
    outcome: OutcomeModel,
    config: NuisanceConfig | None = None,
) -> EstimateResult:
    """Doubly robust ATT with influence-function se and 95% CI.

    With config.folds > 1 both nuisances are refitted per fold on
    out-of-fold data and the influence function is pooled across folds.
    """
    result, _ = dr_panel_components(data, propensity, outcome, config)
    return result


def bootstrap_se(
    estimator: Callable[[object], EstimateResult],
    data,
    B: int,
    seed: int,
) -> EstimateResult:
    """Nonparametric unit bootstrap around any estimator pipeline.

    The estimator callable must refit its own nuisances (see
    make_panel_pipeline / make_rc_pipeline). Resamples on which the
    pipeline fails (e.g. an empty cell) are redrawn, up to 10*B total
    attempts; se is the sample standard deviation of the replicate
    estimates and the CI is the 2.5/97.5 percentile interval.
    """
    if B < 2:
        raise InvalidB(f"bootstrap needs B >= 2, got {B}")
    base = estimator(data)
    n = data.n
    estimates = np.empty(B)
    attempts = 0
    done = 0
    counter = 0
    while done < B:
        if attempts >= 10 * B:
            raise BootstrapDegenerate(
                f"exhausted {attempts} resampling attempts for {B} replicates"
            )
        rng = np.random.default_rng(np.random.SeedSequence((int(seed), counter)))
        counter += 1
        attempts += 1
        idx = rng.integers(0, n, size=n)
        try:
            estimates[done] = estimator(data.take(idx)).estimate
        except (TripleDDError, ValueError):
            continue
        done += 1
    se = float(np.std(estimates, ddof=1))
    lo, hi = (float(q) for q in np.quantile(estimates, [0.025, 0.975]))
    diagnostics = dict(base.diagnostics)
    diagnostics["bootstrap"] = {"B": B, "attempts": attempts, "seed": seed}
    return replace(
        base,
        se=se,
        ci_lower=min(lo, base.estimate),
        ci_upper=max(hi, base.estimate),
        diagnostics=diagnostics,
    )


def make_panel_pipeline(
    estimator: str, config: NuisanceConfig | None = None
) -> Callable[[PanelDataset], EstimateResult]:
    """Bundle nuisance fitting with an estimator, for bootstrap and CLI."""
    from .nuisance import fit_outcome, fit_propensity

    config = (config or NuisanceConfig()).validate()
    if estimator not in ("or", "ipw", "dr"):
        raise ValidationError(f"unknown panel estimator {estimator!r}")

    def run(data: PanelDataset) -> EstimateResult:
        cells = data.cells
        if estimator == "or":
            om = fit_outcome(data.x, data.delta, cells, 4, "delta", config)
            return estimate_or_panel(data, om, config)
        if estimator == "ipw":
            pm = fit_propensity(data.x, cells, 4, config)
            return estimate_ipw_panel(data, pm, config)
        pm = fit_propensity(data.x, cells, 4, config)
        om = fit_outcome(data.x, data.delta, cells, 4, "delta", config)
        return estimate_dr_panel(data, pm, om, config)

    return run

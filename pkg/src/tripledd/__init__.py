"""Doubly robust ATT estimation for triple-difference designs."""

from .data import (
    CellCounts,
    PanelDataset,
    RcDataset,
    cell_counts_panel,
    cell_counts_rc,
    load_panel_csv,
    load_rc_csv,
    write_panel_csv,
    write_rc_csv,
)
from .dgp import DgpConfig, generate_panel, generate_rc, true_nuisances
from .montecarlo import McReport, Scenario, robustness_grid, run_scenario
from .nuisance import (
    NuisanceConfig,
    OutcomeModel,
    PropensityModel,
    crossfit_assign,
    fit_outcome,
    fit_propensity,
    misspecify,
    predict_propensity,
)
from .panel import (
    bootstrap_se,
    estimate_dr_panel,
    estimate_ipw_panel,
    estimate_or_panel,
    make_panel_pipeline,
)
from .rc import (
    compositional_change_diagnostic,
    estimate_dr_rc,
    estimate_dr_rc_ncc,
    estimate_ipw_rc,
    estimate_or_rc,
    make_rc_pipeline,
)
from .results import EstimateResult
from .weights import alpha_gdt, omega_gdt, phi0, rho0, w_gd

__version__ = "0.1.0"

__all__ = [
    "CellCounts",
    "DgpConfig",
    "EstimateResult",
    "McReport",
    "NuisanceConfig",
    "OutcomeModel",
    "PanelDataset",
    "PropensityModel",
    "RcDataset",
    "Scenario",
    "alpha_gdt",
    "bootstrap_se",
    "cell_counts_panel",
    "cell_counts_rc",
    "compositional_change_diagnostic",
    "crossfit_assign",
    "estimate_dr_panel",
    "estimate_dr_rc",
    "estimate_dr_rc_ncc",
    "estimate_ipw_panel",
    "estimate_ipw_rc",
    "estimate_or_panel",
    "estimate_or_rc",
    "fit_outcome",
    "fit_propensity",
    "generate_panel",
    "generate_rc",
    "load_panel_csv",
    "load_rc_csv",
    "make_panel_pipeline",
    "make_rc_pipeline",
    "misspecify",
    "omega_gdt",
    "phi0",
    "predict_propensity",
    "rho0",
    "robustness_grid",
    "run_scenario",
    "true_nuisances",
    "w_gd",
    "write_panel_csv",
    "write_rc_csv",
]

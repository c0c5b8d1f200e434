"""Synthetic generators with analytically known treatment effects.

The generating process keeps every identification assumption satisfied
by construction when the violation knobs are zero: group/domain trends
are additive in (G, D) so the parallel difference-in-trends identity
holds coefficient-for-coefficient, selection is multinomial logit so
positivity can be audited, and the default constant effect makes the
true ATT exact rather than simulated.

Violation knobs (violate_pdt, anticipation, compositional_shift) bend
one assumption at a time while leaving the estimand fixed, so estimator
bias under each violation is interpretable.

Coefficient vectors are laid out intercept-first: a vector c of length
k+1 means c[0] + c[1] x_1 + ... + c[k] x_k. Default coefficients were
tuned once so that (a) every (g, d) cell probability stays inside
(0.05, 0.6) over the covariate distribution and (b) nuisances fitted on
the distorted covariates produce clearly separated estimator biases;
they are frozen here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import PanelDataset, RcDataset
from .errors import InvalidConfig
from .nuisance import (
    NuisanceConfig,
    OutcomeModel,
    PropensityModel,
    make_exact_outcome,
    make_exact_propensity,
)
from .weights import PANEL_CELLS, RC_CELLS

PANEL = "panel"
RC = "rc"

DEFAULT_K = 4

# Frozen defaults (rows: cells (0,1), (1,0), (1,1); reference (0,0) is
# zero; vectors are intercept-first). Selection loads on x2/x4, whose
# distorted images lose the most signal, and in the rc design also on
# the coupling covariates x1/x3; trends load on the same columns. This
# keeps every cell probability inside (0.05, 0.6) while making the
# distorted-covariate nuisance fits miss by a fixed, material amount.
DEFAULT_LOGIT_PANEL = (
    (0.10, 0.00, -0.09, 0.00, -0.09),
    (0.10, 0.00, -0.09, 0.00, -0.09),
    (-0.05, 0.00, 0.18, 0.00, 0.18),
)
DEFAULT_LOGIT_RC = (
    (0.05, 0.12, -0.08, -0.12, -0.08),
    (0.05, -0.12, -0.08, 0.12, -0.08),
    (0.15, 0.00, 0.16, 0.00, 0.16),
)
DEFAULT_BASE_COEFS = (0.0, 0.3, -0.4, 0.0, -0.4)
DEFAULT_TREND_G_PANEL = (0.3, 0.0, 2.4, 0.0, 0.3)
DEFAULT_TREND_D_PANEL = (0.2, 0.0, 0.3, 0.0, 2.4)
DEFAULT_TREND_G_RC = (0.0, 0.0, 2.2, 0.0, 0.3)
DEFAULT_TREND_D_RC = (0.0, 0.0, 0.3, 0.0, 2.2)

# Post-period covariate shift used by the compositional-changes arm of
# the simulation studies (the config default is no shift).
DEMO_COMPOSITIONAL_SHIFT = (0.0, -0.4, 0.0, 0.0)

HET_SLOPE = 0.5  # heterogeneous effect: tau(X) = tau0 + 0.5 x_1
TRUE_ATT_DRAWS = 1_000_000
PROBE_DRAWS = 100_000


def _vec(values, length, name) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.shape != (length,):
        raise InvalidConfig(f"{name} must have {length} entries, got shape {v.shape}")
    return v


@dataclass
class DgpConfig:
    """Generator settings; see module docstring for coefficient layout."""

    n: int = 20_000
    k: int = DEFAULT_K
    design: str = PANEL
    tau0: float = 1.0
    cell_logit_coefs: tuple | None = None  # rows (0,1), (1,0), (1,1); k+1 each
    trend_g: tuple | None = None
    trend_d: tuple | None = None
    base_coefs: tuple | None = None
    noise_sd: float = 1.0
    p_t1: float = 0.5
    compositional_shift: tuple | None = None  # length k; zero = NCC holds
    violate_pdt: float = 0.0
    anticipation: float = 0.0
    heterogeneous: bool = False
    seed: int = 0
    _probe: dict | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.design not in (PANEL, RC):
            raise InvalidConfig(f"design must be 'panel' or 'rc', got {self.design!r}")
        if self.n < 8:
            raise InvalidConfig(f"n must be at least 8, got {self.n}")
        if self.k < 1:
            raise InvalidConfig("k must be positive")
        if self.noise_sd <= 0:
            raise InvalidConfig("noise_sd must be positive")
        if not 0.0 < self.p_t1 < 1.0:
            raise InvalidConfig("p_t1 must lie in (0, 1)")
        if self.k != DEFAULT_K and (
            self.cell_logit_coefs is None
            or self.trend_g is None
            or self.trend_d is None
            or self.base_coefs is None
        ):
            raise InvalidConfig(
                "default coefficients exist only for k=4; supply all "
                "coefficient vectors for other k"
            )

    # coefficient accessors with frozen defaults -----------------------------

    @property
    def logit_coefs(self) -> np.ndarray:
        default = DEFAULT_LOGIT_PANEL if self.design == PANEL else DEFAULT_LOGIT_RC
        raw = self.cell_logit_coefs or default
        rows = [_vec(r, self.k + 1, "cell_logit_coefs row") for r in raw]
        if len(rows) != 3:
            raise InvalidConfig("cell_logit_coefs needs rows for (0,1), (1,0), (1,1)")
        return np.vstack(rows)

    @property
    def trend_g_vec(self) -> np.ndarray:
        default = DEFAULT_TREND_G_PANEL if self.design == PANEL else DEFAULT_TREND_G_RC
        return _vec(self.trend_g or default, self.k + 1, "trend_g")

    @property
    def trend_d_vec(self) -> np.ndarray:
        default = DEFAULT_TREND_D_PANEL if self.design == PANEL else DEFAULT_TREND_D_RC
        return _vec(self.trend_d or default, self.k + 1, "trend_d")

    @property
    def base_vec(self) -> np.ndarray:
        return _vec(self.base_coefs or DEFAULT_BASE_COEFS, self.k + 1, "base_coefs")

    @property
    def shift_vec(self) -> np.ndarray:
        if self.compositional_shift is None:
            return np.zeros(self.k)
        return _vec(self.compositional_shift, self.k, "compositional_shift")

    def validate(self) -> "DgpConfig":
        """Field checks plus a positivity probe of the cell probabilities."""
        _ = self.logit_coefs, self.trend_g_vec, self.trend_d_vec, self.base_vec
        _ = self.shift_vec
        probe = self.probe()
        if probe["min"] < 0.01:
            raise InvalidConfig(
                f"cell probabilities reach {probe['min']:.4f}; selection "
                "coefficients violate strict positivity"
            )
        return self

    def probe(self, draws: int = PROBE_DRAWS, seed: int = 1_234_567) -> dict:
        """Range of the four (g, d) cell probabilities over the covariate law."""
        if self._probe is None:
            rng = np.random.default_rng(np.random.SeedSequence((seed, draws)))
            x = rng.standard_normal((draws, self.k))
            if self.design == RC and np.any(self.shift_vec != 0.0):
                t = rng.random(draws) < self.p_t1
                x = x + self.shift_vec * t[:, None]
            p = _cell_probs_gd(x, self.logit_coefs)
            self._probe = {
                "per_cell": {
                    f"g{g}_d{d}": [float(p[:, 2 * g + d].min()), float(p[:, 2 * g + d].max())]
                    for g, d in PANEL_CELLS
                },
                "min": float(p.min()),
                "max": float(p.max()),
            }
        return self._probe


def _cell_probs_gd(x: np.ndarray, logit_coefs: np.ndarray) -> np.ndarray:
    z = np.column_stack([np.ones(x.shape[0]), x])
    eta = np.column_stack([np.zeros(x.shape[0]), z @ logit_coefs.T])
    eta -= eta.max(axis=1, keepdims=True)
    e = np.exp(eta)
    return e / e.sum(axis=1, keepdims=True)


def _draw_cells(p: np.ndarray, rng) -> np.ndarray:
    u = rng.random(p.shape[0])
    return (u[:, None] >= np.cumsum(p, axis=1)).sum(axis=1)


def _affine(coefs: np.ndarray, x: np.ndarray) -> np.ndarray:
    return coefs[0] + x @ coefs[1:]


def _rng_for(config: DgpConfig, seed: int | None):
    seed = config.seed if seed is None else seed
    return np.random.default_rng(np.random.SeedSequence((int(seed), 0xDD)))


def _tau_of(config: DgpConfig, x: np.ndarray) -> np.ndarray:
    if config.heterogeneous:
        return config.tau0 + HET_SLOPE * x[:, 0]
    return np.full(x.shape[0], config.tau0)


def generate_panel(config: DgpConfig, seed: int | None = None) -> tuple[PanelDataset, float]:
    """Draw a panel dataset; returns (data, true ATT).

    Potential-outcome construction: the untreated baseline is linear in
    X, the untreated change adds the group trend for G=1, the domain
    trend for D=1, and violate_pdt * G*D*x_1 (zero keeps the parallel
    difference-in-trends identity exact); the treated pre-period
    outcome shifts by ``anticipation``. Observed outcomes follow the
    consistency selections exactly.
    """
    config.validate()
    rng = _rng_for(config, seed)
    x = rng.standard_normal((config.n, config.k))
    probs = _cell_probs_gd(x, config.logit_coefs)
    cell = _draw_cells(probs, rng)
    g = (cell >= 2).astype(np.int64)
    d = (cell % 2).astype(np.int64)
    eps0 = rng.standard_normal(config.n) * config.noise_sd
    eps1 = rng.standard_normal(config.n) * config.noise_sd

    y0_pot0 = _affine(config.base_vec, x) + eps0
    trend = (
        g * _affine(config.trend_g_vec, x)
        + d * _affine(config.trend_d_vec, x)
        + config.violate_pdt * (g * d) * x[:, 0]
    )
    y1_pot0 = y0_pot0 + trend + eps1
    y1_pot1 = y1_pot0 + _tau_of(config, x)
    y0_pot1 = y0_pot0 + config.anticipation

    gd = g * d
    y0 = np.where(gd == 1, y0_pot1, y0_pot0)
    y1 = np.where(gd == 1, y1_pot1, y1_pot0)
    data = PanelDataset(x=x, g=g, d=d, y0=y0, y1=y1)
    return data, true_att_info(config)[0]


def generate_rc(config: DgpConfig, seed: int | None = None) -> tuple[RcDataset, float]:
    """Draw a repeated-cross-sections dataset; returns (data, true ATT).

    The sampling period is Bernoulli(p_t1); covariates are standard
    normal shifted by compositional_shift in the post period (zero
    shift keeps composition time-invariant); (G, D) follows the same
    selection model given X in both periods. The untreated outcome
    mirrors the panel change structure with the period index in the
    role of time.
    """
    config.validate()
    rng = _rng_for(config, seed)
    t = (rng.random(config.n) < config.p_t1).astype(np.int64)
    x = rng.standard_normal((config.n, config.k)) + config.shift_vec * t[:, None]
    probs = _cell_probs_gd(x, config.logit_coefs)
    cell = _draw_cells(probs, rng)
    g = (cell >= 2).astype(np.int64)
    d = (cell % 2).astype(np.int64)
    eps = rng.standard_normal(config.n) * config.noise_sd

    trend = (
        g * _affine(config.trend_g_vec, x)
        + d * _affine(config.trend_d_vec, x)
        + config.violate_pdt * (g * d) * x[:, 0]
    )
    y_pot0 = (
        _affine(config.base_vec, x)
        + t * trend
        + config.anticipation * (g * d) * (1 - t)
        + eps
    )
    y_pot1 = y_pot0 + _tau_of(config, x)
    gdt = g * d * t
    y = np.where(gdt == 1, y_pot1, y_pot0)
    data = RcDataset(x=x, g=g, d=d, t=t, y=y)
    return data, true_att_info(config)[0]


def true_att_info(config: DgpConfig) -> tuple[float, float]:
    """True ATT and its Monte Carlo standard error.

    Exact (se 0) under the constant-effect default; under the
    heterogeneous option the treated-population mean of tau(X) is
    integrated with 10^6 draws.
    """
    if not config.heterogeneous:
        return float(config.tau0), 0.0
    rng = np.random.default_rng(np.random.SeedSequence((int(config.seed), 0xA77)))
    x = rng.standard_normal((TRUE_ATT_DRAWS, config.k))
    if config.design == RC:
        x = x + config.shift_vec  # treated units live in the post period
    w = _cell_probs_gd(x, config.logit_coefs)[:, 3]
    tau = config.tau0 + HET_SLOPE * x[:, 0]
    w_mean = w.mean()
    est = float((w * tau).mean() / w_mean)
    resid = w * (tau - est) / w_mean
    mc_se = float(resid.std(ddof=1) / np.sqrt(TRUE_ATT_DRAWS))
    return est, mc_se


def cet_audit(config: DgpConfig) -> dict:
    """Both sides of the parallel difference-in-trends identity as
    coefficient vectors on [1, x]; they coincide iff violate_pdt = 0."""
    lhs = config.trend_g_vec.copy()
    lhs[1] += config.violate_pdt
    rhs = config.trend_g_vec.copy()
    return {
        "target_domain_gap": lhs.tolist(),
        "reference_domain_gap": rhs.tolist(),
        "identical": bool(np.array_equal(lhs, rhs)),
    }


def oracle_propensity_gd(config: DgpConfig) -> PropensityModel:
    """Exact 4-cell selection model p(G, D | X) used by the generator."""
    return make_exact_propensity(config.logit_coefs, 4)


def _unit_vec(k: int, idx: int) -> np.ndarray:
    e = np.zeros(k + 1)
    e[idx] = 1.0
    return e


def true_nuisances(config: DgpConfig) -> tuple[PropensityModel, OutcomeModel]:
    """The exact generating propensity and conditional means, in model form."""
    k = config.k
    e_int = _unit_vec(k, 0)
    e_x1 = _unit_vec(k, 1)
    het = HET_SLOPE * e_x1 if config.heterogeneous else 0.0

    if config.design == PANEL:
        rows = np.zeros((4, k + 1))
        rows[1] = config.trend_d_vec
        rows[2] = config.trend_g_vec
        rows[3] = (
            config.trend_g_vec
            + config.trend_d_vec
            + config.violate_pdt * e_x1
            + (config.tau0 - config.anticipation) * e_int
            + het
        )
        return (
            oracle_propensity_gd(config),
            make_exact_outcome(rows, 4, "delta"),
        )

    # rc: 8-cell propensity factorizes as p(G,D|X) * p(T|X); with a
    # compositional shift, p(T=1|X) is logistic in X by Bayes' rule.
    shift = config.shift_vec
    a = np.concatenate(
        [[np.log(config.p_t1 / (1.0 - config.p_t1)) - 0.5 * shift @ shift], shift]
    )
    coefs4 = np.vstack([np.zeros(k + 1), config.logit_coefs])  # include (0,0)
    rows8 = []
    for g, d, t in RC_CELLS:
        if (g, d, t) == (0, 0, 0):
            continue
        rows8.append(coefs4[2 * g + d] + t * a)
    prop8 = make_exact_propensity(np.vstack(rows8), 8)

    out_rows = np.zeros((8, k + 1))
    for g, d, t in RC_CELLS:
        row = config.base_vec.copy()
        if t == 1:
            row = row + g * config.trend_g_vec + d * config.trend_d_vec
            row = row + config.violate_pdt * (g * d) * e_x1
            row = row + (g * d) * (config.tau0 * e_int + het)
        else:
            row = row + config.anticipation * (g * d) * e_int
        out_rows[4 * g + 2 * d + t] = row
    return prop8, make_exact_outcome(out_rows, 8, "level")


def probe_cell_probabilities(config: DgpConfig, draws: int = PROBE_DRAWS) -> dict:
    """Expose the positivity probe (range of each cell probability)."""
    return config.probe(draws=draws)


# --- flat key-value config files ---------------------------------------------

_SCALAR_FIELDS = {
    "n": int,
    "k": int,
    "design": str,
    "tau0": float,
    "noise_sd": float,
    "p_t1": float,
    "violate_pdt": float,
    "anticipation": float,
    "seed": int,
}
_VECTOR_FIELDS = {
    "trend_g": "trend_g",
    "trend_d": "trend_d",
    "base_coefs": "base_coefs",
    "compositional_shift": "compositional_shift",
}
_LOGIT_KEYS = {"logit_01": 0, "logit_10": 1, "logit_11": 2}


def parse_kv_file(path) -> dict:
    """Parse a flat key = value file; '#' starts a comment."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidConfig(f"line {lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            out[key] = value
    return out


def _parse_bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("true", "1", "yes"):
        return True
    if v in ("false", "0", "no"):
        return False
    raise InvalidConfig(f"expected a boolean, got {value!r}")


def dgp_config_from_mapping(kv: dict) -> DgpConfig:
    """Build a DgpConfig from flat string key-values (file or CLI)."""
    kwargs: dict = {}
    logit_rows: dict = {}
    for key, value in kv.items():
        if key in _SCALAR_FIELDS:
            try:
                kwargs[key] = _SCALAR_FIELDS[key](value)
            except ValueError:
                raise InvalidConfig(f"bad value for {key}: {value!r}") from None
        elif key == "heterogeneous":
            kwargs[key] = _parse_bool(value)
        elif key in _VECTOR_FIELDS:
            try:
                kwargs[_VECTOR_FIELDS[key]] = tuple(
                    float(v) for v in value.split(",")
                )
            except ValueError:
                raise InvalidConfig(f"bad vector for {key}: {value!r}") from None
        elif key in _LOGIT_KEYS:
            try:
                logit_rows[_LOGIT_KEYS[key]] = tuple(float(v) for v in value.split(","))
            except ValueError:
                raise InvalidConfig(f"bad vector for {key}: {value!r}") from None
        else:
            raise InvalidConfig(f"unknown config key {key!r}")
    if logit_rows:
        if set(logit_rows) != {0, 1, 2}:
            raise InvalidConfig("logit_01, logit_10 and logit_11 must be given together")
        kwargs["cell_logit_coefs"] = tuple(logit_rows[i] for i in range(3))
    try:
        return DgpConfig(**kwargs)
    except TypeError as exc:
        raise InvalidConfig(str(exc)) from None


def load_dgp_config(path) -> DgpConfig:
    """Load a DgpConfig from a flat key-value text file."""
    return dgp_config_from_mapping(parse_kv_file(path))


def default_nuisance_config() -> NuisanceConfig:
    return NuisanceConfig()

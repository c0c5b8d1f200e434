"""Nuisance functions: cell propensities and per-cell outcome regressions.

One multinomial model covers all treatment cells (4 for panel, 8 for
repeated cross-sections) so predicted probabilities sum to one exactly,
which the downstream weight identities require. The reference cell is
(0,0) / (0,0,0) and carries zero coefficients. Covariates are
standardized inside fitting only; raw data is never altered.

The saturated family stores exact empirical frequencies / means per
covariate stratum and is defined only for discrete covariates observed
at fit time.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyCell,
    InvalidConfig,
    InvalidFoldCount,
    NoConvergence,
    RankDeficient,
    SeparationDetected,
    UnseenStratum,
)

LOGIT = "logit"
SATURATED = "saturated"
LINEAR = "linear"

HARD_FLOOR = 1e-12


@dataclass
class NuisanceConfig:
    """Fitting and estimation knobs shared across the package."""

    propensity_family: str = LOGIT
    outcome_family: str = LINEAR
    ridge: float = 1e-8
    max_iter: int = 100
    grad_tol: float = 1e-8
    folds: int = 1
    trim_floor: float = 1e-3
    clip: bool = False
    hajek: bool = False
    seed: int = 0

    def validate(self) -> "NuisanceConfig":
        if self.propensity_family not in (LOGIT, SATURATED):
            raise InvalidConfig(f"unknown propensity family {self.propensity_family!r}")
        if self.outcome_family not in (LINEAR, SATURATED):
            raise InvalidConfig(f"unknown outcome family {self.outcome_family!r}")
        if self.ridge < 0:
            raise InvalidConfig("ridge must be >= 0")
        if self.max_iter < 1:
            raise InvalidConfig("max_iter must be >= 1")
        if self.grad_tol <= 0:
            raise InvalidConfig("grad_tol must be > 0")
        if self.folds < 1:
            raise InvalidFoldCount(f"folds must be >= 1, got {self.folds}")
        if not (0.0 <= self.trim_floor < 0.5):
            raise InvalidConfig("trim_floor must lie in [0, 0.5)")
        return self


def misspecify(x: np.ndarray) -> np.ndarray:
    """Deterministic nonlinear distortion of the covariate matrix.

    Column j maps to exp(x_j / 2) for even j and to
    x_j / (1 + exp(x_{j-1})) + 10 for odd j (original columns on the
    right-hand side). A nuisance fitted on the distorted columns is
    misspecified for any generating process linear in the originals.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    out = np.empty_like(x)
    for j in range(x.shape[1]):
        if j % 2 == 0:
            out[:, j] = np.exp(x[:, j] / 2.0)
        else:
            out[:, j] = x[:, j] / (1.0 + np.exp(x[:, j - 1])) + 10.0
    return out


def crossfit_assign(n: int, folds: int, seed: int) -> np.ndarray:
    """Deterministic fold indices; sizes differ by at most one.

    folds=1 returns all zeros (full-sample fitting, the default).
    """
    if not 1 <= folds <= n:
        raise InvalidFoldCount(f"folds must lie in [1, {n}], got {folds}")
    if folds == 1:
        return np.zeros(n, dtype=np.int64)
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), n, folds)))
    out = np.empty(n, dtype=np.int64)
    out[rng.permutation(n)] = np.arange(n) % folds
    return out


# --- shared fitting plumbing -------------------------------------------------


def _standardize(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale = np.where(scale > 0.0, scale, 1.0)
    return (x - mean) / scale, mean, scale


def _design(x: np.ndarray, mean: np.ndarray, scale: np.ndarray) -> np.ndarray:
    z = (x - mean) / scale
    return np.column_stack([np.ones(z.shape[0]), z])


def _check_cells(cells: np.ndarray, arity: int) -> np.ndarray:
    cells = np.asarray(cells, dtype=np.int64)
    counts = np.bincount(cells, minlength=arity)
    for c in range(arity):
        if counts[c] == 0:
            raise EmptyCell(c)
    return cells


def _strata_of(x: np.ndarray) -> list[tuple]:
    return [tuple(row) for row in np.asarray(x, dtype=float)]


def _softmax(eta: np.ndarray) -> np.ndarray:
    shifted = eta - eta.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _penalized_loglik(beta, z, onehot, ridge):
    eta = np.column_stack([np.zeros(z.shape[0]), z @ beta.T])
    shifted = eta - eta.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return float((onehot * logp).sum() - 0.5 * ridge * (beta**2).sum())


def multinomial_gradient(beta, z, onehot, ridge) -> np.ndarray:
    """Gradient of the ridge-penalized log-likelihood, shape like beta.

    beta holds one row per non-reference cell; the reference cell is
    pinned at zero. Exposed for the finite-difference check.
    """
    eta = np.column_stack([np.zeros(z.shape[0]), z @ beta.T])
    p = _softmax(eta)
    resid = onehot[:, 1:] - p[:, 1:]
    return resid.T @ z - ridge * beta


def _multinomial_hessian(beta, z, ridge) -> np.ndarray:
    n_free = beta.shape[0]
    m = z.shape[1]
    eta = np.column_stack([np.zeros(z.shape[0]), z @ beta.T])
    p = _softmax(eta)[:, 1:]
    h = np.empty((n_free * m, n_free * m))
    for a in range(n_free):
        for b in range(a, n_free):
            w = p[:, a] * ((1.0 if a == b else 0.0) - p[:, b])
            block = z.T @ (w[:, None] * z)
            h[a * m : (a + 1) * m, b * m : (b + 1) * m] = block
            if a != b:
                h[b * m : (b + 1) * m, a * m : (a + 1) * m] = block
    h += ridge * np.eye(n_free * m)
    return h


@dataclass
class PropensityModel:
    """Fitted cell-probability model (multinomial logit or saturated)."""

    arity: int
    family: str
    config: NuisanceConfig
    coefs: np.ndarray | None = None  # (arity-1, k+1), reference cell excluded
    x_mean: np.ndarray | None = None
    x_scale: np.ndarray | None = None
    strata: dict | None = None  # stratum tuple -> probability vector
    misspecified: bool = False
    fit_info: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        if self.family == LOGIT:
            return self.coefs.shape[1] - 1
        return len(next(iter(self.strata)))

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Probability matrix (n, arity); rows sum to one."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.k:
            raise DimensionMismatch(
                f"model was fitted with {self.k} covariates, got {x.shape[1]}"
            )
        if self.misspecified:
            x = misspecify(x)
        if self.family == LOGIT:
            z = _design(x, self.x_mean, self.x_scale)
            eta = np.column_stack([np.zeros(x.shape[0]), z @ self.coefs.T])
            return _softmax(eta)
        out = np.empty((x.shape[0], self.arity))
        for i, key in enumerate(_strata_of(x)):
            try:
                out[i] = self.strata[key]
            except KeyError:
                raise UnseenStratum(key) from None
        return out

    def predict_row(self, x_row: np.ndarray) -> np.ndarray:
        return self.predict(np.atleast_2d(x_row))[0]

    def refit(self, x: np.ndarray, cells: np.ndarray) -> "PropensityModel":
        """Refit the same specification on new data (cross-fitting)."""
        return fit_propensity(
            x, cells, self.arity, self.config, misspecified=self.misspecified
        )

    def to_json_dict(self) -> dict:
        doc = {
            "kind": "propensity",
            "arity": self.arity,
            "family": self.family,
            "reference_cell": 0,
            "misspecified": self.misspecified,
        }
        if self.family == LOGIT:
            doc["coefs"] = self.coefs.ravel().tolist()  # row-major
            doc["n_features"] = self.coefs.shape[1]
            doc["x_mean"] = self.x_mean.tolist()
            doc["x_scale"] = self.x_scale.tolist()
        else:
            doc["strata"] = [
                {"x": list(key), "probs": probs.tolist()}
                for key, probs in self.strata.items()
            ]
        return doc

    @classmethod
    def from_json_dict(cls, doc: dict, config: NuisanceConfig | None = None):
        config = config or NuisanceConfig()
        if doc["family"] == LOGIT:
            m = doc["n_features"]
            coefs = np.asarray(doc["coefs"], dtype=float).reshape(-1, m)
            return cls(
                arity=doc["arity"],
                family=LOGIT,
                config=config,
                coefs=coefs,
                x_mean=np.asarray(doc["x_mean"], dtype=float),
                x_scale=np.asarray(doc["x_scale"], dtype=float),
                misspecified=doc.get("misspecified", False),
            )
        strata = {
            tuple(entry["x"]): np.asarray(entry["probs"], dtype=float)
            for entry in doc["strata"]
        }
        return cls(
            arity=doc["arity"],
            family=SATURATED,
            config=config,
            strata=strata,
            misspecified=doc.get("misspecified", False),
        )


def fit_propensity(
    x: np.ndarray,
    cells: np.ndarray,
    arity: int,
    config: NuisanceConfig | None = None,
    misspecified: bool = False,
) -> PropensityModel:
    """Fit cell probabilities given covariates.

    The logit family runs damped Newton iterations on the
    ridge-penalized log-likelihood until the gradient max-norm drops
    below config.grad_tol; the saturated family stores exact empirical
    cell frequencies per covariate stratum.
    """
    config = (config or NuisanceConfig()).validate()
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if misspecified:
        x = misspecify(x)
    cells = _check_cells(cells, arity)
    if x.shape[0] != cells.shape[0]:
        raise DimensionMismatch("x and cells disagree on the number of rows")

    if config.propensity_family == SATURATED:
        strata: dict = {}
        for key, cell in zip(_strata_of(x), cells):
            strata.setdefault(key, np.zeros(arity))[cell] += 1.0
        for key, counts in strata.items():
            for c in range(arity):
                if counts[c] == 0:
                    raise EmptyCell(c, stratum=key)
            strata[key] = counts / counts.sum()
        return PropensityModel(
            arity=arity,
            family=SATURATED,
            config=config,
            strata=strata,
            misspecified=misspecified,
            fit_info={"family": SATURATED, "n_strata": len(strata)},
        )

    zs, mean, scale = _standardize(x)
    z = np.column_stack([np.ones(x.shape[0]), zs])
    onehot = np.zeros((x.shape[0], arity))
    onehot[np.arange(x.shape[0]), cells] = 1.0

    m = z.shape[1]
    beta = np.zeros((arity - 1, m))
    grad = multinomial_gradient(beta, z, onehot, config.ridge)
    grad_norm = float(np.abs(grad).max())
    loglik = _penalized_loglik(beta, z, onehot, config.ridge)
    iterations = 0
    while grad_norm >= config.grad_tol:
        if iterations >= config.max_iter:
            raise NoConvergence(iterations, grad_norm)
        hess = _multinomial_hessian(beta, z, config.ridge)
        step = np.linalg.solve(hess, grad.ravel()).reshape(beta.shape)
        # halve until the penalized objective stops decreasing
        scale_step = 1.0
        for _ in range(30):
            candidate = beta + scale_step * step
            new_loglik = _penalized_loglik(candidate, z, onehot, config.ridge)
            if new_loglik >= loglik - 1e-12 * abs(loglik):
                break
            scale_step *= 0.5
        beta = beta + scale_step * step
        loglik = _penalized_loglik(beta, z, onehot, config.ridge)
        grad = multinomial_gradient(beta, z, onehot, config.ridge)
        grad_norm = float(np.abs(grad).max())
        iterations += 1

    probs = _softmax(np.column_stack([np.zeros(z.shape[0]), z @ beta.T]))
    min_prob = float(probs.min())
    if min_prob < HARD_FLOOR:
        raise SeparationDetected(min_prob)
    return PropensityModel(
        arity=arity,
        family=LOGIT,
        config=config,
        coefs=beta,
        x_mean=mean,
        x_scale=scale,
        misspecified=misspecified,
        fit_info={
            "family": LOGIT,
            "iterations": iterations,
            "grad_norm": grad_norm,
            "min_prob_fit": min_prob,
        },
    )


def predict_propensity(model: PropensityModel, x_row: np.ndarray) -> np.ndarray:
    """Probability vector (length 4 or 8) at a single covariate row."""
    return model.predict_row(x_row)


@dataclass
class OutcomeModel:
    """Per-cell conditional-mean regressions.

    response_kind is "delta" (panel, y1 - y0) or "level" (rc, y).
    """

    arity: int
    family: str
    response_kind: str
    config: NuisanceConfig
    coefs: np.ndarray | None = None  # (arity, k+1), intercept first
    x_mean: np.ndarray | None = None
    x_scale: np.ndarray | None = None
    strata: dict | None = None  # stratum tuple -> per-cell means
    misspecified: bool = False
    fit_info: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        if self.family == LINEAR:
            return self.coefs.shape[1] - 1
        return len(next(iter(self.strata)))

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Matrix (n, arity) of per-cell conditional means."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.k:
            raise DimensionMismatch(
                f"model was fitted with {self.k} covariates, got {x.shape[1]}"
            )
        if self.misspecified:
            x = misspecify(x)
        if self.family == LINEAR:
            z = _design(x, self.x_mean, self.x_scale)
            return z @ self.coefs.T
        out = np.empty((x.shape[0], self.arity))
        for i, key in enumerate(_strata_of(x)):
            try:
                out[i] = self.strata[key]
            except KeyError:
                raise UnseenStratum(key) from None
        return out

    def predict_row(self, x_row: np.ndarray) -> np.ndarray:
        return self.predict(np.atleast_2d(x_row))[0]

    def refit(self, x, response, cells) -> "OutcomeModel":
        return fit_outcome(
            x,
            response,
            cells,
            self.arity,
            self.response_kind,
            self.config,
            misspecified=self.misspecified,
        )

    def to_json_dict(self) -> dict:
        doc = {
            "kind": "outcome",
            "arity": self.arity,
            "family": self.family,
            "response_kind": self.response_kind,
            "misspecified": self.misspecified,
        }
        if self.family == LINEAR:
            doc["coefs"] = self.coefs.ravel().tolist()
            doc["n_features"] = self.coefs.shape[1]
            doc["x_mean"] = self.x_mean.tolist()
            doc["x_scale"] = self.x_scale.tolist()
        else:
            doc["strata"] = [
                {"x": list(key), "means": means.tolist()}
                for key, means in self.strata.items()
            ]
        return doc

    @classmethod
    def from_json_dict(cls, doc: dict, config: NuisanceConfig | None = None):
        config = config or NuisanceConfig()
        if doc["family"] == LINEAR:
            m = doc["n_features"]
            return cls(
                arity=doc["arity"],
                family=LINEAR,
                response_kind=doc["response_kind"],
                config=config,
                coefs=np.asarray(doc["coefs"], dtype=float).reshape(-1, m),
                x_mean=np.asarray(doc["x_mean"], dtype=float),
                x_scale=np.asarray(doc["x_scale"], dtype=float),
                misspecified=doc.get("misspecified", False),
            )
        strata = {
            tuple(entry["x"]): np.asarray(entry["means"], dtype=float)
            for entry in doc["strata"]
        }
        return cls(
            arity=doc["arity"],
            family=SATURATED,
            response_kind=doc["response_kind"],
            config=config,
            strata=strata,
            misspecified=doc.get("misspecified", False),
        )


def fit_outcome(
    x: np.ndarray,
    response: np.ndarray,
    cells: np.ndarray,
    arity: int,
    response_kind: str,
    config: NuisanceConfig | None = None,
    misspecified: bool = False,
) -> OutcomeModel:
    """Fit per-cell conditional means.

    The linear family solves ridge-regularized normal equations per
    cell with an unpenalized intercept, so constant responses are
    recovered exactly. The saturated family stores per-stratum
    per-cell sample means.
    """
    config = (config or NuisanceConfig()).validate()
    x = np.atleast_2d(np.asarray(x, dtype=float))
    response = np.asarray(response, dtype=float)
    if misspecified:
        x = misspecify(x)
    cells = _check_cells(cells, arity)
    if not (x.shape[0] == response.shape[0] == cells.shape[0]):
        raise DimensionMismatch("x, response and cells disagree on rows")

    if config.outcome_family == SATURATED:
        sums: dict = {}
        counts: dict = {}
        for key, cell, r in zip(_strata_of(x), cells, response):
            sums.setdefault(key, np.zeros(arity))[cell] += r
            counts.setdefault(key, np.zeros(arity))[cell] += 1.0
        strata = {}
        for key in sums:
            for c in range(arity):
                if counts[key][c] == 0:
                    raise EmptyCell(c, stratum=key)
            strata[key] = sums[key] / counts[key]
        return OutcomeModel(
            arity=arity,
            family=SATURATED,
            response_kind=response_kind,
            config=config,
            strata=strata,
            misspecified=misspecified,
            fit_info={"family": SATURATED, "n_strata": len(strata)},
        )

    zs, mean, scale = _standardize(x)
    m = x.shape[1] + 1
    coefs = np.empty((arity, m))
    penalty = config.ridge * np.eye(m)
    penalty[0, 0] = 0.0  # intercept unpenalized
    for c in range(arity):
        mask = cells == c
        zc = np.column_stack([np.ones(int(mask.sum())), zs[mask]])
        rc = response[mask]
        gram = zc.T @ zc
        if config.ridge == 0.0 and np.linalg.matrix_rank(gram) < m:
            raise RankDeficient(c)
        coefs[c] = np.linalg.solve(gram + penalty, zc.T @ rc)
    return OutcomeModel(
        arity=arity,
        family=LINEAR,
        response_kind=response_kind,
        config=config,
        coefs=coefs,
        x_mean=mean,
        x_scale=scale,
        misspecified=misspecified,
        fit_info={"family": LINEAR},
    )


def clip_probabilities(probs: np.ndarray, floor: float) -> np.ndarray:
    """Clip each probability to at least ``floor`` and renormalize rows."""
    clipped = np.maximum(probs, floor)
    return clipped / clipped.sum(axis=1, keepdims=True)


def make_exact_propensity(
    coefs: np.ndarray, arity: int, config: NuisanceConfig | None = None
) -> PropensityModel:
    """Wrap known multinomial-logit coefficients (raw covariate scale).

    coefs has one row per non-reference cell, intercept first. Used by
    the synthetic generators to expose oracle nuisances.
    """
    coefs = np.atleast_2d(np.asarray(coefs, dtype=float))
    k = coefs.shape[1] - 1
    return PropensityModel(
        arity=arity,
        family=LOGIT,
        config=config or NuisanceConfig(),
        coefs=coefs,
        x_mean=np.zeros(k),
        x_scale=np.ones(k),
        fit_info={"family": LOGIT, "oracle": True},
    )


def make_exact_outcome(
    coefs: np.ndarray,
    arity: int,
    response_kind: str,
    config: NuisanceConfig | None = None,
) -> OutcomeModel:
    """Wrap known per-cell linear conditional means (raw covariate scale)."""
    coefs = np.atleast_2d(np.asarray(coefs, dtype=float))
    k = coefs.shape[1] - 1
    return OutcomeModel(
        arity=arity,
        family=LINEAR,
        response_kind=response_kind,
        config=config or NuisanceConfig(),
        coefs=coefs,
        x_mean=np.zeros(k),
        x_scale=np.ones(k),
        fit_info={"family": LINEAR, "oracle": True},
    )


def with_config(model, **overrides):
    """Copy a fitted model with updated config fields (e.g. folds)."""
    return replace(model, config=replace(model.config, **overrides))

"""Weighting functions for the triple-difference estimators.

Every function here is pure and takes cell probabilities, not fitted
models, so the algebraic identities (sign laws, vanishing treated-cell
weight, the product-probability factorization) can be tested in
isolation. Positivity of the probabilities is the caller's contract;
nothing is clipped or guarded here.

Cell probabilities are numpy vectors in a fixed canonical order:

* 4 cells (g, d):      index ``2*g + d``      -> (0,0), (0,1), (1,0), (1,1)
* 8 cells (g, d, t):   index ``4*g + 2*d + t``

so the treated cell is always the last entry.
"""

from __future__ import annotations

import numpy as np

PANEL_CELLS: tuple[tuple[int, int], ...] = ((0, 0), (0, 1), (1, 0), (1, 1))
RC_CELLS: tuple[tuple[int, int, int], ...] = tuple(
    (g, d, t) for g in (0, 1) for d in (0, 1) for t in (0, 1)
)

TREATED4 = 3  # index of (1,1)
TREATED8 = 7  # index of (1,1,1)


def cell4_index(g, d):
    """Canonical index of the (g, d) cell; vectorizes over arrays."""
    return 2 * g + d


def cell8_index(g, d, t):
    """Canonical index of the (g, d, t) cell; vectorizes over arrays."""
    return 4 * g + 2 * d + t


def check_cell_probs(p: np.ndarray, arity: int, tol: float = 1e-10) -> np.ndarray:
    """Validate a probability vector: length, strict positivity, unit sum."""
    p = np.asarray(p, dtype=float)
    if p.shape != (arity,):
        raise ValueError(f"expected {arity} cell probabilities, got shape {p.shape}")
    if not np.all(p > 0.0):
        raise ValueError("cell probabilities must be strictly positive")
    if abs(p.sum() - 1.0) > tol:
        raise ValueError(f"cell probabilities sum to {p.sum()!r}, not 1")
    return p


def rho0(p: np.ndarray, G: int, D: int) -> float:
    """Panel inverse-probability weight: (-1)^(G+D) / p[(G,D)].

    Equals sum over (g,d) of (1-g-G)(1-d-D)/p[(g,d)]; the factor
    (1-g-G) is nonzero only when g = G, so a single summand survives.
    """
    return ((-1.0) ** (G + D)) / p[cell4_index(G, D)]


def phi0(p: np.ndarray, G: int, D: int, T: int) -> float:
    """Repeated-cross-sections weight: (-1)^(G+D+T+1) / p[(G,D,T)].

    Closed form of -sum over (g,d,t) of
    (1-g-G)(1-d-D)(1-t-T)/p[(g,d,t)].
    """
    return ((-1.0) ** (G + D + T + 1)) / p[cell8_index(G, D, T)]


def w_gd(target: tuple[int, int], p: np.ndarray, G: int, D: int) -> float:
    """Panel DR weight G*D - p11 * 1{G=g, D=d} / p[(g,d)] for target (g,d).

    Identically zero for target (1,1).
    """
    g, d = target
    ind = 1.0 if (G == g and D == d) else 0.0
    return G * D - p[TREATED4] * ind / p[cell4_index(g, d)]


def omega_gdt(
    target: tuple[int, int, int], p: np.ndarray, G: int, D: int, T: int
) -> float:
    """RC DR weight G*D*T - p111 * 1{G=g, D=d, T=t} / p[(g,d,t)].

    Identically zero for target (1,1,1).
    """
    g, d, t = target
    ind = 1.0 if (G == g and D == d and T == t) else 0.0
    return G * D * T - p[TREATED8] * ind / p[cell8_index(g, d, t)]


def alpha_gdt(
    target: tuple[int, int, int],
    p4: np.ndarray,
    p_t1: float,
    G: int,
    D: int,
    T: int,
) -> float:
    """Time-share DR weight for the no-compositional-changes estimator.

    G*D - (1{T=t}/p(T=t)) * p11 * 1{G=g, D=d} / p[(g,d)], where
    p(T=t) is p_t1 for t=1 and 1-p_t1 for t=0. Unlike omega_gdt the
    treated-cell weight does not vanish.
    """
    g, d, t = target
    p_t = p_t1 if t == 1 else 1.0 - p_t1
    ind_t = 1.0 if T == t else 0.0
    ind_gd = 1.0 if (G == g and D == d) else 0.0
    return G * D - (ind_t / p_t) * p4[TREATED4] * ind_gd / p4[cell4_index(g, d)]


def product_probs8(p4: np.ndarray, p_t1: float) -> np.ndarray:
    """Build 8-cell probabilities as p4 x (1-p_t1, p_t1).

    This is the factorized propensity under time-invariant composition;
    phi0 of the result equals (T - p_t1)/(p_t1 (1-p_t1)) times rho0 of p4.
    """
    p4 = np.asarray(p4, dtype=float)
    out = np.empty(8, dtype=float)
    for g, d in PANEL_CELLS:
        out[cell8_index(g, d, 0)] = p4[cell4_index(g, d)] * (1.0 - p_t1)
        out[cell8_index(g, d, 1)] = p4[cell4_index(g, d)] * p_t1
    return out
